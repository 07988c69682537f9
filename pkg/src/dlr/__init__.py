"""Delay-loop reservoir computing: loop emulation, ridge readout, RF emitter pipeline."""

from ._accel import BACKEND
from .readout import ReadoutWeights, infer, one_hot, ridge_train, select_lambda
from .reservoir import (
    FilterKernel,
    ReservoirConfig,
    SpreadMask,
    compute_states,
    make_filter,
    make_mask,
    run_loop,
    run_split_loop,
    run_stacked_loops,
)

__all__ = [
    "BACKEND",
    "FilterKernel",
    "ReadoutWeights",
    "ReservoirConfig",
    "SpreadMask",
    "compute_states",
    "infer",
    "make_filter",
    "make_mask",
    "one_hot",
    "ridge_train",
    "run_loop",
    "run_split_loop",
    "run_stacked_loops",
    "select_lambda",
]
