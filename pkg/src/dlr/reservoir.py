"""Software emulation of a delay-loop reservoir.

A datapoint of ``L`` real samples is serialised; every sample is spread over
the ``N`` chips of a random mask, each chip passes through the nonlinear node
together with the delayed loop state of the same virtual node, and a short
causal filter couples neighbouring virtual nodes. The state of the ``N``
virtual nodes after the last sample is the feature vector handed to the
readout.

Single loops, split loops (two half-datapoint loops whose final states are
averaged) and two stacked loops are supported. All heavy lifting happens in
:mod:`dlr.kernels`.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .rng import stream

NONLINEARITIES = {"sin_squared": kernels.SIN_SQUARED, "tanh": kernels.TANH}


@dataclass(frozen=True)
class ReservoirConfig:
    """Loop hyperparameters.

    ``input_gain`` scales the spread input chips and ``feedback_gain`` the
    delayed node state, both inside the nonlinearity. ``filter_taps`` and
    ``filter_time_constant`` shape the node-coupling filter (in chips).
    ``accumulate_prior_state`` adds the previous round-trip value of each node
    on top of the filtered activation instead of replacing it.
    """

    n_nodes: int = 600
    input_gain: float = 0.5
    feedback_gain: float = 0.5
    nonlinearity: str = "sin_squared"
    filter_taps: int = 5
    filter_time_constant: float = 1.0
    accumulate_prior_state: bool = False
    split: bool = False
    layers: int = 1
    layer2_n_nodes: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError(f"n_nodes must be >= 1, got {self.n_nodes}")
        if self.filter_taps < 1:
            raise ValueError(f"filter_taps must be >= 1, got {self.filter_taps}")
        if self.filter_taps > self.n_nodes:
            raise ValueError(
                f"filter_taps ({self.filter_taps}) must not exceed n_nodes ({self.n_nodes})")
        if not self.filter_time_constant > 0:
            raise ValueError("filter_time_constant must be > 0")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.layers not in (1, 2):
            raise ValueError(f"layers must be 1 or 2, got {self.layers}")
        if self.layer2_n_nodes is not None:
            if self.layer2_n_nodes < 1:
                raise ValueError("layer2_n_nodes must be >= 1")
            if self.filter_taps > self.layer2_n_nodes:
                raise ValueError("filter_taps must not exceed layer2_n_nodes")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def state_size(self) -> int:
        if self.layers == 2:
            return self.layer2_n_nodes or self.n_nodes
        return self.n_nodes

    def separable_for(self, length: int) -> bool:
        """Whether the loop is larger than the (half-)datapoint it sees."""
        if self.split:
            return self.n_nodes > length / 2
        return self.n_nodes > length

    def replace(self, **changes) -> "ReservoirConfig":
        return ReservoirConfig(**{**asdict(self), **changes})


@dataclass(frozen=True)
class SpreadMask:
    chips: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        chips = np.array(self.chips, dtype=np.float64)
        chips.flags.writeable = False
        object.__setattr__(self, "chips", chips)

    def __len__(self):
        return self.chips.shape[0]


@dataclass(frozen=True)
class FilterKernel:
    taps: np.ndarray = field(repr=False)

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)

    def __len__(self):
        return self.taps.shape[0]


def make_mask(n_nodes: int, seed: int, layer: int = 1) -> SpreadMask:
    """Spreading mask of ``n_nodes`` chips drawn uniformly from (-1, 1).

    Chips come from the Philox sub-stream ``(seed, "mask", layer)``; a draw
    that lands exactly on -1 is nudged into the open interval.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    chips = stream(seed, "mask", layer).uniform(-1.0, 1.0, size=n_nodes)
    chips = np.maximum(chips, np.nextafter(-1.0, 0.0))
    return SpreadMask(chips, int(seed))


def make_filter(taps: int, time_constant: float) -> FilterKernel:
    """Truncated causal exponential ``exp(-j / T)``, normalised to unit sum."""
    if taps < 1:
        raise ValueError(f"filter taps must be >= 1, got {taps}")
    if not time_constant > 0:
        raise ValueError(f"time constant must be > 0, got {time_constant}")
    h = np.exp(-np.arange(taps) / time_constant)
    return FilterKernel(h / h.sum())


def masks_for(config: ReservoirConfig) -> tuple[SpreadMask, ...]:
    """The mask(s) a config needs: one per layer, from per-layer sub-streams."""
    masks = (make_mask(config.n_nodes, config.seed, layer=1),)
    if config.layers == 2:
        masks += (make_mask(config.state_size, config.seed, layer=2),)
    return masks


def filter_for(config: ReservoirConfig) -> FilterKernel:
    return make_filter(config.filter_taps, config.filter_time_constant)


def _values(datapoint) -> np.ndarray:
    values = np.asarray(getattr(datapoint, "values", datapoint), dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("a datapoint must be one-dimensional")
    if values.size < 1:
        raise ValueError("a datapoint needs at least one sample")
    if not np.all(np.isfinite(values)):
        raise ValueError("datapoint contains non-finite samples")
    return values


def _check_mask(mask: SpreadMask, n: int, what: str = "mask"):
    if len(mask) != n:
        raise ValueError(f"{what} has {len(mask)} chips but the loop has {n} nodes")


def _loop_args(config: ReservoirConfig, filt: FilterKernel):
    return (filt.taps, config.input_gain, config.feedback_gain,
            NONLINEARITIES[config.nonlinearity], config.accumulate_prior_state)


def run_loop(datapoint, config: ReservoirConfig, mask: SpreadMask, filt: FilterKernel,
             backend: str | None = None) -> np.ndarray:
    """Final state of one cold-started loop fed with a whole datapoint."""
    values = _values(datapoint)
    _check_mask(mask, config.n_nodes)
    return kernels.loop_states(values[None, :], mask.chips, *_loop_args(config, filt),
                               backend=backend)[0]


def split_halves(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First half gets the extra sample when the length is odd."""
    cut = math.ceil(values.shape[-1] / 2)
    return values[..., :cut], values[..., cut:]


def run_split_loop(datapoint, config: ReservoirConfig, mask: SpreadMask, filt: FilterKernel,
                   backend: str | None = None) -> np.ndarray:
    """Mean of the final states of two loops, one per datapoint half."""
    values = _values(datapoint)
    if values.size < 2:
        raise ValueError("split loop needs a datapoint of at least 2 samples")
    first, second = split_halves(values)
    return 0.5 * (run_loop(first, config, mask, filt, backend)
                  + run_loop(second, config, mask, filt, backend))


def run_stacked_loops(datapoint, config: ReservoirConfig, masks, filt: FilterKernel,
                      backend: str | None = None) -> np.ndarray:
    """Final state of the second of two stacked loops.

    The second loop is driven chip by chip with the first loop's node stream,
    delayed by one chip and re-spread by its own mask. With ``split`` set,
    each half-datapoint gets its own two-layer chain and the results are
    averaged.
    """
    if config.layers != 2:
        raise ValueError(f"stacked loops need layers=2, got {config.layers}")
    values = _values(datapoint)
    return _stacked_batch(values[None, :], config, masks, filt, backend)[0]


def _stacked_batch(u, config, masks, filt, backend):
    mask1, mask2 = masks
    _check_mask(mask1, config.n_nodes, "layer-1 mask")
    _check_mask(mask2, config.state_size, "layer-2 mask")
    args = _loop_args(config, filt)
    if not config.split:
        return kernels.stacked_states(u, mask1.chips, mask2.chips, *args, backend=backend)
    if u.shape[1] < 2:
        raise ValueError("split loop needs a datapoint of at least 2 samples")
    first, second = split_halves(u)
    return 0.5 * (kernels.stacked_states(first, mask1.chips, mask2.chips, *args, backend=backend)
                  + kernels.stacked_states(second, mask1.chips, mask2.chips, *args,
                                           backend=backend))


def _state_batch(u, config, masks, filt, backend):
    if config.layers == 2:
        return _stacked_batch(u, config, masks, filt, backend)
    mask = masks[0]
    _check_mask(mask, config.n_nodes)
    args = _loop_args(config, filt)
    if not config.split:
        return kernels.loop_states(u, mask.chips, *args, backend=backend)
    if u.shape[1] < 2:
        raise ValueError("split loop needs a datapoint of at least 2 samples")
    first, second = split_halves(u)
    return 0.5 * (kernels.loop_states(first, mask.chips, *args, backend=backend)
                  + kernels.loop_states(second, mask.chips, *args, backend=backend))


def compute_state(datapoint, config: ReservoirConfig, masks=None, filt=None,
                  backend: str | None = None) -> np.ndarray:
    """State of one datapoint under whatever loop topology ``config`` selects."""
    values = _values(datapoint)
    return compute_states(values[None, :], config, masks, filt, backend=backend)[0]


def compute_states(data, config: ReservoirConfig, masks=None, filt=None, workers: int = 1,
                   chunk: int = 256, backend: str | None = None) -> np.ndarray:
    """Stack the final reservoir states of many datapoints into a (B, N) matrix.

    Datapoints are independent, so they are processed in fixed chunks that
    may run on ``workers`` threads; rows always come back in input order and
    do not depend on the worker count.
    """
    u = np.ascontiguousarray(data, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("data must be a (datapoints, samples) array")
    if u.shape[1] < 1:
        raise ValueError("datapoints need at least one sample")
    if not np.all(np.isfinite(u)):
        raise ValueError("data contains non-finite samples")
    masks = masks if masks is not None else masks_for(config)
    filt = filt if filt is not None else filter_for(config)
    starts = range(0, u.shape[0], chunk)
    if u.shape[0] == 0:
        return np.zeros((0, config.state_size))

    def work(c0):
        return _state_batch(u[c0:c0 + chunk], config, masks, filt, backend)

    if workers <= 1:
        parts = [work(c0) for c0 in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, starts))
    return np.concatenate(parts, axis=0)
