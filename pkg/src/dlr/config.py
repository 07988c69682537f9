"""Flat ``key = value`` run configuration.

One file drives every CLI subcommand. Lines are ``key = value``; ``#`` and
``;`` start comments; list-valued keys take comma-separated values. Unknown
keys are rejected. See ``README.md`` for the full key table.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import get_type_hints

from .readout import DEFAULT_LAMBDA_GRID
from .reservoir import ReservoirConfig
from .signal import SUB_BURST, CorruptionSpec
from .synth import MackeyGlassSpec, SynthSpec


@dataclass(frozen=True)
class RunConfig:
    # master seed; masks, splits, synthesis and corruption use named sub-streams of it
    seed: int = 0

    # reservoir
    n_nodes: int = 600
    input_gain: float = 0.5
    feedback_gain: float = 0.5
    nonlinearity: str = "sin_squared"
    filter_taps: int = 5
    filter_time_constant: float = 1.0
    accumulate_prior_state: bool = False
    split: bool = False
    layers: int = 1
    layer2_n_nodes: int = 0

    # readout and training
    ridge_lambda: str = "auto"
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    train_fraction: float = 0.8
    normalization: str = "none"
    readout_bias: bool = False
    workers: int = 1

    # corruption
    jitter_max_hz: float = 50e3
    snr_db_low: float = 20.0
    snr_db_high: float = 30.0

    # synthetic data
    num_devices: int = 20
    bursts_per_device: int = 500
    payload: str = "fixed_preamble"
    capture_snr_db: float = 22.0
    timing_jitter: float = 5.0
    window_start: int = SUB_BURST[0]
    window_end: int = SUB_BURST[1]
    dataset_normalization: str = "global"

    # sweep grid (empty list: keep the base value)
    grid_input_gain: tuple = ()
    grid_feedback_gain: tuple = ()
    grid_n_nodes: tuple = ()
    grid_filter_taps: tuple = ()
    grid_lambda: tuple = ()
    grid_split: tuple = ()
    grid_layers: tuple = ()
    sweep_train_per_class: int = 100

    # saliency sweep
    saliency_step: int = 64
    saliency_min_window: int = 64
    saliency_n_nodes: int = 150

    # Mackey-Glass benchmark
    mg_beta: float = 0.2
    mg_gamma: float = 0.1
    mg_exponent: float = 10.0
    mg_tau: float = 17.0
    mg_step: float = 0.1
    mg_sample_every: int = 10
    mg_window: int = 16
    mg_train: int = 2000
    mg_test: int = 500
    mg_n_nodes: int = 400

    def __post_init__(self):
        if self.normalization not in ("none", "per_datapoint"):
            raise ValueError("normalization must be none or per_datapoint")
        if self.dataset_normalization not in ("none", "per_datapoint", "global"):
            raise ValueError("dataset_normalization must be none, per_datapoint or global")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.ridge_lambda != "auto":
            if float(self.ridge_lambda) < 0:
                raise ValueError("ridge_lambda must be 'auto' or a non-negative number")
        self.reservoir()  # validates the loop fields

    def reservoir(self) -> ReservoirConfig:
        return ReservoirConfig(
            n_nodes=self.n_nodes, input_gain=self.input_gain, feedback_gain=self.feedback_gain,
            nonlinearity=self.nonlinearity, filter_taps=self.filter_taps,
            filter_time_constant=self.filter_time_constant,
            accumulate_prior_state=self.accumulate_prior_state, split=self.split,
            layers=self.layers, layer2_n_nodes=self.layer2_n_nodes or None, seed=self.seed)

    def corruption(self, low: float | None = None, high: float | None = None) -> CorruptionSpec:
        return CorruptionSpec(self.jitter_max_hz,
                              (self.snr_db_low if low is None else low,
                               self.snr_db_high if high is None else high),
                              self.seed)

    def synth(self) -> SynthSpec:
        return SynthSpec(num_devices=self.num_devices, bursts_per_device=self.bursts_per_device,
                         payload=self.payload, seed=self.seed,
                         capture_snr_db=self.capture_snr_db, timing_jitter=self.timing_jitter)

    def mackey(self, length: int) -> MackeyGlassSpec:
        return MackeyGlassSpec(beta=self.mg_beta, gamma=self.mg_gamma, exponent=self.mg_exponent,
                               delay_tau=self.mg_tau, step=self.mg_step, length=length,
                               seed=self.seed, sample_every=self.mg_sample_every)

    @property
    def lam(self) -> float | None:
        return None if self.ridge_lambda == "auto" else float(self.ridge_lambda)

    def replace(self, **changes) -> "RunConfig":
        return RunConfig(**{**asdict(self), **changes})

    def digest(self) -> bytes:
        """16-byte fingerprint of everything that shapes the readout's input."""
        res = asdict(self.reservoir())
        res["normalization"] = self.normalization
        res["readout_bias"] = self.readout_bias
        text = "\n".join(f"{k}={res[k]!r}" for k in sorted(res))
        return hashlib.sha256(text.encode()).digest()[:16]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {_format(value)}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_scalar(text: str, kind):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text, 0)
    if kind is float:
        return float(text)
    return text


def _parse_list(text: str) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    out = []
    for item in items:
        low = item.lower()
        if low in ("true", "false"):
            out.append(low == "true")
            continue
        try:
            out.append(int(item, 0))
        except ValueError:
            out.append(float(item))
    return tuple(out)


def parse_config(text: str, **overrides) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    parser.optionxform = str
    parser.read_string("[run]\n" + text)
    hints = get_type_hints(RunConfig)
    values = {}
    for key, raw in parser["run"].items():
        if key not in hints:
            raise ValueError(f"unknown config key {key!r}")
        kind = hints[key]
        values[key] = _parse_list(raw) if kind is tuple else _parse_scalar(raw, kind)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path=None, **overrides) -> RunConfig:
    text = Path(path).read_text() if path else ""
    return parse_config(text, **overrides)
