"""From complex IQ captures to labelled magnitude datapoints.

The chain is energy-based burst detection, fixed-length extraction around the
detected rising edge, sub-burst windowing and per-sample magnitude. Optional
normalisation and channel corruption (carrier jitter plus white noise) sit on
either side of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import stream

BURST_LENGTH = 1024
PRE_ROLL = 500
SUB_BURST = (500, 756)


class ExtractionError(ValueError):
    """The requested burst window runs off either end of the capture."""


@dataclass
class IqCapture:
    samples: np.ndarray = field(repr=False)
    sample_rate_hz: float = 100e6
    center_freq_hz: float = 2.4415e9
    capture_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex64)
        if self.samples.ndim != 1:
            raise ValueError("capture samples must be one-dimensional")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if not np.all(np.isfinite(self.samples.view(np.float32))):
            raise ValueError("capture contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class Datapoint:
    values: np.ndarray = field(repr=False)
    label: int | None = None
    provenance: tuple[str, int] = ("", 0)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("a datapoint needs a non-empty 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("datapoint values must be finite")


@dataclass(frozen=True)
class CorruptionSpec:
    """Per-burst carrier jitter (uniform in +/- ``jitter_max_hz``) and an SNR
    drawn uniformly in dB from ``snr_db_range``. An infinite range means no
    noise."""

    jitter_max_hz: float = 50e3
    snr_db_range: tuple[float, float] = (20.0, 30.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.snr_db_range
        if self.jitter_max_hz < 0:
            raise ValueError("jitter_max_hz must be >= 0")
        if lo > hi:
            raise ValueError(f"snr_db_range low ({lo}) exceeds high ({hi})")


# --------------------------------------------------------------------------
# detection and extraction
# --------------------------------------------------------------------------

def moving_power(samples, window: int) -> np.ndarray:
    """Causal moving average of |x|^2 over ``window`` samples (zero history)."""
    p = np.abs(np.asarray(samples, dtype=np.complex128)) ** 2
    return np.convolve(p, np.full(window, 1.0 / window))[:p.size]


def noise_floor(samples, window: int = 64, floor_window: int = 4096) -> np.ndarray:
    """Per-sample noise floor: median block power over the trailing ``floor_window``.

    Power is averaged over blocks of ``window`` samples; the floor of a block
    is the median of the preceding ``floor_window // window`` block means
    (the first block stands in for missing history).
    """
    p = np.abs(np.asarray(samples, dtype=np.complex128)) ** 2
    n_blocks = -(-p.size // window)
    padded = np.zeros(n_blocks * window)
    padded[:p.size] = p
    counts = np.full(n_blocks, float(window))
    counts[-1] = p.size - (n_blocks - 1) * window
    block_mean = padded.reshape(n_blocks, window).sum(axis=1) / counts
    hist = max(1, floor_window // window)
    history = np.concatenate((np.full(hist, block_mean[0]), block_mean[:-1]))
    floor = np.median(sliding_window_view(history, hist), axis=1)
    return np.repeat(floor, window)[:p.size]


def detect_bursts(capture, window: int = 64, threshold_factor: float = 4.0,
                  floor_window: int = 4096, merge_radius: int = BURST_LENGTH) -> list[int]:
    """Rising-edge indices where moving power first exceeds ``threshold_factor``
    times the trailing noise floor. Edges within ``merge_radius`` of the last
    kept edge are dropped."""
    samples = getattr(capture, "samples", capture)
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("cannot detect bursts in an empty capture")
    if window < 1:
        raise ValueError("window must be >= 1")
    if not threshold_factor > 1:
        raise ValueError("threshold_factor must be > 1")
    ma = moving_power(samples, window)
    floor = noise_floor(samples, window, floor_window)
    floor = np.maximum(floor, np.finfo(np.float64).eps * max(float(ma.max()), 1e-300))
    above = ma > threshold_factor * floor
    rising = np.flatnonzero(above & ~np.concatenate(([False], above[:-1])))
    edges: list[int] = []
    for idx in rising:
        if not edges or idx - edges[-1] >= merge_radius:
            edges.append(int(idx))
    return edges


def extract_datapoint(capture, edge: int, k: int = BURST_LENGTH, pre_roll: int = PRE_ROLL) -> np.ndarray:
    """The ``k`` samples starting ``pre_roll`` before ``edge``."""
    samples = np.asarray(getattr(capture, "samples", capture))
    start = edge - pre_roll
    if start < 0 or start + k > samples.shape[0]:
        raise ExtractionError(
            f"burst window [{start}, {start + k}) outside capture of {samples.shape[0]} samples")
    return samples[start:start + k].copy()


def sub_burst(burst, start: int = SUB_BURST[0], end: int = SUB_BURST[1]) -> np.ndarray:
    burst = np.asarray(burst)
    if not 0 <= start < end <= burst.shape[-1]:
        raise ValueError(f"invalid sub-burst [{start}, {end}) of a {burst.shape[-1]}-sample burst")
    return burst[..., start:end]


def magnitude(burst) -> np.ndarray:
    """Per-sample magnitude sqrt(I^2 + Q^2)."""
    return np.abs(np.asarray(burst, dtype=np.complex128))


def normalize(data, mode: str = "per_datapoint", scale: float | None = None):
    """Divide datapoints by their largest sample, or all by one global maximum.

    Works on a single vector, a (B, L) batch or a :class:`Datapoint`. Returns
    ``(normalized, zero)`` where ``zero`` flags all-zero rows, which are
    passed through untouched. ``scale`` overrides the global maximum.
    """
    if isinstance(data, Datapoint):
        values, zero = normalize(data.values, mode, scale)
        return Datapoint(values, data.label, data.provenance), bool(zero)
    x = np.asarray(data, dtype=np.float64)
    if mode == "none":
        return x.copy(), np.zeros(x.shape[:-1], dtype=bool)
    if mode == "per_datapoint":
        peak = np.max(np.abs(x), axis=-1, keepdims=True)
    elif mode == "global":
        peak = np.full(x.shape[:-1] + (1,), float(np.max(np.abs(x))) if scale is None else scale)
    else:
        raise ValueError(f"unknown normalisation mode {mode!r}")
    zero = peak[..., 0] == 0
    out = np.divide(x, peak, out=x.copy(), where=peak != 0)
    return out, zero


# --------------------------------------------------------------------------
# corruption
# --------------------------------------------------------------------------

def corruption_draws(spec: CorruptionSpec, index: int = 0) -> tuple[float, float]:
    """The (frequency offset in Hz, SNR in dB) used for burst ``index``."""
    gen = stream(spec.seed, "corrupt", int(index))
    df = gen.uniform(-spec.jitter_max_hz, spec.jitter_max_hz) if spec.jitter_max_hz > 0 else 0.0
    lo, hi = spec.snr_db_range
    snr = lo if lo == hi else gen.uniform(lo, hi)
    return float(df), float(snr)


def corrupt(burst, spec: CorruptionSpec, sample_rate_hz: float, index: int = 0) -> np.ndarray:
    """Rotate by a random carrier offset, then add circular white noise at a random SNR."""
    z = np.asarray(burst, dtype=np.complex128)
    df, snr_db = corruption_draws(spec, index)
    t = np.arange(z.shape[-1])
    out = z * np.exp(2j * np.pi * df * t / sample_rate_hz)
    if np.isfinite(snr_db):
        power = np.mean(np.abs(z) ** 2)
        sigma = np.sqrt(power / 10 ** (snr_db / 10) / 2)
        gen = stream(spec.seed, "corrupt-noise", int(index))
        out = out + sigma * (gen.standard_normal(z.shape) + 1j * gen.standard_normal(z.shape))
    return out


# --------------------------------------------------------------------------
# saliency
# --------------------------------------------------------------------------

@dataclass
class SaliencyMap:
    """Accuracy per (start, end) sub-burst window; NaN where the cell is not evaluated."""

    grid: np.ndarray
    accuracy: np.ndarray = field(repr=False)
    best: tuple[int, int] = (0, 0)
    best_accuracy: float = float("nan")


def saliency_sweep(bursts, labels, grid_step: int, train_fn, min_window: int = 64,
                   start_range: tuple[int, int] | None = None,
                   end_range: tuple[int, int] | None = None) -> SaliencyMap:
    """Evaluate ``train_fn(magnitudes, labels) -> accuracy`` on every window of the grid.

    The grid runs over ``0, grid_step, 2*grid_step, ...`` up to the burst
    length (inclusive). The best cell prefers higher accuracy, then the
    shorter window, then the earlier start.
    """
    bursts = np.asarray(bursts)
    labels = np.asarray(labels)
    if grid_step < 1:
        raise ValueError("grid_step must be >= 1")
    if np.unique(labels).size < 2:
        raise ValueError("saliency sweep needs at least two classes")
    k = bursts.shape[-1]
    grid = np.arange(0, k + 1, grid_step)
    acc = np.full((grid.size, grid.size), np.nan)
    s_lo, s_hi = start_range or (0, k)
    e_lo, e_hi = end_range or (0, k)
    best, best_key = None, None
    mags = magnitude(bursts)
    for i, start in enumerate(grid):
        if not s_lo <= start <= s_hi:
            continue
        for j, end in enumerate(grid):
            if end - start < min_window or not e_lo <= end <= e_hi:
                continue
            a = float(train_fn(mags[:, start:end], labels))
            acc[i, j] = a
            key = (-a, end - start, start)
            if best_key is None or key < best_key:
                best, best_key = (int(start), int(end)), key
    if best is None:
        raise ValueError("no grid cell satisfies the minimum window")
    return SaliencyMap(grid, acc, best, -best_key[0])
