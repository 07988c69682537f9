"""Synthetic multi-emitter IQ data and Mackey-Glass series.

Each emitter is a transmitter with its own hardware quirks: IQ gain and
phase imbalance, an odd-order amplifier polynomial, a carrier frequency
offset and a power-on ramp. Bursts of a pulse-shaped QPSK preamble pass
through those impairments, are dropped into noisy captures and come back
out through the detection/extraction pipeline in :mod:`dlr.signal`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import signal as sig
from ._accel import njit
from .rng import derive_seed, stream

PREAMBLE_SEED = 0x5EED_B0A7
SAMPLES_PER_SYMBOL = 5
PULSE_SPAN = 6  # symbols either side of the pulse peak

# Impairment draw ranges.
CFO_MAX_HZ = 25e3
GAIN_IMBALANCE_MAX_DB = 1.0
PHASE_SKEW_MAX_RAD = 0.05
A1_RANGE = (0.85, 1.15)
A3_RANGE = (-0.15, -0.02)
A5_RANGE = (-0.06, 0.0)
RAMP_RANGE = (50, 300)
MIN_SEPARATION = 0.1


@dataclass(frozen=True)
class EmitterModel:
    device_id: int
    cfo_hz: float = 0.0
    iq_gain_imbalance_db: float = 0.0
    iq_phase_skew_rad: float = 0.0
    pa_coeffs: tuple[float, float, float] = (1.0, 0.0, 0.0)
    ramp_samples: int = 0

    def __post_init__(self):
        a1, a3, a5 = self.pa_coeffs
        if not a1 > 0:
            raise ValueError("amplifier gain a1 must be positive")
        r = np.linspace(0.0, 1.0, 1001)
        if np.any(a1 + 3 * a3 * r**2 + 5 * a5 * r**4 <= 0):
            raise ValueError(f"amplifier polynomial {self.pa_coeffs} is not monotone on [0, 1]")
        if self.ramp_samples < 0:
            raise ValueError("ramp_samples must be >= 0")

    def parameter_vector(self) -> np.ndarray:
        """Impairments scaled to roughly unit ranges, for separation checks."""
        a1, a3, a5 = self.pa_coeffs
        return np.array([
            self.cfo_hz / (2 * CFO_MAX_HZ),
            self.iq_gain_imbalance_db / (2 * GAIN_IMBALANCE_MAX_DB),
            self.iq_phase_skew_rad / (2 * PHASE_SKEW_MAX_RAD),
            a1 / (A1_RANGE[1] - A1_RANGE[0]),
            a3 / (A3_RANGE[1] - A3_RANGE[0]),
            a5 / (A5_RANGE[1] - A5_RANGE[0]),
            self.ramp_samples / (RAMP_RANGE[1] - RAMP_RANGE[0]),
        ])


@dataclass(frozen=True)
class SynthSpec:
    """Dataset shape. ``capture_snr_db`` sets the receiver noise floor of the
    captures and ``timing_jitter`` the spread (in samples) of each burst's
    random sampling offset."""

    num_devices: int = 20
    bursts_per_device: int = 500
    payload: str = "fixed_preamble"
    seed: int = 0
    sample_rate_hz: float = 100e6
    burst_samples: int = 1024
    capture_snr_db: float = 22.0
    timing_jitter: float = 5.0
    gap_range: tuple[int, int] = (3000, 5000)

    def __post_init__(self):
        if self.num_devices < 2:
            raise ValueError("need at least two devices")
        if self.bursts_per_device < 1:
            raise ValueError("need at least one burst per device")
        if self.payload not in ("fixed_preamble", "random_payload"):
            raise ValueError(f"unknown payload mode {self.payload!r}")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")


@dataclass(frozen=True)
class MackeyGlassSpec:
    """dx/dt = beta x(t - tau) / (1 + x(t - tau)^n) - gamma x(t).

    ``length`` samples are returned, one every ``sample_every`` integration
    steps, after ``discard`` transient steps. ``seed`` is carried for run
    bookkeeping only; the history is the constant ``history``.
    """

    beta: float = 0.2
    gamma: float = 0.1
    exponent: float = 10.0
    delay_tau: float = 17.0
    step: float = 0.1
    length: int = 3000
    seed: int = 0
    sample_every: int = 10
    discard: int = 1000
    history: float = 1.2

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0 or self.exponent <= 0 or self.delay_tau <= 0:
            raise ValueError("Mackey-Glass constants must be positive")
        if not self.step > 0 or self.sample_every < 1 or self.length < 0 or self.discard < 0:
            raise ValueError("invalid Mackey-Glass sampling parameters")


# --------------------------------------------------------------------------
# emitters
# --------------------------------------------------------------------------

def _draw_emitter(seed: int, device: int, attempt: int) -> EmitterModel:
    g = stream(seed, "emitter", device, attempt)
    return EmitterModel(
        device_id=device,
        cfo_hz=float(g.uniform(-CFO_MAX_HZ, CFO_MAX_HZ)),
        iq_gain_imbalance_db=float(g.uniform(-GAIN_IMBALANCE_MAX_DB, GAIN_IMBALANCE_MAX_DB)),
        iq_phase_skew_rad=float(g.uniform(-PHASE_SKEW_MAX_RAD, PHASE_SKEW_MAX_RAD)),
        pa_coeffs=(float(g.uniform(*A1_RANGE)), float(g.uniform(*A3_RANGE)),
                   float(g.uniform(*A5_RANGE))),
        ramp_samples=int(g.integers(RAMP_RANGE[0], RAMP_RANGE[1], endpoint=True)),
    )


def gen_emitters(spec: SynthSpec, min_separation: float = MIN_SEPARATION,
                 max_attempts: int = 200) -> list[EmitterModel]:
    """Draw ``spec.num_devices`` emitters, re-drawing any that land closer
    than ``min_separation`` (scaled parameter distance) to an earlier one."""
    models: list[EmitterModel] = []
    for device in range(spec.num_devices):
        for attempt in range(max_attempts):
            cand = _draw_emitter(spec.seed, device, attempt)
            v = cand.parameter_vector()
            if all(np.linalg.norm(v - m.parameter_vector()) >= min_separation for m in models):
                models.append(cand)
                break
        else:
            raise ValueError(
                f"cannot place {spec.num_devices} emitters {min_separation} apart; "
                f"managed {len(models)}")
    return models


# --------------------------------------------------------------------------
# waveforms
# --------------------------------------------------------------------------

def _pulse(offset: float) -> np.ndarray:
    """Hann-windowed sinc taps sampled at ``offset`` samples from the grid."""
    sps = SAMPLES_PER_SYMBOL
    half = PULSE_SPAN * sps
    t = np.arange(-half, half + 1) - offset
    return np.sinc(t / sps) * (0.5 + 0.5 * np.cos(np.pi * np.clip(t / (half + 1), -1, 1)))


# Worst-case |sum of QPSK symbols times pulse taps|; keeps clean peaks <= 1.
_PEAK_BOUND = max(
    np.abs(_pulse(o)[phase::SAMPLES_PER_SYMBOL]).sum()
    for o in np.linspace(0, 1, 11) for phase in range(SAMPLES_PER_SYMBOL))


def clean_waveform(payload_seed: int, length: int, payload: str = "fixed_preamble",
                   timing_jitter: float = 1.0) -> np.ndarray:
    """Pulse-shaped QPSK at ``SAMPLES_PER_SYMBOL`` samples per symbol.

    The symbols are a fixed preamble (or drawn from ``payload_seed`` for
    random payloads); ``payload_seed`` always sets the burst's sampling
    offset, uniform over ``timing_jitter`` samples.
    """
    sps = SAMPLES_PER_SYMBOL
    n_sym = length // sps + 2 * PULSE_SPAN + 2
    sym_gen = stream(PREAMBLE_SEED if payload == "fixed_preamble" else payload_seed, "symbols")
    bits = sym_gen.integers(0, 4, size=n_sym)
    symbols = np.exp(1j * (np.pi / 4 + np.pi / 2 * bits))
    offset = float(stream(payload_seed, "timing").uniform(0.0, timing_jitter)) if timing_jitter else 0.0
    up = np.zeros(n_sym * sps, dtype=np.complex128)
    up[::sps] = symbols
    wave = np.convolve(up, _pulse(offset))
    start = PULSE_SPAN * sps * 2
    return wave[start:start + length] / _PEAK_BOUND


def apply_iq_imbalance(x, gain_db: float, skew_rad: float) -> np.ndarray:
    g = 10 ** (gain_db / 20)
    mu = (1 + g * np.exp(-1j * skew_rad)) / 2
    nu = (1 - g * np.exp(1j * skew_rad)) / 2
    return mu * x + nu * np.conj(x)


def apply_amplifier(x, coeffs) -> np.ndarray:
    a1, a3, a5 = coeffs
    r = np.abs(x)
    return x * (a1 + a3 * r**2 + a5 * r**4)


def ramp_envelope(length: int, ramp: int) -> np.ndarray:
    env = np.ones(length)
    if ramp > 0:
        n = min(ramp, length)
        env[:n] = 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / ramp)
    return env


def synth_burst(model: EmitterModel, payload_seed: int, length: int,
                payload: str = "fixed_preamble", timing_jitter: float = 1.0,
                sample_rate_hz: float = 100e6) -> np.ndarray:
    """One burst: IQ imbalance, amplifier, carrier offset, then the power-on ramp."""
    if length < model.ramp_samples:
        raise ValueError(f"burst length {length} shorter than the {model.ramp_samples}-sample ramp")
    x = clean_waveform(payload_seed, length, payload, timing_jitter)
    x = apply_iq_imbalance(x, model.iq_gain_imbalance_db, model.iq_phase_skew_rad)
    x = apply_amplifier(x, model.pa_coeffs)
    x = x * np.exp(2j * np.pi * model.cfo_hz * np.arange(length) / sample_rate_hz)
    return x * ramp_envelope(length, model.ramp_samples)


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------

@dataclass
class SynthDataset:
    data: np.ndarray = field(repr=False)          # (B, L) magnitudes
    labels: np.ndarray = field(repr=False)        # (B,) zero-based device ids
    captures: list = field(repr=False, default_factory=list)
    emitters: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def _noise(seed, device, size, power):
    g = stream(seed, "capture-noise", device)
    return math.sqrt(power / 2) * (g.standard_normal(size) + 1j * g.standard_normal(size))


def build_capture(spec: SynthSpec, model: EmitterModel) -> tuple[sig.IqCapture, list[int]]:
    """Noise-floor capture with this device's bursts embedded; returns the
    capture and the planted burst start indices."""
    g = stream(spec.seed, "gaps", model.device_id)
    gaps = g.integers(spec.gap_range[0], spec.gap_range[1], endpoint=True,
                      size=spec.bursts_per_device + 1)
    total = int(gaps.sum()) + spec.bursts_per_device * spec.burst_samples
    signal_power = float(np.mean(np.abs(clean_waveform(PREAMBLE_SEED, 4096, timing_jitter=0)) ** 2))
    noise_power = signal_power / 10 ** (spec.capture_snr_db / 10)
    samples = _noise(spec.seed, model.device_id, total, noise_power)
    starts = []
    pos = int(gaps[0])
    for i in range(spec.bursts_per_device):
        burst = synth_burst(model, derive_seed(spec.seed, "burst", model.device_id, i),
                            spec.burst_samples, spec.payload, spec.timing_jitter,
                            spec.sample_rate_hz)
        samples[pos:pos + spec.burst_samples] += burst
        starts.append(pos)
        pos += spec.burst_samples + int(gaps[i + 1])
    capture = sig.IqCapture(samples.astype(np.complex64), spec.sample_rate_hz,
                            capture_id=f"device-{model.device_id:02d}")
    return capture, starts


def bursts_from_capture(capture, **detect_kwargs) -> tuple[list[np.ndarray], list[int], list[str]]:
    """Detect and extract every k=1024 burst; failures come back as messages."""
    bursts, edges, failures = [], [], []
    for edge in sig.detect_bursts(capture, **detect_kwargs):
        try:
            bursts.append(sig.extract_datapoint(capture, edge))
            edges.append(edge)
        except sig.ExtractionError as exc:
            failures.append(f"{capture.capture_id}@{edge}: {exc}")
    return bursts, edges, failures


def gen_dataset(spec: SynthSpec, corruption: sig.CorruptionSpec | None = None,
                window: tuple[int, int] = sig.SUB_BURST, normalization: str = "global",
                keep_bursts: bool = False) -> SynthDataset:
    """Captures for every device, pushed through detect, extract, (corrupt),
    sub-burst and magnitude. Rows are in device order, then capture order."""
    emitters = gen_emitters(spec)
    bursts, labels, provenance, failures, captures = [], [], [], [], []
    for model in emitters:
        capture, planted = build_capture(spec, model)
        captures.append(capture)
        found, edges, fails = bursts_from_capture(capture)
        failures += fails
        if len(edges) != len(planted):
            failures.append(f"{capture.capture_id}: detected {len(edges)} bursts, "
                            f"planted {len(planted)}")
        bursts += found
        labels += [model.device_id] * len(found)
        provenance += [(capture.capture_id, edge) for edge in edges]
    ds = datapoints_from_bursts(bursts, labels, corruption, spec.sample_rate_hz, window,
                                normalization, keep_bursts)
    ds.captures, ds.emitters, ds.provenance = captures, emitters, provenance
    ds.manifest.update(synth=asdict(spec), failures=failures,
                       emitters=[asdict(m) for m in emitters])
    return ds


def datapoints_from_bursts(bursts, labels, corruption: sig.CorruptionSpec | None = None,
                           sample_rate_hz: float = 100e6,
                           window: tuple[int, int] = sig.SUB_BURST,
                           normalization: str = "global", keep_bursts: bool = False) -> SynthDataset:
    """The per-burst tail of the pipeline: (corrupt), sub-burst, magnitude,
    normalise. Burst ``i`` uses corruption draw ``i``."""
    rows, kept = [], []
    for i, burst in enumerate(bursts):
        if corruption is not None:
            burst = sig.corrupt(burst, corruption, sample_rate_hz, index=i)
        if keep_bursts:
            kept.append(burst)
        rows.append(sig.magnitude(sig.sub_burst(burst, *window)))
    data = np.array(rows).reshape(len(rows), window[1] - window[0])
    data, _ = sig.normalize(data, normalization)
    manifest = {
        "corruption": asdict(corruption) if corruption is not None else None,
        "window": list(window),
        "normalization": normalization,
        "datapoints": len(rows),
    }
    ds = SynthDataset(data.astype(np.float32), np.array(labels, dtype=np.uint16), manifest=manifest)
    if keep_bursts:
        ds.bursts = np.array(kept)
    return ds


# --------------------------------------------------------------------------
# Mackey-Glass
# --------------------------------------------------------------------------

@njit(cache=True)
def _mg_rhs(x, xd, beta, gamma, n):
    return beta * xd / (1.0 + xd**n) - gamma * x


@njit(cache=True)
def _mg_delayed(xs, ds, i, frac_steps, h, hist):
    # Cubic Hermite value of x at (i - frac_steps) grid steps; constant history before 0.
    pos = i - frac_steps
    if pos <= 0.0:
        return hist
    j = int(math.floor(pos))
    s = pos - j
    if s == 0.0:
        return xs[j]
    x0, x1, d0, d1 = xs[j], xs[j + 1], ds[j] * h, ds[j + 1] * h
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * d0
            + (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * d1)


@njit(cache=True)
def _mg_integrate(n_steps, beta, gamma, n, tau, h, hist):
    xs = np.empty(n_steps + 1)
    ds = np.empty(n_steps + 1)
    lag = tau / h
    xs[0] = hist
    ds[0] = _mg_rhs(hist, hist, beta, gamma, n)
    for i in range(n_steps):
        x = xs[i]
        xd0 = _mg_delayed(xs, ds, i, lag, h, hist)
        xdh = _mg_delayed(xs, ds, i + 0.5, lag, h, hist) if lag >= 1.0 else hist
        xd1 = _mg_delayed(xs, ds, i + 1.0, lag, h, hist) if lag >= 1.0 else hist
        k1 = _mg_rhs(x, xd0, beta, gamma, n)
        k2 = _mg_rhs(x + 0.5 * h * k1, xdh, beta, gamma, n)
        k3 = _mg_rhs(x + 0.5 * h * k2, xdh, beta, gamma, n)
        k4 = _mg_rhs(x + h * k3, xd1, beta, gamma, n)
        xs[i + 1] = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ds[i + 1] = _mg_rhs(xs[i + 1], _mg_delayed(xs, ds, i + 1.0, lag, h, hist), beta, gamma, n)
    return xs


def gen_mackey_glass(spec: MackeyGlassSpec) -> np.ndarray:
    """Fixed-step RK4 integration with a constant history; delayed values
    between grid points come from cubic Hermite interpolation."""
    if spec.length == 0:
        return np.zeros(0)
    if spec.delay_tau < spec.step:
        raise ValueError("delay_tau must be at least one integration step")
    n_steps = spec.discard + (spec.length - 1) * spec.sample_every
    xs = _mg_integrate(n_steps, spec.beta, spec.gamma, spec.exponent, spec.delay_tau,
                       spec.step, spec.history)
    return xs[spec.discard::spec.sample_every][:spec.length].copy()
