"""Binary file formats.

All integers and floats are little-endian.

DLRC (IQ capture)::

    magic "DLRC" | version u16 | sample_rate_hz f64 | center_freq_hz f64 | count u64
    count x (I f32, Q f32)

DLRD (labelled datapoints)::

    magic "DLRD" | version u16 | L u32 | count u64 | Q u16
    count x (L x f32 values, label u16)

DLRW (readout weights)::

    magic "DLRW" | version u16 | rows u32 | Q u32 | lambda f64 | flags u16 | config digest 16 bytes
    rows x Q f64, row-major

``rows`` is the state length, plus one when flag bit 0 (constant feature
column) is set. The config digest ties weights to the reservoir that made
the states they were trained on.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .readout import ReadoutWeights
from .signal import IqCapture

VERSION = 1

_DLRC = struct.Struct("<4sHddQ")
_DLRD = struct.Struct("<4sHIQH")
_DLRW = struct.Struct("<4sHIIdH16s")

FLAG_BIAS = 1


class FormatError(ValueError):
    """A file does not parse as the expected format."""


def _read_header(buf: bytes, fmt: struct.Struct, magic: bytes, path) -> tuple:
    if len(buf) < fmt.size:
        raise FormatError(f"{path}: truncated header")
    fields = fmt.unpack_from(buf)
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != VERSION:
        raise FormatError(f"{path}: unsupported version {fields[1]}")
    return fields


def write_capture(path, capture: IqCapture) -> None:
    samples = np.asarray(capture.samples, dtype="<c8")
    with open(path, "wb") as fh:
        fh.write(_DLRC.pack(b"DLRC", VERSION, float(capture.sample_rate_hz),
                            float(capture.center_freq_hz), samples.size))
        fh.write(samples.tobytes())


def read_capture(path) -> IqCapture:
    buf = Path(path).read_bytes()
    _, _, rate, center, count = _read_header(buf, _DLRC, b"DLRC", path)
    body = buf[_DLRC.size:]
    if len(body) != count * 8:
        raise FormatError(f"{path}: expected {count} samples, found {len(body) / 8:g}")
    samples = np.frombuffer(body, dtype="<c8").astype(np.complex64)
    return IqCapture(samples, rate, center, capture_id=Path(path).stem)


def _dataset_dtype(length: int) -> np.dtype:
    return np.dtype([("values", "<f4", (length,)), ("label", "<u2")])


def write_dataset(path, data, labels, num_classes: int | None = None) -> None:
    data = np.asarray(data, dtype=np.float32)
    labels = np.asarray(labels)
    if data.ndim != 2 or labels.shape != (data.shape[0],):
        raise ValueError("dataset needs a (count, L) array and one label per row")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise ValueError("labels must fit in u16")
    q = int(num_classes if num_classes is not None else (labels.max() + 1 if labels.size else 0))
    if labels.size and labels.max() >= q:
        raise ValueError(f"label {labels.max()} out of range for {q} classes")
    if q > 0xFFFF:
        raise ValueError("class count must fit in u16")
    rec = np.empty(data.shape[0], dtype=_dataset_dtype(data.shape[1]))
    rec["values"] = data
    rec["label"] = labels
    with open(path, "wb") as fh:
        fh.write(_DLRD.pack(b"DLRD", VERSION, data.shape[1], data.shape[0], q))
        fh.write(rec.tobytes())


def read_dataset(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Return ``(data float32 (count, L), labels int64, Q)``."""
    buf = Path(path).read_bytes()
    _, _, length, count, q = _read_header(buf, _DLRD, b"DLRD", path)
    dtype = _dataset_dtype(length)
    body = buf[_DLRD.size:]
    if len(body) != count * dtype.itemsize:
        raise FormatError(f"{path}: expected {count} records of {dtype.itemsize} bytes")
    rec = np.frombuffer(body, dtype=dtype)
    labels = rec["label"].astype(np.int64)
    if labels.size and labels.max() >= q:
        raise FormatError(f"{path}: label {labels.max()} outside declared {q} classes")
    return rec["values"].astype(np.float32), labels, int(q)


def write_weights(path, weights: ReadoutWeights, config_digest: bytes) -> None:
    values = np.ascontiguousarray(weights.values, dtype="<f8")
    flags = FLAG_BIAS if weights.bias else 0
    with open(path, "wb") as fh:
        fh.write(_DLRW.pack(b"DLRW", VERSION, values.shape[0], values.shape[1],
                            float(weights.lam), flags, bytes(config_digest).ljust(16, b"\0")[:16]))
        fh.write(values.tobytes())


def read_weights(path) -> tuple[ReadoutWeights, bytes]:
    """Return the weights and the 16-byte config digest they were trained under."""
    buf = Path(path).read_bytes()
    _, _, rows, q, lam, flags, digest = _read_header(buf, _DLRW, b"DLRW", path)
    body = buf[_DLRW.size:]
    if len(body) != rows * q * 8:
        raise FormatError(f"{path}: expected a {rows}x{q} weight matrix")
    values = np.frombuffer(body, dtype="<f8").reshape(rows, q)
    return ReadoutWeights(values, lam, bool(flags & FLAG_BIAS)), digest
