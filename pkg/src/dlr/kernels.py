"""Chip-level delay-loop kernels.

Both backends compute the same recurrence over a chip stream of length
``total``. Chip ``t`` (zero based) drives node ``t % n`` with
``u[t // hold] * mask[t % n]``::

    a[t] = f(eta * x[t - n] + nu * u[t // hold] * mask[t % n])
    x[t] = sum_j taps[j] * a[t - j]        (+ x[t - n] in accumulate mode)

with ``x`` and ``a`` zero before the stream starts. ``hold = n`` gives the
usual one-sample-per-loop-round-trip spreading; ``hold = 1`` feeds a chip
stream straight in (second stacked layer).

The numba path walks the chips one at a time. The numpy path vectorises over
datapoints and over one loop round trip at a time, which is exact because
``x[t]`` only looks back ``n`` chips through the feedback and ``len(taps) <= n``
chips through the filter.
"""

import math

import numpy as np

from ._accel import BACKEND, HAVE_NUMBA, njit

SIN_SQUARED = 0
TANH = 1


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _drive_stream_nb(u, hold, total, mask, taps, nu, eta, nl, accumulate, a, x):
    n = mask.shape[0]
    f = taps.shape[0]
    for t in range(total):
        z = nu * u[t // hold] * mask[t % n]
        if t >= n:
            z += eta * x[t - n]
        if nl == SIN_SQUARED:
            s = math.sin(z)
            a[t] = s * s
        else:
            a[t] = math.tanh(z)
        acc = 0.0
        for j in range(f):
            if t - j < 0:
                break
            acc += taps[j] * a[t - j]
        if accumulate and t >= n:
            acc += x[t - n]
        x[t] = acc


@njit(cache=True, nogil=True)
def _tail_into(x, total, out_row):
    n = out_row.shape[0]
    if total >= n:
        out_row[:] = x[total - n:total]
    else:
        out_row[:n - total] = 0.0
        out_row[n - total:] = x[:total]


@njit(cache=True, nogil=True)
def loop_states_numba(u, mask, taps, nu, eta, nl, accumulate):
    b_count, length = u.shape
    n = mask.shape[0]
    total = length * n
    out = np.empty((b_count, n))
    a = np.empty(total)
    x = np.empty(total)
    for b in range(b_count):
        _drive_stream_nb(u[b], n, total, mask, taps, nu, eta, nl, accumulate, a, x)
        _tail_into(x, total, out[b])
    return out


@njit(cache=True, nogil=True)
def stacked_states_numba(u, mask1, mask2, taps, nu, eta, nl, accumulate):
    b_count, length = u.shape
    n1 = mask1.shape[0]
    n2 = mask2.shape[0]
    total = length * n1
    out = np.empty((b_count, n2))
    a = np.empty(total)
    x1 = np.empty(total)
    x2 = np.empty(total)
    shifted = np.empty(total)
    for b in range(b_count):
        _drive_stream_nb(u[b], n1, total, mask1, taps, nu, eta, nl, accumulate, a, x1)
        shifted[0] = 0.0
        shifted[1:] = x1[:total - 1]
        _drive_stream_nb(shifted, 1, total, mask2, taps, nu, eta, nl, accumulate, a, x2)
        _tail_into(x2, total, out[b])
    return out


# --------------------------------------------------------------------------
# numpy path
# --------------------------------------------------------------------------

def _activate(z, nl):
    if nl == SIN_SQUARED:
        s = np.sin(z)
        return s * s
    return np.tanh(z)


def _drive_blocks_np(drive, total, mask, taps, nu, eta, nl, accumulate, stream_out=None):
    """Run the recurrence one loop round trip at a time.

    ``drive(t0, t1)`` returns the (B, t1 - t0) pre-mask drive for chips
    ``t0..t1-1``. Returns the final ``n`` chips of ``x`` in time order and
    fills ``stream_out`` with the whole ``x`` stream when given.
    """
    n = mask.shape[0]
    f = taps.shape[0]
    b_count = drive(0, 0).shape[0]
    prev_x = np.zeros((b_count, n))
    a_tail = np.zeros((b_count, f - 1))
    last_x = prev_x
    for t0 in range(0, total, n):
        t1 = min(t0 + n, total)
        r = t1 - t0
        z = nu * drive(t0, t1) * mask[:r]
        if t0 >= n:
            z += eta * prev_x[:, :r]
        a = _activate(z, nl)
        ext = np.concatenate((a_tail, a), axis=1)
        x = taps[0] * ext[:, f - 1:]
        for j in range(1, f):
            x = x + taps[j] * ext[:, f - 1 - j:f - 1 - j + r]
        if accumulate and t0 >= n:
            x = x + prev_x[:, :r]
        if f > 1:
            a_tail = ext[:, ext.shape[1] - (f - 1):]
        if stream_out is not None:
            stream_out[:, t0:t1] = x
        if r == n:
            prev_x = x
        last_x = x
    out = np.zeros((b_count, n))
    if total == 0:
        return out
    r = total - (total - 1) // n * n
    if r == n:
        out[:] = last_x
    elif total > n:
        out[:, :n - r] = prev_x[:, r:]
        out[:, n - r:] = last_x
    else:
        out[:, n - total:] = last_x
    return out


def loop_states_numpy(u, mask, taps, nu, eta, nl, accumulate):
    u = np.asarray(u, dtype=np.float64)
    n = mask.shape[0]
    return _drive_blocks_np(_hold_drive(u, n), u.shape[1] * n, mask, taps, nu, eta, nl, accumulate)


def stacked_states_numpy(u, mask1, mask2, taps, nu, eta, nl, accumulate, max_bytes=64 << 20):
    u = np.asarray(u, dtype=np.float64)
    b_count, length = u.shape
    n1 = mask1.shape[0]
    total = length * n1
    chunk = max(1, int(max_bytes // (8 * max(total, 1))))
    parts = []
    for c0 in range(0, b_count, chunk):
        uc = u[c0:c0 + chunk]
        x1 = np.empty((uc.shape[0], total))
        _drive_blocks_np(_hold_drive(uc, n1), total, mask1, taps, nu, eta, nl, accumulate, stream_out=x1)
        shifted = np.zeros_like(x1)
        shifted[:, 1:] = x1[:, :-1]
        parts.append(_drive_blocks_np(lambda t0, t1: shifted[:, t0:t1], total, mask2,
                                      taps, nu, eta, nl, accumulate))
    if not parts:
        return np.zeros((0, mask2.shape[0]))
    return np.concatenate(parts, axis=0)


def _hold_drive(u, hold):
    def drive(t0, t1):
        if t1 == t0:
            return u[:, :0]
        return u[:, t0 // hold][:, None]
    return drive


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _pick(backend):
    backend = backend or BACKEND
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is not installed")
    return backend


def loop_states(u, mask, taps, nu, eta, nl, accumulate, backend=None):
    """Final states of independent single-loop runs, one row per datapoint."""
    backend = _pick(backend)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if backend == "numba":
        return loop_states_numba(u, mask, taps, float(nu), float(eta), int(nl), bool(accumulate))
    return loop_states_numpy(u, mask, taps, nu, eta, nl, accumulate)


def stacked_states(u, mask1, mask2, taps, nu, eta, nl, accumulate, backend=None):
    """Final layer-2 states of two stacked loops, one row per datapoint."""
    backend = _pick(backend)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if backend == "numba":
        return stacked_states_numba(u, mask1, mask2, taps, float(nu), float(eta), int(nl),
                                    bool(accumulate))
    return stacked_states_numpy(u, mask1, mask2, taps, nu, eta, nl, accumulate)
