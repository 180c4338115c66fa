"""Numeric inner-loop kernels with a numba fast path and a pure-numpy fallback.

Backend selection: numba is used when importable unless the environment
variable ``LOOPFDI_NUMBA`` is set to ``0``/``false``/``no``.  Every kernel has
two implementations kept intentionally different in shape (loop vs vectorized)
so the equivalence tests exercise independent routes.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "backend_name",
    "lag_sequence",
    "batch_mean_std",
    "entropy_from_power",
    "kl_smoothed",
    "consecutive_exceed_latch",
]


def _numba_enabled() -> bool:
    flag = os.environ.get("LOOPFDI_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


_HAVE_NUMBA = False
if _numba_enabled():
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _HAVE_NUMBA = False

if not _HAVE_NUMBA:
    def njit(*args, **kwargs):  # type: ignore[misc]
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def backend_name() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# first-order lag trajectory: x[i] = target + (x[i-1] - target) * decay
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lag_sequence_nb(x0: float, target: float, decay: float, n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.float64)
    x = x0
    for i in range(n):
        x = target + (x - target) * decay
        out[i] = x
    return out


def _lag_sequence_np(x0: float, target: float, decay: float, n: int) -> np.ndarray:
    # closed form of the recurrence
    k = np.arange(1, n + 1, dtype=np.float64)
    return target + (x0 - target) * decay ** k


def lag_sequence(x0: float, target: float, decay: float, n: int) -> np.ndarray:
    """n successive first-order relaxation steps starting after ``x0``."""
    if _HAVE_NUMBA:
        return _lag_sequence_nb(float(x0), float(target), float(decay), int(n))
    return _lag_sequence_np(float(x0), float(target), float(decay), int(n))


# ---------------------------------------------------------------------------
# batch statistics (sample std, n-1 denominator)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _batch_mean_std_nb(x: np.ndarray) -> tuple:
    n = x.size
    s = 0.0
    for i in range(n):
        s += x[i]
    mean = s / n
    if n < 2:
        return mean, 0.0
    acc = 0.0
    for i in range(n):
        d = x[i] - mean
        acc += d * d
    return mean, math.sqrt(acc / (n - 1))


def _batch_mean_std_np(x: np.ndarray) -> tuple:
    mean = float(np.mean(x))
    if x.size < 2:
        return mean, 0.0
    return mean, float(np.std(x, ddof=1))


def batch_mean_std(x: np.ndarray) -> tuple:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if _HAVE_NUMBA:
        m, s = _batch_mean_std_nb(x)
        return float(m), float(s)
    return _batch_mean_std_np(x)


# ---------------------------------------------------------------------------
# spectral entropy of a power spectrum (DC already removed), in nats
# ---------------------------------------------------------------------------

@njit(cache=True)
def _entropy_from_power_nb(power: np.ndarray) -> float:
    total = 0.0
    for i in range(power.size):
        total += power[i]
    if total <= 0.0:
        return 0.0
    h = 0.0
    for i in range(power.size):
        p = power[i] / total
        if p > 0.0:
            h -= p * math.log(p)
    return h


def _entropy_from_power_np(power: np.ndarray) -> float:
    total = power.sum()
    if total <= 0.0:
        return 0.0
    p = power / total
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def entropy_from_power(power: np.ndarray) -> float:
    power = np.ascontiguousarray(power, dtype=np.float64)
    if _HAVE_NUMBA:
        return float(_entropy_from_power_nb(power))
    return _entropy_from_power_np(power)


# ---------------------------------------------------------------------------
# KL divergence with epsilon smoothing + renormalization, in nats
# ---------------------------------------------------------------------------

@njit(cache=True)
def _kl_smoothed_nb(p: np.ndarray, q: np.ndarray, eps: float) -> float:
    sp = 0.0
    sq = 0.0
    for i in range(p.size):
        sp += p[i] + eps
        sq += q[i] + eps
    kl = 0.0
    for i in range(p.size):
        pi = (p[i] + eps) / sp
        qi = (q[i] + eps) / sq
        kl += pi * math.log(pi / qi)
    return kl


def _kl_smoothed_np(p: np.ndarray, q: np.ndarray, eps: float) -> float:
    ps = p + eps
    qs = q + eps
    ps = ps / ps.sum()
    qs = qs / qs.sum()
    return float(np.sum(ps * np.log(ps / qs)))


def kl_smoothed(p: np.ndarray, q: np.ndarray, eps: float = 1e-9) -> float:
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    if _HAVE_NUMBA:
        return float(_kl_smoothed_nb(p, q, eps))
    return _kl_smoothed_np(p, q, eps)


# ---------------------------------------------------------------------------
# detector scan: first batch index (0-based) ending a run of c exceedances
# ---------------------------------------------------------------------------

@njit(cache=True)
def _consecutive_exceed_latch_nb(z_abs: np.ndarray, k: float, c: int) -> int:
    run = 0
    for i in range(z_abs.size):
        if z_abs[i] > k:
            run += 1
            if run >= c:
                return i
        else:
            run = 0
    return -1


def _consecutive_exceed_latch_np(z_abs: np.ndarray, k: float, c: int) -> int:
    hits = (z_abs > k).astype(np.int64)
    if hits.size < c:
        return -1
    window = np.convolve(hits, np.ones(c, dtype=np.int64), mode="valid")
    idx = np.flatnonzero(window == c)
    return int(idx[0]) + c - 1 if idx.size else -1


def consecutive_exceed_latch(z_abs: np.ndarray, k: float, c: int) -> int:
    """Offline scan of |z| values; returns -1 when no latch occurs."""
    z_abs = np.ascontiguousarray(z_abs, dtype=np.float64)
    if _HAVE_NUMBA:
        return int(_consecutive_exceed_latch_nb(z_abs, float(k), int(c)))
    return _consecutive_exceed_latch_np(z_abs, float(k), int(c))
