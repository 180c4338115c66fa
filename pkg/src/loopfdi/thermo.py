"""Counterflow economizer thermodynamics: LMTD and the steady-state solve."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .errors import DegenerateLMTD, NoConvergence

__all__ = ["lmtd", "lmtd_from_terminals", "steady_outlets", "ExchangerSolution"]


def lmtd(dt1: float, dt2: float) -> float:
    """Log-mean of two positive terminal temperature differences.

    The dt1 == dt2 limit (balanced counterflow) returns the common value;
    near-equal inputs go through u/log1p(u), which is stable for |u| << 1.
    Non-positive differences mean the exchanger model does not apply
    (temperature crossover) and raise DegenerateLMTD.
    """
    if dt1 <= 0.0 or dt2 <= 0.0:
        raise DegenerateLMTD(
            f"terminal temperature differences must be positive, got {dt1:.6g}, {dt2:.6g}"
        )
    u = (dt2 - dt1) / dt1
    if u == 0.0:
        return dt1
    return dt1 * u / math.log1p(u)


def lmtd_from_terminals(
    hot_in: float, hot_out: float, cold_in: float, cold_out: float
) -> float:
    """LMTD of a counterflow pairing: dT1 = hot_in - cold_out, dT2 = hot_out - cold_in."""
    return lmtd(hot_in - cold_out, hot_out - cold_in)


@dataclass(frozen=True)
class ExchangerSolution:
    hot_out_c: float
    cold_out_c: float
    duty_w: float
    residual_rel: float


def steady_outlets(
    hot_in_c: float,
    cold_in_c: float,
    m_hot_kg_s: float,
    m_cold_kg_s: float,
    cp_j_kg_c: float,
    ua_w_c: float,
) -> ExchangerSolution:
    """Solve hot/cold outlet temperatures of the counterflow economizer.

    Finds the hot outlet such that the hot-side duty equals UA * LMTD, with the
    cold outlet following from the duty balance.  The returned relative duty
    residual is checked against 1e-9 by callers.
    """
    if m_hot_kg_s <= 0.0 or m_cold_kg_s <= 0.0:
        raise ValueError("flows must be positive")
    if cp_j_kg_c <= 0.0:
        raise ValueError("cp must be positive")
    if ua_w_c < 0.0:
        raise ValueError("UA must be non-negative")
    if hot_in_c <= cold_in_c:
        raise ValueError("hot inlet must exceed cold inlet")

    if ua_w_c == 0.0:
        return ExchangerSolution(hot_in_c, cold_in_c, 0.0, 0.0)

    c_hot = m_hot_kg_s * cp_j_kg_c
    c_cold = m_cold_kg_s * cp_j_kg_c
    span = hot_in_c - cold_in_c
    q_max = min(c_hot, c_cold) * span

    def cold_out(t_hot_out: float) -> float:
        return cold_in_c + c_hot * (hot_in_c - t_hot_out) / c_cold

    def f(t_hot_out: float) -> float:
        q_hot = c_hot * (hot_in_c - t_hot_out)
        return q_hot - ua_w_c * lmtd_from_terminals(
            hot_in_c, t_hot_out, cold_in_c, cold_out(t_hot_out)
        )

    # Upper bound: close to the no-exchange limit but far enough from hot_in
    # that f < 0 there; for very small UA the root sits within d_hi of hot_in.
    eps = 1e-9 * span
    d_hi = min(eps, 0.5 * ua_w_c * span / c_hot)
    if d_hi < 1e-12 * max(1.0, abs(hot_in_c)):
        # UA negligible at machine precision: streams decoupled
        return ExchangerSolution(hot_in_c, cold_in_c, c_hot * d_hi, 0.0)
    hi = hot_in_c - d_hi
    # Lower bound: approach the effectiveness->1 limit until f > 0 (for very
    # large UA the logarithmic LMTD tail needs a tighter approach).
    lo = None
    step = eps
    for _ in range(12):
        cand = hot_in_c - q_max / c_hot + step
        if cand < hi and f(cand) > 0.0:
            lo = cand
            break
        step *= 0.1
    if lo is None:
        raise NoConvergence("could not bracket the hot-outlet solution")
    try:
        t_hot_out = brentq(f, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=200)
    except RuntimeError as exc:
        raise NoConvergence(str(exc)) from exc

    t_cold_out = cold_out(t_hot_out)
    q = c_hot * (hot_in_c - t_hot_out)
    resid = abs(f(t_hot_out)) / max(abs(q), 1e-30)
    return ExchangerSolution(float(t_hot_out), float(t_cold_out), float(q), float(resid))
