"""Power-law fitting against boundary distance.

Two fit shapes cover everything the verification layer needs:

* pure power      y = K d^e          (log-log least squares)
* power + offset  y = K d^e + A      (exponent scan, linear LSQ inside)

The offset variant is required whenever the quantity carries an O(1)
additive part (values of the solution itself near the wall); fitting the
exponent by log-log there is badly biased for exponents close to zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PowerFit", "fit_power", "fit_power_with_offset", "fit_log_slope", "boundary_window"]


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    coefficient: float
    offset: float
    rel_rms: float
    n_points: int


def boundary_window(distances: np.ndarray, delta: float, extent: float):
    """Indices with delta <= d <= extent, the trusted asymptotic range."""
    d = np.asarray(distances, dtype=float)
    idx = np.nonzero((d >= delta * (1 - 1e-12)) & (d <= extent))[0]
    if idx.size < 4:
        raise ValueError(
            f"window [{delta:.3g}, {extent:.3g}] holds only {idx.size} samples; need >= 4"
        )
    return idx


def fit_power(d: np.ndarray, y: np.ndarray) -> PowerFit:
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    if np.any(y <= 0):
        raise ValueError("pure power fit needs positive samples; use the offset variant")
    ld, ly = np.log(d), np.log(y)
    e, lk = np.polyfit(ld, ly, 1)
    resid = ly - (e * ld + lk)
    return PowerFit(
        exponent=float(e),
        coefficient=float(np.exp(lk)),
        offset=0.0,
        rel_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=d.size,
    )


def fit_log_slope(d: np.ndarray, y: np.ndarray) -> PowerFit:
    """Fit y = K ln(1/d) + A; coefficient holds K."""
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    X = np.log(1.0 / d)
    k, a = np.polyfit(X, y, 1)
    resid = y - (k * X + a)
    scale = max(1.0, float(np.max(np.abs(y))))
    return PowerFit(
        exponent=0.0,
        coefficient=float(k),
        offset=float(a),
        rel_rms=float(np.sqrt(np.mean(resid**2)) / scale),
        n_points=d.size,
    )


def _offset_lsq(d, y, e):
    A = np.column_stack([d**e, np.ones_like(d)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return coef, float(np.sqrt(np.mean(resid**2)))


def fit_power_with_offset(
    d: np.ndarray,
    y: np.ndarray,
    exponent_range: tuple = (-3.0, 3.0),
    n_scan: int = 241,
) -> PowerFit:
    """Best (K, e, A) for y ~ K d^e + A via exponent scan with a parabolic
    refinement around the best scan point. Exponent 0 is excluded (the model
    degenerates to two constants)."""
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    lo, hi = exponent_range
    es = np.linspace(lo, hi, n_scan)
    es = es[np.abs(es) > 1e-3]
    errs = np.array([_offset_lsq(d, y, e)[1] for e in es])
    i = int(np.argmin(errs))
    # parabolic refinement on the scan triple, then a short golden polish
    e_best = es[i]
    if 0 < i < len(es) - 1:
        e0, e1, e2 = es[i - 1], es[i], es[i + 1]
        f0, f1, f2 = errs[i - 1], errs[i], errs[i + 1]
        denom = (e1 - e0) * (f1 - f2) - (e1 - e2) * (f1 - f0)
        if abs(denom) > 0:
            cand = e1 - 0.5 * (
                ((e1 - e0) ** 2 * (f1 - f2) - (e1 - e2) ** 2 * (f1 - f0)) / denom
            )
            if np.isfinite(cand) and lo < cand < hi and abs(cand) > 1e-3:
                if _offset_lsq(d, y, cand)[1] < f1:
                    e_best = cand
    step = (hi - lo) / (n_scan - 1)
    a, b = e_best - step, e_best + step
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    for _ in range(40):
        c1, c2 = b - phi * (b - a), a + phi * (b - a)
        if _offset_lsq(d, y, c1)[1] < _offset_lsq(d, y, c2)[1]:
            b = c2
        else:
            a = c1
    e_best = 0.5 * (a + b)
    coef, err = _offset_lsq(d, y, e_best)
    scale = max(1.0, float(np.max(np.abs(y))))
    return PowerFit(
        exponent=float(e_best),
        coefficient=float(coef[0]),
        offset=float(coef[1]),
        rel_rms=err / scale,
        n_points=d.size,
    )
