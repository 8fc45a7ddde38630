"""Probability measures over state and control, and the map whose fixed
point is the consistent joint state-control distribution.

Discrete representation: weighted atoms (x_i, alpha_i, w_i). Densities on a
grid carry an explicit excluded-mass bookkeeping term for the two trimmed
boundary layers so that totals remain exactly one.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .domain import GridDomain, ScalarField

__all__ = [
    "JointMeasure",
    "DensityMeasure",
    "pushforward",
    "transport_distance_1d",
    "solve_mu_fixed_point",
    "FixedPointResult",
    "gradient_envelope_guard",
    "HypothesisViolation",
    "NonConvergence",
]


class HypothesisViolation(RuntimeError):
    """Iterates left the region where the structural bounds apply."""


class NonConvergence(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass(frozen=True)
class JointMeasure:
    """Atomic measure sum_i w_i delta_{(x_i, alpha_i)}."""

    x: np.ndarray
    alpha: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if not (x.shape == a.shape == w.shape) or x.ndim != 1:
            raise ValueError("x, alpha, w must be 1D arrays of equal length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        tot = float(w.sum())
        if abs(tot - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {tot!r})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "w", w)

    def __len__(self):
        return self.x.size

    def mean_control(self) -> float:
        return float(np.sum(self.w * self.alpha))

    def lambda_r(self, r: float) -> float:
        """Control moment Lambda_r = (integral |alpha|^r d mu)^{1/r}."""
        if r <= 0:
            raise ValueError("moment order must be positive")
        return float(np.sum(self.w * np.abs(self.alpha) ** r)) ** (1.0 / r)

    def expectation(self, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        return float(np.sum(self.w * f(self.x, self.alpha)))

    def scaled_controls(self, factor: float) -> "JointMeasure":
        return JointMeasure(x=self.x, alpha=factor * self.alpha, w=self.w)


@dataclass(frozen=True)
class DensityMeasure:
    """Grid density plus the mass of the two trimmed boundary layers."""

    grid: GridDomain
    density: np.ndarray
    excluded_mass: tuple = (0.0, 0.0)

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        if d.shape != self.grid.nodes.shape:
            raise ValueError("density must be a nodal array on the grid")
        if np.any(d < 0):
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "density", d)
        ex = (float(self.excluded_mass[0]), float(self.excluded_mass[1]))
        if min(ex) < 0:
            raise ValueError("excluded masses must be nonnegative")
        object.__setattr__(self, "excluded_mass", ex)
        tot = self.total_mass
        if abs(tot - 1.0) > 1e-8:
            raise ValueError(f"total mass must be 1 (got {tot!r})")

    @property
    def total_mass(self) -> float:
        return float(self.grid.integrate(self.density)) + sum(self.excluded_mass)

    def integrate_against(self, values: np.ndarray) -> float:
        """Integral of a nodal function against the grid part only."""
        return float(self.grid.integrate(self.density * np.asarray(values, dtype=float)))

    def as_field(self) -> ScalarField:
        return ScalarField(self.grid, self.density)


def pushforward(m: DensityMeasure, control: np.ndarray) -> JointMeasure:
    """Image of m under x -> (x, control(x)), atoms at the grid nodes.

    Boundary-layer mass is assigned to the end nodes; the control there is
    taken from the end nodes as well, so heavy-tailed drifts should be
    truncated by the caller beforehand if the layers carry real mass.
    """
    a = np.asarray(control, dtype=float)
    if a.shape != m.grid.nodes.shape:
        raise ValueError("control must be a nodal array on the density's grid")
    w = m.grid.quad_weights * m.density
    w = w.copy()
    w[0] += m.excluded_mass[0]
    w[-1] += m.excluded_mass[1]
    s = w.sum()
    if s <= 0:
        raise ValueError("degenerate density: zero total weight")
    return JointMeasure(x=m.grid.nodes.copy(), alpha=a.copy(), w=w / s)


def transport_distance_1d(mu1: JointMeasure, mu2: JointMeasure) -> float:
    """Exact 1-Wasserstein distance between atomic measures on R^2 with the
    comonotone coupling in lexicographic (x, alpha) order.

    For measures supported on a curve that is monotone in x (pushforwards of
    densities under a feedback control) the lexicographic coupling is the
    monotone optimal one; in general it is an upper bound that is still a
    metric, which is all the fixed-point loop needs.
    """

    def sorted_atoms(mu):
        order = np.lexsort((mu.alpha, mu.x))
        return mu.x[order], mu.alpha[order], mu.w[order]

    x1, a1, w1 = sorted_atoms(mu1)
    x2, a2, w2 = sorted_atoms(mu2)
    c1 = np.concatenate([[0.0], np.cumsum(w1)])
    c2 = np.concatenate([[0.0], np.cumsum(w2)])
    c1[-1] = c2[-1] = 1.0
    edges = np.unique(np.concatenate([c1, c2]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    seg = np.diff(edges)
    i1 = np.clip(np.searchsorted(c1, mids, side="right") - 1, 0, len(w1) - 1)
    i2 = np.clip(np.searchsorted(c2, mids, side="right") - 1, 0, len(w2) - 1)
    ground = np.hypot(x1[i1] - x2[i2], a1[i1] - a2[i2])
    return float(np.sum(seg * ground))


@dataclass
class FixedPointResult:
    mu: JointMeasure
    iterations: int
    residual: float
    residual_history: list
    damping_history: list


def gradient_envelope_guard(model, grad_values, grid, mu):
    """Pre-check that a candidate gradient obeys the distance-weighted
    envelope that the moment bounds presuppose; raises HypothesisViolation
    when an iterate escapes it."""
    d = grid.node_distance
    mask = d > 0
    cap = 10.0 * max(1.0, model.sigma / (model.f1(mu) * (model.q - 1.0)))
    worst = float(np.max(np.abs(np.asarray(grad_values)[mask]) ** (model.q - 1.0) * d[mask]))
    if worst > cap:
        raise HypothesisViolation(
            f"gradient envelope violated: sup |Du|^(q-1) d = {worst:.3g} > {cap:.3g}"
        )


def solve_mu_fixed_point(
    T: Callable[[JointMeasure], JointMeasure],
    mu0: JointMeasure,
    tol: float = 1e-9,
    max_iter: int = 200,
    damping: float = 1.0,
    gap_fn: Callable[[JointMeasure, JointMeasure], float] | None = None,
    guard: Callable[[JointMeasure], None] | None = None,
) -> FixedPointResult:
    """Damped Picard iteration for mu = T(mu) with a look-ahead residual.

    The residual for a candidate y = T(x) is W1(y, T(y)) plus any extra gap
    supplied by gap_fn, so a map that is already constant converges in one
    application. Damping acts on the control marginal (atoms stay pinned to
    the grid nodes); it is halved whenever the residual grows.
    """
    if not 0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    history, dhistory = [], []
    x_cur = mu0
    omega = damping
    prev_res = np.inf
    y = T(x_cur)
    for k in range(1, max_iter + 1):
        if guard is not None:
            guard(y)
        z = T(y)
        res = transport_distance_1d(y, z)
        if gap_fn is not None:
            res += abs(gap_fn(y, z))
        history.append(res)
        dhistory.append(omega)
        if res <= tol:
            return FixedPointResult(y, k, res, history, dhistory)
        if res > 0.9 * prev_res and k > 1:
            omega = max(omega / 2.0, 1.0 / 64.0)
        prev_res = res
        if omega < 1.0 and np.array_equal(y.x, z.x) and np.array_equal(y.w, z.w):
            y = JointMeasure(x=y.x, alpha=(1 - omega) * y.alpha + omega * z.alpha, w=y.w)
        else:
            y = z
    raise NonConvergence(
        f"fixed point stalled after {max_iter} iterations (residual {history[-1]:.3e})",
        history,
    )
