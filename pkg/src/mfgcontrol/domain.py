"""Truncated-interval geometry and discrete calculus on nonuniform 1D grids.

The state space is an open interval (a, b). Solutions blow up at the
endpoints, so the computational grid spans [a + delta, b - delta] for a
truncation margin delta tied to the finest spacing. Boundary-clustered
grids use an arcsinh stretching so the spacing shrinks toward both
endpoints with a fixed mid-to-end ratio.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Stretching",
    "GridDomain",
    "ScalarField",
    "build_grid",
]


class Stretching(str, Enum):
    UNIFORM = "uniform"
    BOUNDARY_CLUSTERED = "boundary_clustered"


def _trapezoid(y, x):
    # np.trapz was renamed; support both numpy generations
    f = getattr(np, "trapezoid", None) or np.trapz
    return float(f(y, x))


@dataclass(frozen=True)
class GridDomain:
    """Interval (a, b) with an interior grid on [a + delta, b - delta]."""

    a: float
    b: float
    n_nodes: int
    delta: float
    stretching: Stretching
    nodes: np.ndarray

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("empty interval: need a < b")
        if self.n_nodes < 16:
            raise ValueError("n_nodes must be at least 16")
        if not 0 < self.delta < 0.25 * (self.b - self.a):
            raise ValueError("delta must lie in (0, (b-a)/4)")
        h = np.diff(self.nodes)
        if not np.all(h > 0):
            raise ValueError("grid nodes must be strictly increasing")
        if self.stretching is Stretching.BOUNDARY_CLUSTERED:
            # spacing must grow monotonically away from each endpoint
            k = len(h) // 2
            if np.any(np.diff(h[:k]) < -1e-12 * h[0]) or np.any(
                np.diff(h[k:]) > 1e-12 * h[-1]
            ):
                raise ValueError("clustered spacing must be monotone away from endpoints")

    # -- geometry -----------------------------------------------------------

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_min(self) -> float:
        return float(np.min(self.spacing))

    def distance(self, x) -> np.ndarray:
        """Distance to the nearest endpoint of (a, b)."""
        x = np.asarray(x, dtype=float)
        tol = 1e-12 * self.length
        if np.any(x < self.a - tol) or np.any(x > self.b + tol):
            raise ValueError("point outside the closed interval [a, b]")
        return np.minimum(x - self.a, self.b - x)

    def outward_normal(self, x) -> np.ndarray:
        """Sign of the outward normal at the endpoint nearest to x."""
        x = np.asarray(x, dtype=float)
        return np.where(x < self.midpoint, -1.0, 1.0)

    @property
    def node_distance(self) -> np.ndarray:
        return self.distance(self.nodes)

    @property
    def midpoint_index(self) -> int:
        return int(np.argmin(np.abs(self.nodes - self.midpoint)))

    # -- quadrature ---------------------------------------------------------

    @property
    def quad_weights(self) -> np.ndarray:
        h = self.spacing
        w = np.zeros(self.n_nodes)
        w[0] = 0.5 * h[0]
        w[-1] = 0.5 * h[-1]
        w[1:-1] = 0.5 * (h[:-1] + h[1:])
        return w

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if values.shape != self.nodes.shape:
            raise ValueError("field shape does not match the grid")
        return _trapezoid(values, self.nodes)

    # -- discrete calculus --------------------------------------------------

    def gradient(self, values) -> np.ndarray:
        """Second-order first derivative; one-sided stencils at the ends."""
        u = np.asarray(values, dtype=float)
        if u.shape != self.nodes.shape:
            raise ValueError("field shape does not match the grid")
        h = self.spacing
        hm, hp = h[:-1], h[1:]
        out = np.empty_like(u)
        out[1:-1] = (
            -hp / (hm * (hm + hp)) * u[:-2]
            + (hp - hm) / (hm * hp) * u[1:-1]
            + hm / (hp * (hm + hp)) * u[2:]
        )
        h1, h2 = h[0], h[1]
        out[0] = (
            -(2 * h1 + h2) / (h1 * (h1 + h2)) * u[0]
            + (h1 + h2) / (h1 * h2) * u[1]
            - h1 / (h2 * (h1 + h2)) * u[2]
        )
        g1, g2 = h[-1], h[-2]
        out[-1] = (
            (2 * g1 + g2) / (g1 * (g1 + g2)) * u[-1]
            - (g1 + g2) / (g1 * g2) * u[-2]
            + g1 / (g2 * (g1 + g2)) * u[-3]
        )
        return out

    def laplacian(self, values) -> np.ndarray:
        """Three-point second derivative; copies the nearest interior value
        at the two boundary nodes (no exterior neighbors exist there)."""
        u = np.asarray(values, dtype=float)
        if u.shape != self.nodes.shape:
            raise ValueError("field shape does not match the grid")
        h = self.spacing
        hm, hp = h[:-1], h[1:]
        out = np.empty_like(u)
        out[1:-1] = 2.0 * (
            u[:-2] / (hm * (hm + hp)) - u[1:-1] / (hm * hp) + u[2:] / (hp * (hm + hp))
        )
        out[0] = out[1]
        out[-1] = out[-2]
        return out

    def laplacian_stencil(self):
        """Interior stencil coefficients (lower, diag, upper) of `laplacian`."""
        h = self.spacing
        hm, hp = h[:-1], h[1:]
        return 2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))

    def gradient_stencil(self):
        """Interior stencil coefficients (lower, diag, upper) of `gradient`."""
        h = self.spacing
        hm, hp = h[:-1], h[1:]
        return (
            -hp / (hm * (hm + hp)),
            (hp - hm) / (hm * hp),
            hm / (hp * (hm + hp)),
        )


@dataclass(frozen=True)
class ScalarField:
    """Nodal values of a scalar function on a grid."""

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("field shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def gradient(self) -> np.ndarray:
        return self.grid.gradient(self.values)

    def integrate(self) -> float:
        return self.grid.integrate(self.values)


# In one dimension a vector field is a scalar field (the single component).
VectorField = ScalarField


def _normalized_nodes(n_nodes: int, stretching: Stretching, ratio: float) -> np.ndarray:
    t = np.linspace(-1.0, 1.0, n_nodes)
    if stretching is Stretching.UNIFORM:
        return t
    # arcsinh map: spacing ratio (center : end) equals `ratio`
    beta = float(np.arccosh(ratio))
    s = np.arcsinh(t * np.sinh(beta)) / beta
    s[0], s[-1] = -1.0, 1.0
    return s


def build_grid(
    a: float,
    b: float,
    n_nodes: int,
    delta: float | str = "auto",
    stretching: Stretching | str = Stretching.UNIFORM,
    clustering_ratio: float = 5.0,
) -> GridDomain:
    """Build the truncated grid.

    delta="auto" ties the margin to the finest spacing (delta = 10 h_min),
    so refining the grid tightens the truncation at the same rate.
    """
    stretching = Stretching(stretching)
    if clustering_ratio <= 1.0:
        raise ValueError("clustering_ratio must exceed 1")
    t = _normalized_nodes(n_nodes, stretching, clustering_ratio)
    if delta == "auto":
        # end spacing is the smallest; delta = 10 * h_min gives
        # delta = c (b - a - 2 delta) with c = 5 (t1 - t0)
        c = 5.0 * (t[1] - t[0])
        margin = c * (b - a) / (1.0 + 2.0 * c)
    else:
        margin = float(delta)
    half = 0.5 * (b - a - 2.0 * margin)
    nodes = 0.5 * (a + b) + t * half
    nodes[0] = a + margin
    nodes[-1] = b - margin
    return GridDomain(
        a=float(a),
        b=float(b),
        n_nodes=int(n_nodes),
        delta=margin,
        stretching=stretching,
        nodes=nodes,
    )
