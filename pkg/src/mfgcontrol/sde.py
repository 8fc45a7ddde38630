"""Monte Carlo verification of the equilibrium: simulate the optimal
process and check that time averages reproduce the ergodic constant and
that the occupation measure reproduces the invariant density.

Paths move in lockstep: every global round draws one normal vector from a
single counter-based generator and every live path consumes its entry,
whether or not its step commits, so results depend only on the seed and
never on scheduling. Steps are Euler-Maruyama with a per-path step size
dt = min(base_dt, kappa d^2) that resolves the 1/d drift stiffness near
the walls. A proposal that lands outside the open interval is not
committed; the path retries with dt/4 in later rounds, and a collapse of
the retreating step below the floor is recorded as an exit (the
equilibrium drift should produce none; plain diffusion produces many).

The running cost along paths is the equilibrium integrand L(b(x), mu) +
F(mu, x), interpolated from its nodal values inside the grid and continued
by the drift's wall asymptotics through the trimmed layers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import ScalarField
from .fp import DriftField
from .measure import DensityMeasure, JointMeasure
from .model import HamiltonianModel, lagrangian_field

__all__ = [
    "SimulationConfig",
    "PathEnsemble",
    "simulate_paths",
    "simulate_equilibrium",
    "estimate_rho",
    "compare_invariant_density",
]


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float = 200.0
    base_dt: float = 1e-3
    n_paths: int = 64
    seed: int = 70
    kappa: float = 0.02
    burn_in_fraction: float = 0.25
    n_bins: int = 64
    dt_floor: float = 1e-15
    max_rounds: int | None = None

    def __post_init__(self):
        if self.horizon <= 0 or self.base_dt <= 0 or self.n_paths < 1:
            raise ValueError("horizon, base_dt and n_paths must be positive")
        if not 0 <= self.burn_in_fraction < 1:
            raise ValueError("burn_in_fraction must lie in [0, 1)")


@dataclass
class PathEnsemble:
    config: SimulationConfig
    path_cost: np.ndarray  # accumulated weighted running cost per path
    path_weight: np.ndarray  # accumulated post-burn-in time per path
    exit_flags: np.ndarray
    final_positions: np.ndarray
    occupation: np.ndarray  # post-burn-in time per uniform bin, normalized
    bin_edges: np.ndarray
    rounds: int

    @property
    def n_exits(self) -> int:
        return int(np.count_nonzero(self.exit_flags))

    @property
    def path_averages(self) -> np.ndarray:
        out = np.full(self.path_cost.shape, np.nan)
        ok = self.path_weight > 0
        out[ok] = self.path_cost[ok] / self.path_weight[ok]
        return out


class _Integrand:
    """Nodal interpolation with asymptotic continuation into the layers."""

    def __init__(self, model, mu, drift: DriftField, cost_nodal: np.ndarray):
        grid = drift.grid
        self.a, self.b = grid.a, grid.b
        self.delta = grid.delta
        self.nodes = grid.nodes
        self.bvals = drift.values
        self.cost = np.asarray(cost_nodal, dtype=float)
        self.sigma_gl = model.sigma * drift.gamma_left
        self.sigma_gr = model.sigma * drift.gamma_right
        self.model, self.mu = model, mu
        # cost continuation: Lagrangian of the asymptotic drift plus the
        # cost-rule value frozen at the nearest cut
        self.cost_left_edge = float(self.cost[0] - lagrangian_field(model, drift.values[:1], mu)[0])
        self.cost_right_edge = float(self.cost[-1] - lagrangian_field(model, drift.values[-1:], mu)[0])
        # nodal second derivative of the cost (3-point, nonuniform spacing),
        # used by the quadrature correction of the path-cost estimator
        xg = grid.nodes
        hm = xg[1:-1] - xg[:-2]
        hp = xg[2:] - xg[1:-1]
        num = self.cost[:-2] * hp - self.cost[1:-1] * (hm + hp) + self.cost[2:] * hm
        curv = 2.0 * num / (hm * hp * (hm + hp))
        self.curv = np.concatenate((curv[:1], curv, curv[-1:]))
        self.q_conj = model.q_conj

    def drift(self, x: np.ndarray) -> np.ndarray:
        out = np.interp(x, self.nodes, self.bvals)
        dl = x - self.a
        dr = self.b - x
        left = dl < self.delta
        right = dr < self.delta
        if np.any(left):
            out[left] = self.sigma_gl / np.maximum(dl[left], 1e-300)
        if np.any(right):
            out[right] = -self.sigma_gr / np.maximum(dr[right], 1e-300)
        return out

    def running_cost(self, x: np.ndarray) -> np.ndarray:
        out = np.interp(x, self.nodes, self.cost)
        dl = x - self.a
        dr = self.b - x
        left = dl < self.delta
        right = dr < self.delta
        for mask, off in ((left, self.cost_left_edge), (right, self.cost_right_edge)):
            if np.any(mask):
                out[mask] = off + lagrangian_field(self.model, self.drift(x[mask]), self.mu)
        return out

    def cost_curvature(self, x: np.ndarray) -> np.ndarray:
        out = np.interp(x, self.nodes, self.curv)
        dl = x - self.a
        dr = self.b - x
        left = dl < self.delta
        right = dr < self.delta
        # below the cut the cost is offset + C d^(-q'), whose curvature is
        # q'(q'+1) times the power part over d^2; the offset drops out
        for mask, dist in ((left, dl), (right, dr)):
            if np.any(mask):
                lag = lagrangian_field(self.model, self.drift(x[mask]), self.mu)
                dd = np.maximum(dist[mask], 1e-300)
                out[mask] = self.q_conj * (self.q_conj + 1.0) * lag / (dd * dd)
        return out


def simulate_paths(
    model: HamiltonianModel,
    mu: JointMeasure,
    drift: DriftField,
    cost_nodal,
    config: SimulationConfig = SimulationConfig(),
    initial_positions=None,
) -> PathEnsemble:
    """Euler-Maruyama ensemble under a feedback drift with running cost
    accumulation and an occupation histogram, both burn-in weighted."""
    grid = drift.grid
    cost_vals = cost_nodal.values if isinstance(cost_nodal, ScalarField) else np.asarray(cost_nodal, dtype=float)
    f = _Integrand(model, mu, drift, cost_vals)
    cfg = config
    n = cfg.n_paths
    T = cfg.horizon
    burn_t = cfg.burn_in_fraction * T
    root2s = math.sqrt(2.0 * model.sigma)
    gen = np.random.Generator(np.random.Philox(cfg.seed))

    if initial_positions is None:
        x = np.full(n, grid.midpoint)
    else:
        x = np.array(initial_positions, dtype=float)
        if x.shape != (n,):
            raise ValueError("initial_positions must have shape (n_paths,)")
    t = np.zeros(n)
    scale = np.ones(n)
    exited = np.zeros(n, dtype=bool)
    cost_acc = np.zeros(n)
    weight_acc = np.zeros(n)
    hist = np.zeros(cfg.n_bins)
    edges = np.linspace(grid.a, grid.b, cfg.n_bins + 1)
    inv_bin = cfg.n_bins / grid.length
    max_rounds = cfg.max_rounds
    if max_rounds is None:
        max_rounds = int(8 * T / cfg.base_dt) + 200_000

    rounds = 0
    while True:
        live = ~exited & (t < T)
        if not np.any(live):
            break
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError(
                f"simulation exceeded {max_rounds} rounds; paths are stalled"
            )
        z = gen.standard_normal(n)
        d = np.minimum(x - grid.a, grid.b - x)
        dt_nat = np.minimum(cfg.base_dt, cfg.kappa * d * d)
        adapt = dt_nat < cfg.base_dt
        dt = dt_nat * scale
        at_floor = dt <= cfg.dt_floor
        dt = np.maximum(dt, cfg.dt_floor)
        dt = np.minimum(dt, T - t)
        bx = f.drift(x)
        noise = root2s * np.sqrt(np.maximum(dt, 0.0)) * z
        prop = x + bx * dt + noise
        # bulk: Heun corrector (weak order 2 for additive noise), same noise
        redo = live & ~adapt & (prop > grid.a) & (prop < grid.b)
        if np.any(redo):
            b2 = f.drift(prop[redo])
            prop[redo] = x[redo] + 0.5 * (bx[redo] + b2) * dt[redo] + noise[redo]
        # wall region: the squared wall distance is a squared Bessel process
        # when the drift is the local power law gamma*sigma/d, so the step can
        # be sampled exactly from the noncentral chi-square transition; Euler
        # or Heun updates are biased by O(kappa) against a drift this stiff.
        # Positivity is automatic, so the walls are never crossed, matching
        # the true process
        lay = live & adapt
        if np.any(lay):
            left = (x - grid.a) <= (grid.b - x)
            dw = np.where(left, x - grid.a, grid.b - x)[lay]
            rad = np.where(left, bx, -bx)[lay]
            gloc = np.clip(rad * dw / model.sigma, -0.9, 1e4)
            tt = 2.0 * model.sigma * dt[lay]
            ynew = tt * gen.noncentral_chisquare(gloc + 1.0, dw * dw / tt)
            dnew = np.sqrt(np.maximum(ynew, 1e-280))
            prop[lay] = np.where(left[lay], grid.a + dnew, grid.b - dnew)
        inside = (prop > grid.a) & (prop < grid.b)
        ok = live & inside
        lost = live & ~inside & at_floor
        if np.any(lost):
            exited |= lost
        retry = live & ~inside & ~at_floor
        if np.any(ok):
            w = np.clip(np.minimum(t[ok] + dt[ok], T) - np.maximum(t[ok], burn_t), 0.0, None)
            has_w = w > 0
            if np.any(has_w):
                # midpoint sampling (pre-step evaluation overweights the slow
                # near-wall positions); the remaining quadrature defect per
                # step is sigma*f''*dt^2/4, added back from the curvature of
                # the cost field
                xs = 0.5 * (x[ok][has_w] + prop[ok][has_w])
                dtw = dt[ok][has_w]
                ci = f.running_cost(xs) + 0.25 * model.sigma * dtw * f.cost_curvature(xs)
                cost_acc[np.nonzero(ok)[0][has_w]] += w[has_w] * ci
                weight_acc[np.nonzero(ok)[0][has_w]] += w[has_w]
                bins = np.clip(((xs - grid.a) * inv_bin).astype(int), 0, cfg.n_bins - 1)
                np.add.at(hist, bins, w[has_w])
            x[ok] = prop[ok]
            t[ok] += dt[ok]
            scale[ok] = 1.0
        scale[retry] *= 0.25
    total = hist.sum()
    return PathEnsemble(
        config=cfg,
        path_cost=cost_acc,
        path_weight=weight_acc,
        exit_flags=exited,
        final_positions=x,
        occupation=hist / total if total > 0 else hist,
        bin_edges=edges,
        rounds=rounds,
    )


def simulate_equilibrium(model, state, config: SimulationConfig = SimulationConfig()):
    """Simulate the optimal process of a computed equilibrium state."""
    drift = state.extras["drift"]
    F = state.extras["cost_field"]
    cost = lagrangian_field(model, drift.values, state.mu) + F.values
    return simulate_paths(model, state.mu, drift, cost, config)


def estimate_rho(ensemble: PathEnsemble):
    """Mean and standard error of the per-path long-run average costs."""
    avg = ensemble.path_averages
    ok = np.isfinite(avg)
    n = int(np.count_nonzero(ok))
    if n == 0:
        raise ValueError("no path accumulated post-burn-in weight")
    mean = float(np.mean(avg[ok]))
    stderr = float(np.std(avg[ok], ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return mean, stderr, n


def density_bin_masses(m: DensityMeasure, edges: np.ndarray) -> np.ndarray:
    """Per-bin mass of the density on a uniform bin partition, integrated
    exactly over each bin's overlap with the grid span (layer mass to the
    edge bins); lumping whole nodes into bins would add a spurious
    O(node spacing) error to every interior bin boundary."""
    grid = m.grid
    x = grid.nodes
    fine = np.linspace(x[0], x[-1], edges.size * 64 + 1)
    mf = np.interp(fine, x, m.density)
    cumf = np.concatenate(
        ([0.0], np.cumsum(0.5 * (mf[1:] + mf[:-1]) * np.diff(fine)))
    )
    cum = np.interp(np.clip(edges, x[0], x[-1]), fine, cumf)
    ref = np.diff(cum)
    ref[0] += m.excluded_mass[0]
    ref[-1] += m.excluded_mass[1]
    ref /= ref.sum()
    return ref


def compare_invariant_density(ensemble: PathEnsemble, m: DensityMeasure) -> float:
    """L1 distance between the occupation histogram and the invariant
    density reduced to the same uniform bins."""
    ref = density_bin_masses(m, ensemble.bin_edges)
    return float(np.sum(np.abs(ensemble.occupation - ref)))
