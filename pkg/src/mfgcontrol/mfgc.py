"""Coupled equilibrium computation: value function, ergodic constant,
state density and joint state-control distribution that are mutually
consistent.

The outer loop is a damped fixed-point iteration on the joint measure. One
sweep maps a candidate measure to (value problem) -> (feedback drift) ->
(invariant density) -> (pushforward joint measure); the residual is the
transport distance between the candidate and its image together with the
drift and ergodic-constant increments. A reference problem (bare power
Hamiltonian, zero cost) supplies both the seed measure and the a priori
ceiling on the control moment that iterates are projected under.

Measure-free problems (all couplings constant and a measure-independent
cost rule) skip the loop: one sweep is the equilibrium, structurally, and
is reported with a zero residual and a single outer iteration.

Expectations that involve the wall layers (control moments, the cost
identity) are evaluated against the density with layer corrections rather
than through the lumped atoms of the pushforward: the integrands blow up
exactly as fast as the density vanishes, so dropping or lumping the layers
costs O(delta) while the corrected form is O(delta^2).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .domain import GridDomain, ScalarField
from .fp import DriftField, build_drift_field, layered_expectation, solve_fp_1d
from .hjb import HJBSolution, solve_ergodic
from .measure import (
    DensityMeasure,
    HypothesisViolation,
    JointMeasure,
    NonConvergence,
    gradient_envelope_guard,
    pushforward,
    transport_distance_1d,
)
from .model import Family, HamiltonianModel, certify_assumptions, lagrangian_field

__all__ = [
    "ConstantCost",
    "PotentialCost",
    "KernelCongestionCost",
    "constant_cost",
    "potential_cost",
    "congestion_cost",
    "SolverOptions",
    "EquilibriumState",
    "ReferenceControlProblem",
    "solve_reference_problem",
    "apriori_lambda_ceiling",
    "moment_bound_rhs",
    "cost_identity_gap",
    "solve_equilibrium",
    "uniqueness_probe",
    "ProbeResult",
]


# -- cost rules ----------------------------------------------------------------


@dataclass(frozen=True)
class ConstantCost:
    value: float
    mu_dependent = False

    def __call__(self, mu, x):
        return np.full(np.asarray(x, dtype=float).shape, float(self.value))


@dataclass(frozen=True)
class PotentialCost:
    fn: Callable
    mu_dependent = False

    def __call__(self, mu, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class KernelCongestionCost:
    """F(mu, x) = weight * (Gaussian kernel smoothing of the state marginal
    of mu, evaluated at x)."""

    weight: float
    bandwidth: float = 0.1
    mu_dependent = True

    def __call__(self, mu, x):
        x = np.asarray(x, dtype=float)
        z = (x[:, None] - mu.x[None, :]) / self.bandwidth
        k = np.exp(-0.5 * z**2) / (self.bandwidth * math.sqrt(2.0 * math.pi))
        return self.weight * (k @ mu.w)


def constant_cost(value: float) -> ConstantCost:
    return ConstantCost(value)


def potential_cost(fn: Callable) -> PotentialCost:
    return PotentialCost(fn)


def congestion_cost(weight: float, bandwidth: float = 0.1) -> KernelCongestionCost:
    return KernelCongestionCost(weight, bandwidth)


# -- reference problem and a priori bounds --------------------------------------


@dataclass
class ReferenceControlProblem:
    u: ScalarField
    rho: float
    m: DensityMeasure
    drift: DriftField
    control_moment_power: float  # integral |b0|^{q'} dm0, layer-corrected

    @property
    def seed_measure(self) -> JointMeasure:
        return pushforward(self.m, self.drift.values)


def solve_reference_problem(q: float, sigma: float, grid: GridDomain, tol: float = 1e-11) -> ReferenceControlProblem:
    """Uncoupled benchmark on the same grid: bare power Hamiltonian, zero
    cost. Supplies the seed measure and the moment ceiling ingredients."""
    bare = HamiltonianModel(Family.SHIFTED, q, sigma)
    mu0 = JointMeasure(
        x=np.array([grid.midpoint]), alpha=np.array([0.0]), w=np.array([1.0])
    )
    F0 = ScalarField(grid, np.zeros(grid.n_nodes))
    sol = solve_ergodic(bare, mu0, F0, mode="direct", tol=tol)
    drift = build_drift_field(bare, mu0, sol.grad_u)
    m = solve_fp_1d(drift, sigma)
    qc = bare.q_conj
    moment = layered_expectation(m, np.abs(drift.values) ** qc)
    return ReferenceControlProblem(
        u=sol.u, rho=sol.rho, m=m, drift=drift, control_moment_power=moment
    )


def apriori_lambda_ceiling(model: HamiltonianModel, reference: ReferenceControlProblem) -> float:
    """Upper bound on the control moment Lambda_{q'} of any equilibrium,
    built from the structural constant and the reference problem."""
    C0 = model.C0
    return (4.0 * C0**2 + 3.0 * C0**2 * reference.control_moment_power) ** (
        1.0 / model.q_conj
    )


def moment_bound_rhs(model: HamiltonianModel, grad_u, m: DensityMeasure) -> float:
    """Right side of the per-iterate moment bound
    Lambda^{q'} <= 4 C0^2 + (q'^{q-1} (2 C0)^q / q) * integral |Du|^q dm."""
    q, qc, C0 = model.q, model.q_conj, model.C0
    g = grad_u.values if isinstance(grad_u, ScalarField) else np.asarray(grad_u, dtype=float)
    kinetic = layered_expectation(m, np.abs(g) ** q)
    return 4.0 * C0**2 + qc ** (q - 1.0) * (2.0 * C0) ** q / q * kinetic


def _corrected_lambda(model: HamiltonianModel, m: DensityMeasure, alpha: np.ndarray) -> float:
    qc = model.q_conj
    return layered_expectation(m, np.abs(alpha) ** qc) ** (1.0 / qc)


def cost_identity_gap(
    model: HamiltonianModel,
    mu: JointMeasure,
    m: DensityMeasure,
    alpha: np.ndarray,
    F: ScalarField,
    rho: float,
) -> float:
    """Defect of the ergodic cost identity rho = E[L(alpha, mu) + F],
    with the expectation taken layer-corrected against the density."""
    integrand = lagrangian_field(model, alpha, mu) + F.values
    return abs(rho - layered_expectation(m, integrand))


# -- options and state -----------------------------------------------------------


@dataclass
class SolverOptions:
    tol_outer: float = 1e-6
    max_outer: int = 60
    damping: float = 0.5
    damping_floor: float = 1.0 / 64.0
    hjb_mode: str = "auto"  # 'auto': cross-check first sweep, direct after
    hjb_tol: float = 1e-11
    lambda_schedule: tuple | None = None
    certify: str = "warn"  # 'warn' | 'raise' | 'skip'
    enforce_projection: bool = True
    x0_index: int | None = None


@dataclass
class EquilibriumState:
    u: ScalarField
    rho: float
    m: DensityMeasure
    mu: JointMeasure
    outer_iterations: int
    residual_history: list
    apriori_bound: float
    control_moment: float
    extras: dict

    @property
    def grid(self) -> GridDomain:
        return self.u.grid


@dataclass
class ProbeResult:
    states: tuple
    gaps: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.gaps.values())


# -- equilibrium loop -------------------------------------------------------------


def _certify(model, how):
    if how == "skip":
        return None
    report = certify_assumptions(model)
    if not report.passed:
        if how == "raise":
            report.raise_if_failed()
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        warnings.warn(f"model certification failed: {failed}", RuntimeWarning, stacklevel=3)
    return report


def _annotate(err, k):
    err.args = (f"[outer iteration {k}] {err.args[0]}",) + err.args[1:]
    return err


def _sweep(model, cost_rule, grid, mu, options, prev_sol, mode):
    """One inner map evaluation: measure -> (value, drift, density)."""
    F = ScalarField(grid, cost_rule(mu, grid.nodes))
    sol = solve_ergodic(
        model,
        mu,
        F,
        mode=mode,
        lambda_schedule=options.lambda_schedule,
        x0_index=options.x0_index,
        tol=options.hjb_tol,
        init=None if prev_sol is None else prev_sol.u,
        init_rho=None if prev_sol is None else prev_sol.rho,
    )
    gradient_envelope_guard(model, sol.grad_u.values, grid, mu)
    drift = build_drift_field(model, mu, sol.grad_u)
    m = solve_fp_1d(drift, model.sigma)
    return F, sol, drift, m


def solve_equilibrium(
    model: HamiltonianModel,
    cost_rule,
    grid: GridDomain,
    options: SolverOptions | None = None,
    seed_mu: JointMeasure | None = None,
) -> EquilibriumState:
    """Equilibrium quadruple (u, rho, m, mu) for a model and cost rule.

    Raises NonConvergence when the outer loop stalls, HypothesisViolation
    when an iterate escapes the structural envelopes, and the inner solver
    errors annotated with the outer iteration index.
    """
    options = options or SolverOptions()
    cert = _certify(model, options.certify)
    reference = solve_reference_problem(model.q, model.sigma, grid, tol=options.hjb_tol)
    ceiling = apriori_lambda_ceiling(model, reference)
    qc = model.q_conj

    decoupled = not model.mu_dependent and not getattr(cost_rule, "mu_dependent", True)
    mu = seed_mu if seed_mu is not None else reference.seed_measure
    lam0 = _corrected_lambda(model, reference.m, reference.drift.values)
    if lam0 > ceiling and options.enforce_projection and seed_mu is None:
        mu = mu.scaled_controls(ceiling / lam0)

    history, monitor = [], []
    projection_events = 0
    prev_sol = None
    prev_drift = None
    omega = 1.0  # first application undamped
    mode0 = "both" if options.hjb_mode == "auto" else options.hjb_mode
    mode_later = "direct" if options.hjb_mode == "auto" else options.hjb_mode
    state_m, state_alpha = None, None

    max_outer = 1 if decoupled else options.max_outer
    for k in range(max_outer):
        try:
            F, sol, drift, m = _sweep(
                model, cost_rule, grid, mu, options, prev_sol, mode0 if k == 0 else mode_later
            )
        except (HypothesisViolation, RuntimeError) as err:
            raise _annotate(err, k)

        alpha_out = drift.values
        lam_val = _corrected_lambda(model, m, alpha_out)
        projected = False
        if lam_val > ceiling and options.enforce_projection:
            alpha_out = (ceiling / lam_val) * alpha_out
            projection_events += 1
            projected = True
        mu_out = pushforward(m, alpha_out)

        bound_rhs = moment_bound_rhs(model, sol.grad_u, m)
        lam_acc = _corrected_lambda(model, m, alpha_out)
        monitor.append(
            {
                "iteration": k,
                "lambda_power": lam_acc**qc,
                "bound_rhs": bound_rhs,
                "within_bound": lam_acc**qc <= bound_rhs * (1 + 1e-12),
                "projected": projected,
            }
        )

        w1 = transport_distance_1d(mu, mu_out)
        drho = abs(sol.rho - prev_sol.rho) if prev_sol is not None else float("inf")
        db = (
            float(np.max(np.abs(drift.values - prev_drift.values)))
            / (1.0 + float(np.max(np.abs(drift.values))))
            if prev_drift is not None
            else float("inf")
        )
        history.append((w1, drho, db))

        scale = 1.0 + lam_acc
        done = decoupled or (
            k > 0
            and w1 <= options.tol_outer * scale
            and drho <= options.tol_outer * (1.0 + abs(sol.rho))
            and db <= options.tol_outer
        )
        if done:
            if decoupled:
                history[-1] = (0.0, 0.0, 0.0)
            gap = cost_identity_gap(model, mu_out, m, alpha_out, F, sol.rho)
            return EquilibriumState(
                u=sol.u,
                rho=sol.rho,
                m=m,
                mu=mu_out,
                outer_iterations=k + 1,
                residual_history=history,
                apriori_bound=ceiling,
                control_moment=lam_acc,
                extras={
                    "hjb": sol,
                    "drift": DriftField(grid, alpha_out, drift.gamma_left, drift.gamma_right),
                    "cost_field": F,
                    "reference": reference,
                    "certification": cert,
                    "projection_events": projection_events,
                    "moment_monitor": monitor,
                    "cost_identity_gap": gap,
                },
            )

        # damped update in the primal fields, then re-push
        if len(history) > 1 and w1 > 0.9 * history[-2][0]:
            omega = max(omega / 2.0, options.damping_floor)
        if state_m is None or omega >= 1.0:
            state_m, state_alpha = m, alpha_out
        else:
            dens = (1 - omega) * state_m.density + omega * m.density
            excl = tuple(
                (1 - omega) * a + omega * b
                for a, b in zip(state_m.excluded_mass, m.excluded_mass)
            )
            state_m = DensityMeasure(grid, dens, excl)
            state_alpha = (1 - omega) * state_alpha + omega * alpha_out
        mu = pushforward(state_m, state_alpha)
        if k == 0:
            omega = options.damping
        prev_sol, prev_drift = sol, drift

    raise NonConvergence(
        f"equilibrium loop did not meet tol {options.tol_outer:.1e} in "
        f"{options.max_outer} sweeps (last residuals {history[-1]})",
        history,
    )


def uniqueness_probe(
    model: HamiltonianModel,
    cost_rule,
    grid: GridDomain,
    options: SolverOptions | None = None,
    gap_factor: float = 5.0,
) -> ProbeResult:
    """Solve from two structurally different seeds (reference feedback and
    zero control) and compare the equilibria; agreement within a small
    multiple of the outer tolerance is evidence of uniqueness in practice."""
    options = options or SolverOptions()
    reference = solve_reference_problem(model.q, model.sigma, grid, tol=options.hjb_tol)
    seed_a = reference.seed_measure
    seed_b = pushforward(reference.m, np.zeros(grid.n_nodes))
    quiet = replace(options, certify="skip")

    def run(seed):
        return solve_equilibrium(model, cost_rule, grid, quiet, seed_mu=seed)

    with ThreadPoolExecutor(max_workers=2) as pool:
        fa, fb = pool.submit(run, seed_a), pool.submit(run, seed_b)
        sa, sb = fa.result(), fb.result()

    gaps = {
        "measure": transport_distance_1d(sa.mu, sb.mu) / (1.0 + sa.control_moment),
        "ergodic_constant": abs(sa.rho - sb.rho) / (1.0 + abs(sa.rho)),
        "value": float(np.max(np.abs(sa.u.values - sb.u.values)))
        / (1.0 + float(np.max(np.abs(sa.u.values)))),
        "density": float(sa.m.grid.integrate(np.abs(sa.m.density - sb.m.density))),
    }
    return ProbeResult(states=(sa, sb), gaps=gaps, tolerance=gap_factor * options.tol_outer)
