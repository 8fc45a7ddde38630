"""Acceptance battery: one test per shipped guarantee, at the shipped
tolerances. Each test name is the pass/fail line for its criterion."""

import time

import numpy as np
import pytest

from mfgcontrol import (
    ConstantCoupling,
    Family,
    HamiltonianModel,
    MeanControlCoupling,
    SimulationConfig,
    blowup_coefficient,
    certify_assumptions,
    compare_invariant_density,
    constant_cost,
    estimate_rho,
    flux_residual,
    gradient_envelope_coefficient,
    simulate_equilibrium,
    solve_equilibrium,
    verify_asymptotics,
    verify_density_asymptotics,
)

from conftest import clustered


def _weighted_gradient_sup(state, qc):
    grid = state.grid
    d = grid.node_distance
    mask = d <= 0.1 * grid.length
    g = state.extras["hjb"].grad_u.values
    return float(np.max(np.abs(g[mask]) * d[mask] ** (qc - 1.0)))


def test_criterion_1_closed_form_benchmark(model_q2):
    grid = clustered(512)
    t0 = time.perf_counter()
    state = solve_equilibrium(model_q2, constant_cost(0.0), grid)
    wall = time.perf_counter() - t0
    assert wall <= 10.0, f"solve took {wall:.1f}s"
    assert state.rho == pytest.approx(np.pi**2, abs=1e-3)
    x = grid.nodes
    exact_u = -np.log(np.sin(np.pi * x))
    anchor = grid.midpoint_index
    u = state.u.values - state.u.values[anchor] + exact_u[anchor]
    interior = grid.node_distance > 0.05
    u_err = float(np.max(np.abs(u - exact_u)[interior]))
    assert u_err <= 1e-3
    m_err = grid.integrate(np.abs(state.m.density - 2.0 * np.sin(np.pi * x) ** 2))
    assert m_err <= 1e-4
    print(
        f"criterion 1 PASS: rho err {abs(state.rho - np.pi**2):.2e}, "
        f"u err {u_err:.2e}, m err {m_err:.2e}, {wall:.2f}s"
    )


def test_criterion_2_value_blowup_rates(qsuite, fixture512, model_q2):
    for q, (model, states) in sorted(qsuite.items()):
        state = states[2048]
        report = verify_asymptotics(state.extras["hjb"], model, state.mu)
        lead = blowup_coefficient(model, state.mu)
        pred = 2.0 - model.q_conj
        for side in ("left", "right"):
            fit = report.fits[f"value_{side}"]
            assert fit.exponent == pytest.approx(pred, abs=0.05), (q, side)
            assert fit.coefficient == pytest.approx(lead, rel=0.05), (q, side)
    report = verify_asymptotics(fixture512.extras["hjb"], model_q2, fixture512.mu)
    for side in ("left", "right"):
        slope = report.fits[f"value_{side}"].coefficient
        assert slope == pytest.approx(1.0, rel=0.05), side
    print("criterion 2 PASS: value wall rates at q in {1.25, 1.5, 1.75}, log profile at q=2")


def test_criterion_3_gradient_blowup_rates(qsuite, fixture512, model_q2, refinement_states):
    suites = [(model_q2, {n: s for n, s in refinement_states.items()})]
    suites += [qsuite[q] for q in sorted(qsuite)]
    for model, states in suites:
        qc = model.q_conj
        primary = states[max(states)]
        report = verify_asymptotics(primary.extras["hjb"], model, primary.mu)
        gc = gradient_envelope_coefficient(model, primary.mu)
        for side in ("left", "right"):
            fit = report.fits[f"gradient_{side}"]
            assert fit.exponent == pytest.approx(1.0 - qc, abs=0.05), (model.q, side)
            assert fit.coefficient == pytest.approx(gc, rel=0.05), (model.q, side)
        sups = [_weighted_gradient_sup(states[n], qc) for n in sorted(states)]
        spread = (max(sups) - min(sups)) / float(np.median(sups))
        assert spread <= 0.10, (model.q, sups)
    print("criterion 3 PASS: gradient wall rates and weighted sup stable across refinements")


def test_criterion_4_density_vanishing_rates(qsuite, fixture512, model_q2):
    model15, states15 = qsuite[1.5]
    report = verify_density_asymptotics(states15[2048].m, model15, states15[2048].mu)
    for side in ("left", "right"):
        assert report.fits[f"density_{side}"].exponent == pytest.approx(3.0, abs=0.05)
    report = verify_density_asymptotics(fixture512.m, model_q2, fixture512.mu)
    for side in ("left", "right"):
        assert report.fits[f"density_{side}"].exponent == pytest.approx(2.0, abs=0.05)
    flux = flux_residual(fixture512.m, fixture512.extras["drift"])
    assert flux <= 1e-6
    print(f"criterion 4 PASS: density exponents q' at q=1.5 and q=2, flux residual {flux:.1e}")


def test_criterion_5_moment_bounds(fixture512, refinement_states, qsuite, coupled_probe):
    states = list(refinement_states.values())
    for _, suite in qsuite.values():
        states.extend(suite.values())
    states.extend(coupled_probe.states)
    checked = 0
    for state in states:
        monitor = state.extras["moment_monitor"]
        assert monitor, "no accepted iterates recorded"
        for entry in monitor:
            assert entry["within_bound"], (state.rho, entry)
            checked += 1
        assert state.control_moment <= state.apriori_bound
    assert fixture512.control_moment == pytest.approx(2.0 * np.pi, rel=0.01)
    print(f"criterion 5 PASS: moment bound at {checked} accepted iterates, Lambda_2 = 2pi +- 1%")


def test_criterion_6_monte_carlo_consistency(model_q2, fixture512):
    cfg = SimulationConfig()  # horizon 200, 64 paths, fixed seed
    assert cfg.horizon == 200.0 and cfg.n_paths == 64
    t0 = time.perf_counter()
    ensemble = simulate_equilibrium(model_q2, fixture512, cfg)
    wall = time.perf_counter() - t0
    assert wall <= 60.0, f"simulation took {wall:.1f}s"
    assert ensemble.n_exits == 0
    mean, stderr, n_used = estimate_rho(ensemble)
    assert n_used == 64
    gap = abs(mean - fixture512.rho)
    assert gap <= 3.0 * stderr
    assert stderr <= 0.05 * fixture512.rho
    l1 = compare_invariant_density(ensemble, fixture512.m)
    assert l1 <= 0.05
    print(
        f"criterion 6 PASS: gap {gap:.3f} <= 3se {3*stderr:.3f}, "
        f"se/rho {stderr/fixture512.rho:.2%}, occupation L1 {l1:.3f}, {wall:.1f}s"
    )


def test_criterion_7_cost_identity(fixture512, refinement_states, qsuite, coupled_probe):
    states = list(refinement_states.values())
    states += [suite[2048] for _, suite in qsuite.values()]
    states += list(coupled_probe.states)
    worst = 0.0
    for state in states:
        gap = state.extras["cost_identity_gap"]
        tol = 1e-3 * (1.0 + abs(state.rho))
        assert gap <= tol, (state.rho, gap, tol)
        worst = max(worst, gap / tol)
    print(f"criterion 7 PASS: identity closes on {len(states)} runs, worst gap/tol {worst:.2f}")


def test_criterion_8_coupled_uniqueness(coupled_probe, fixture512):
    assert coupled_probe.passed, coupled_probe.gaps
    for state in coupled_probe.states:
        mean = float(np.sum(state.mu.w * state.mu.alpha))
        assert abs(mean) <= 1e-4
    gap = abs(coupled_probe.states[0].rho - fixture512.rho)
    assert gap <= 1e-3
    print(
        f"criterion 8 PASS: seeds agree (worst gap {max(coupled_probe.gaps.values()):.1e}), "
        f"mean control {mean:.1e}, decoupled match {gap:.1e}"
    )


def test_criterion_9_certification():
    shifted = HamiltonianModel(
        family=Family.SHIFTED, q=1.5, sigma=1.0, coupling_phi=MeanControlCoupling(0.2)
    )
    scaled = HamiltonianModel(
        family=Family.SCALED,
        q=2.0,
        sigma=0.5,
        coupling_psi=ConstantCoupling(2.0),
        coupling_V=ConstantCoupling(0.3),
    )
    for model in (shifted, scaled):
        report = certify_assumptions(model)
        assert report.passed, [c.name for c in report.checks if not c.passed]
    flipped = HamiltonianModel(
        family=Family.SHIFTED, q=1.5, sigma=1.0, coupling_phi=MeanControlCoupling(-0.5)
    )
    report = certify_assumptions(flipped)
    assert not report.passed
    failed = [c for c in report.checks if not c.passed]
    assert any("monotonicity" in c.name for c in failed)
    assert all(c.witness for c in failed)
    print(
        "criterion 9 PASS: both families certified, sign-flipped coupling rejected "
        f"({'; '.join(c.name for c in failed)})"
    )
