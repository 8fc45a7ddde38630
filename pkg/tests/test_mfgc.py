import numpy as np
import pytest

from mfgcontrol import (
    CertificationFailure,
    Family,
    HamiltonianModel,
    MeanControlCoupling,
    SolverOptions,
    apriori_lambda_ceiling,
    congestion_cost,
    constant_cost,
    solve_equilibrium,
    solve_reference_problem,
)

from conftest import clustered


def test_reference_problem_reproduces_the_bare_benchmark(grid512):
    ref = solve_reference_problem(2.0, 1.0, grid512)
    assert ref.rho == pytest.approx(np.pi**2, abs=1e-3)
    # E[|b0|^{q'}] = E[b0^2] = 4 pi^2 for the bare q=2 problem
    assert ref.control_moment_power == pytest.approx(4.0 * np.pi**2, rel=1e-3)


def test_moment_ceiling_formula(model_q2, grid512):
    ref = solve_reference_problem(2.0, 1.0, grid512)
    c0 = model_q2.C0
    expect = (4.0 * c0**2 + 3.0 * c0**2 * ref.control_moment_power) ** 0.5
    assert apriori_lambda_ceiling(model_q2, ref) == pytest.approx(expect, rel=1e-12)


def test_equilibrium_control_moment_sits_under_the_ceiling(fixture512):
    assert fixture512.control_moment == pytest.approx(2.0 * np.pi, rel=0.01)
    assert fixture512.control_moment <= fixture512.apriori_bound


def test_moment_bound_holds_at_every_accepted_iterate(fixture512):
    monitor = fixture512.extras["moment_monitor"]
    assert len(monitor) >= 1
    assert all(entry["within_bound"] for entry in monitor)


def test_cost_identity_closes(fixture512):
    gap = fixture512.extras["cost_identity_gap"]
    assert gap <= 1e-3 * (1.0 + abs(fixture512.rho))


def test_constant_cost_shifts_the_ergodic_constant_only(fixture512, model_q2, grid512):
    lifted = solve_equilibrium(model_q2, constant_cost(1.5), grid512)
    assert lifted.rho - fixture512.rho == pytest.approx(1.5, abs=1e-9)
    l1 = grid512.integrate(np.abs(lifted.m.density - fixture512.m.density))
    assert l1 < 1e-10


def test_congestion_cost_converges_with_positive_shift(model_q2, grid512):
    state = solve_equilibrium(model_q2, congestion_cost(0.5), grid512)
    assert state.outer_iterations > 1
    # nonnegative crowding cost can only raise the optimal running cost
    assert state.rho > np.pi**2
    assert state.extras["cost_identity_gap"] <= 1e-3 * (1.0 + abs(state.rho))
    assert all(e["within_bound"] for e in state.extras["moment_monitor"])


def test_anti_monotone_coupling_is_rejected_up_front(grid512):
    bad = HamiltonianModel(
        family=Family.SHIFTED,
        q=2.0,
        sigma=1.0,
        coupling_phi=MeanControlCoupling(-0.5),
    )
    opts = SolverOptions(certify="raise")
    with pytest.raises(CertificationFailure):
        solve_equilibrium(bad, constant_cost(0.0), grid512, opts)


def test_probe_seeds_agree(coupled_probe):
    assert coupled_probe.passed, coupled_probe.gaps
    assert max(coupled_probe.gaps.values()) <= coupled_probe.tolerance
    sa, sb = coupled_probe.states
    assert abs(sa.rho - sb.rho) < 1e-8


def test_coupled_mean_control_vanishes_by_symmetry(coupled_probe):
    for state in coupled_probe.states:
        mean = float(np.sum(state.mu.w * state.mu.alpha))
        assert abs(mean) <= 1e-4


def test_symmetric_coupling_matches_the_decoupled_run(coupled_probe, fixture512):
    # mean control is zero, so the coupling term never activates
    sa = coupled_probe.states[0]
    assert sa.rho == pytest.approx(fixture512.rho, abs=1e-3)
    l1 = sa.grid.integrate(np.abs(sa.m.density - fixture512.m.density))
    assert l1 < 1e-3


def test_interval_scaling_on_the_full_loop(model_q2):
    state = solve_equilibrium(model_q2, constant_cost(0.0), clustered(512, 0.0, 2.0))
    assert state.rho == pytest.approx(np.pi**2 / 4.0, abs=1e-4)
    assert state.m.grid.integrate(state.m.density) == pytest.approx(1.0, abs=1e-4)
