import numpy as np
import pytest

from mfgcontrol import constant_cost, solve_equilibrium
from mfgcontrol.domain import ScalarField, Stretching, build_grid
from mfgcontrol.hjb import (
    blowup_coefficient,
    curvature_limit,
    gradient_envelope_coefficient,
    solve_discounted,
    solve_ergodic,
    verify_asymptotics,
)
from mfgcontrol.model import ConstantCoupling, Family, HamiltonianModel

from conftest import clustered


def zero_cost(grid):
    return ScalarField(grid, np.zeros(grid.n_nodes))


def test_closed_form_benchmark_is_reproduced(fixture512):
    grid = fixture512.grid
    x = grid.nodes
    assert fixture512.rho == pytest.approx(np.pi**2, abs=1e-3)
    exact = -np.log(np.sin(np.pi * x))
    anchor = grid.midpoint_index
    shifted = fixture512.u.values - fixture512.u.values[anchor] + exact[anchor]
    mask = grid.node_distance > 0.05
    assert np.max(np.abs(shifted - exact)[mask]) < 1e-3


def test_interval_rescaling_quarters_the_ergodic_constant():
    model = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)
    grid = clustered(512, 0.0, 2.0)
    sol = solve_ergodic(model, None, zero_cost(grid))
    assert sol.rho == pytest.approx(np.pi**2 / 4.0, abs=1e-4)


def test_momentum_scaling_doubles_the_ergodic_constant():
    model = HamiltonianModel(
        family=Family.SCALED, q=2.0, sigma=1.0, coupling_psi=ConstantCoupling(2.0)
    )
    grid = clustered(512)
    sol = solve_ergodic(model, None, zero_cost(grid))
    assert sol.rho == pytest.approx(np.pi**2 / 2.0, abs=1e-4)


def test_constant_cost_shift_is_exact():
    model = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)
    grid = clustered(256)
    base = solve_ergodic(model, None, zero_cost(grid))
    shifted = solve_ergodic(model, None, ScalarField(grid, np.full(grid.n_nodes, 1.5)))
    assert shifted.rho - base.rho == pytest.approx(1.5, abs=1e-10)
    assert np.max(np.abs(shifted.u.values - base.u.values)) < 1e-9


def test_anchor_choice_does_not_move_the_ergodic_constant():
    model = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)
    grid = clustered(512)
    a = solve_ergodic(model, None, zero_cost(grid), x0_index=100)
    b = solve_ergodic(model, None, zero_cost(grid), x0_index=400)
    assert abs(a.rho - b.rho) < 1e-8
    # values agree up to the anchoring constant
    diff = a.u.values - b.u.values
    assert np.max(diff) - np.min(diff) < 1e-7


def test_direct_and_homotopy_modes_agree():
    model = HamiltonianModel(family=Family.SHIFTED, q=1.5, sigma=1.0)
    grid = clustered(256)
    direct = solve_ergodic(model, None, zero_cost(grid), mode="direct")
    homotopy = solve_ergodic(model, None, zero_cost(grid), mode="homotopy")
    assert direct.rho == pytest.approx(homotopy.rho, rel=1e-6)


def test_vanishing_discount_approaches_the_ergodic_constant():
    model = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)
    grid = clustered(512)
    ergodic = solve_ergodic(model, None, zero_cost(grid))
    errs = []
    for lam in (1e-1, 1e-2, 1e-3):
        sol = solve_discounted(model, None, zero_cost(grid), lam)
        errs.append(abs(sol.anchor_value - ergodic.rho))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_discounted_rejects_nonpositive_rate():
    model = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)
    grid = clustered(128)
    with pytest.raises(ValueError):
        solve_discounted(model, None, zero_cost(grid), 0.0)


def test_ergodic_constant_refines_at_second_order(refinement_states):
    r = [refinement_states[n].rho for n in (512, 1024, 2048)]
    order = np.log(abs(r[0] - r[1]) / abs(r[1] - r[2])) / np.log(2.0)
    assert order >= 1.5


def test_wall_coefficients_match_hand_formulas():
    # q = 1.5: kappa = (q-1)^(2-q') (2-q)^(-1) (f1/sigma)^(1-q') with q' = 3
    model = HamiltonianModel(family=Family.SHIFTED, q=1.5, sigma=2.0)
    kappa = blowup_coefficient(model, None)
    assert kappa == pytest.approx(0.5 ** (-1.0) * 2.0 * (1.0 / 2.0) ** (-2.0), rel=1e-12)
    grad = gradient_envelope_coefficient(model, None)
    assert grad == pytest.approx((1.0 * 0.5 / 2.0) ** (-2.0), rel=1e-12)
    # q = 2 turns the leading profile logarithmic with slope sigma / f1
    model2 = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=3.0)
    assert blowup_coefficient(model2, None) == pytest.approx(3.0, rel=1e-12)
    assert curvature_limit(model2, None) > 0


def test_asymptotics_report_passes_on_the_benchmark(fixture512, model_q2):
    report = verify_asymptotics(fixture512.extras["hjb"], model_q2, fixture512.mu)
    assert report.passed, [c.name for c in report.checks if not c.passed]
    fits = report.fits
    assert fits["value_left"].coefficient == pytest.approx(1.0, rel=0.05)
    assert fits["gradient_left"].exponent == pytest.approx(-1.0, abs=0.05)


def test_decoupled_equilibrium_converges_in_one_outer_iteration(fixture512):
    assert fixture512.outer_iterations == 1
