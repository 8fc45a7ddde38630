import numpy as np
import pytest

from mfgcontrol.measure import (
    HypothesisViolation,
    JointMeasure,
    gradient_envelope_guard,
    pushforward,
    solve_mu_fixed_point,
    transport_distance_1d,
)
from mfgcontrol.model import Family, HamiltonianModel


def atoms(x, a, w):
    return JointMeasure(x=np.asarray(x, float), alpha=np.asarray(a, float), w=np.asarray(w, float))


def test_transport_distance_single_atoms_is_euclidean():
    mu1 = atoms([0.0], [0.0], [1.0])
    mu2 = atoms([3.0], [4.0], [1.0])
    assert transport_distance_1d(mu1, mu2) == pytest.approx(5.0)


def test_transport_distance_under_uniform_control_shift():
    mu1 = atoms([0.3, 0.7], [1.0, 2.0], [0.5, 0.5])
    mu2 = atoms([0.3, 0.7], [1.5, 2.5], [0.5, 0.5])
    assert transport_distance_1d(mu1, mu2) == pytest.approx(0.5)


def test_transport_distance_is_a_metric_on_samples():
    mu1 = atoms([0.1, 0.9], [0.0, 1.0], [0.25, 0.75])
    mu2 = atoms([0.4, 0.6], [-1.0, 2.0], [0.5, 0.5])
    mu3 = atoms([0.2, 0.8], [0.5, 0.5], [0.5, 0.5])
    d12 = transport_distance_1d(mu1, mu2)
    d13 = transport_distance_1d(mu1, mu3)
    d23 = transport_distance_1d(mu2, mu3)
    assert d12 == pytest.approx(transport_distance_1d(mu2, mu1))
    assert transport_distance_1d(mu1, mu1) == pytest.approx(0.0, abs=1e-14)
    assert d12 <= d13 + d23 + 1e-12


def test_moment_functionals_on_constant_control(fixture512):
    m = fixture512.m
    mu = pushforward(m, np.full(m.grid.n_nodes, -1.5))
    assert mu.mean_control() == pytest.approx(-1.5, abs=1e-12)
    assert mu.lambda_r(2.0) == pytest.approx(1.5, rel=1e-12)
    assert mu.lambda_r(3.0) == pytest.approx(1.5, rel=1e-12)


def test_pushforward_weights_are_probabilities(fixture512):
    m = fixture512.m
    mu = pushforward(m, np.zeros(m.grid.n_nodes))
    assert np.sum(mu.w) == pytest.approx(1.0, abs=1e-12)
    assert np.all(mu.w >= 0)
    assert np.array_equal(mu.x, m.grid.nodes)


def test_fixed_point_of_linear_mean_coupling_has_closed_form(fixture512):
    # feedback alpha(x) = -(p(x) + c * mean(mu)) pushes the mean to the
    # unique fixed point mean* = -pbar / (1 + c)
    m = fixture512.m
    grid = m.grid
    p = np.sin(2.0 * np.pi * grid.nodes)
    c = 0.5
    base = pushforward(m, np.zeros(grid.n_nodes))
    pbar = float(np.sum(base.w * p))

    def T(mu):
        return pushforward(m, -(p + c * mu.mean_control()))

    result = solve_mu_fixed_point(T, base, tol=1e-12)
    assert result.residual <= 1e-12
    assert result.mu.mean_control() == pytest.approx(-pbar / (1.0 + c), abs=1e-10)


def test_fixed_point_converges_in_one_step_when_map_is_constant(fixture512):
    m = fixture512.m
    target = pushforward(m, np.full(m.grid.n_nodes, 0.25))

    def T(mu):
        return target

    result = solve_mu_fixed_point(T, pushforward(m, np.zeros(m.grid.n_nodes)), tol=1e-12)
    assert result.iterations <= 2
    assert transport_distance_1d(result.mu, target) <= 1e-12


def test_gradient_envelope_guard_raises_on_wild_gradients(fixture512):
    model = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)
    grid = fixture512.grid
    mu = fixture512.mu
    gradient_envelope_guard(model, fixture512.extras["hjb"].grad_u.values, grid, mu)
    with pytest.raises(HypothesisViolation):
        gradient_envelope_guard(model, np.full(grid.n_nodes, 1e9), grid, mu)


def test_joint_measure_validates_shapes():
    with pytest.raises(ValueError):
        JointMeasure(x=np.zeros(3), alpha=np.zeros(2), w=np.ones(3) / 3)
