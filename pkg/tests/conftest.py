"""Shared fixtures. The expensive solves are session-scoped; everything
downstream reads them without re-solving."""

import numpy as np
import pytest

from mfgcontrol import (
    Family,
    HamiltonianModel,
    MeanControlCoupling,
    SimulationConfig,
    Stretching,
    build_grid,
    constant_cost,
    simulate_equilibrium,
    solve_equilibrium,
    uniqueness_probe,
)


def clustered(n, a=0.0, b=1.0, ratio=5.0):
    return build_grid(
        a, b, n, stretching=Stretching.BOUNDARY_CLUSTERED, clustering_ratio=ratio
    )


@pytest.fixture(scope="session")
def model_q2():
    return HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)


@pytest.fixture(scope="session")
def grid512():
    return clustered(512)


@pytest.fixture(scope="session")
def fixture512(model_q2, grid512):
    """Closed-form benchmark: on (0,1) with q=2, sigma=1 and zero cost the
    equilibrium is rho = pi^2, u = -ln sin(pi x), m = 2 sin^2(pi x)."""
    return solve_equilibrium(model_q2, constant_cost(0.0), grid512)


@pytest.fixture(scope="session")
def refinement_states(model_q2, fixture512):
    """The benchmark at three resolutions for stability and order checks."""
    out = {512: fixture512}
    for n in (1024, 2048):
        out[n] = solve_equilibrium(model_q2, constant_cost(0.0), clustered(n))
    return out


@pytest.fixture(scope="session")
def qsuite():
    """Equilibria across the exponent range, three resolutions each.

    Stronger clustering (ratio 12) pushes the trim small enough that the
    slowly decaying correction terms for q near 2 leave the fit window."""
    out = {}
    for q in (1.25, 1.5, 1.75):
        model = HamiltonianModel(family=Family.SHIFTED, q=q, sigma=1.0)
        states = {
            n: solve_equilibrium(model, constant_cost(0.0), clustered(n, ratio=12.0))
            for n in (512, 1024, 2048)
        }
        out[q] = (model, states)
    return out


@pytest.fixture(scope="session")
def small_ensemble(model_q2, fixture512):
    """Short path ensemble for unit-level checks (the long acceptance run
    lives in the acceptance suite)."""
    cfg = SimulationConfig(horizon=20.0, n_paths=16, seed=3)
    return simulate_equilibrium(model_q2, fixture512, cfg)


@pytest.fixture(scope="session")
def coupled_probe(grid512):
    """Monotone mean-control coupling solved from two structurally
    different seeds."""
    model = HamiltonianModel(
        family=Family.SHIFTED,
        q=2.0,
        sigma=1.0,
        coupling_phi=MeanControlCoupling(0.2),
    )
    return uniqueness_probe(model, constant_cost(0.0), grid512)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
