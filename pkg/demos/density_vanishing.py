"""How fast the population density vanishes at the walls.

The optimally controlled process is pushed away from the walls hard enough
that its invariant density vanishes like d^{q'}. The exponent steepens as
q drops toward 1 (q' = q/(q-1) grows)."""

import numpy as np

from mfgcontrol import (
    Family,
    HamiltonianModel,
    Stretching,
    build_grid,
    constant_cost,
    flux_residual,
    solve_equilibrium,
    verify_density_asymptotics,
)

print(f"{'q':>5} {'q_conj':>7} {'fitted':>8} {'flux residual':>14}")
for q in (1.25, 1.5, 1.75, 2.0):
    model = HamiltonianModel(family=Family.SHIFTED, q=q, sigma=1.0)
    grid = build_grid(
        0.0, 1.0, 2048, stretching=Stretching.BOUNDARY_CLUSTERED, clustering_ratio=12.0
    )
    state = solve_equilibrium(model, constant_cost(0.0), grid)
    report = verify_density_asymptotics(state.m, model, state.mu)
    fit = report.fits["density_left"]
    flux = flux_residual(state.m, state.extras["drift"], sigma=model.sigma)
    print(f"{q:>5} {model.q_conj:>7.4g} {fit.exponent:>8.4f} {flux:>14.2e}")
