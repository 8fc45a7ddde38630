"""Fitted wall blow-up rates of the value function and its gradient.

The state constraint forces u to blow up at the walls like d^{2-q'} (like
ln(1/d) when q = 2) and |Du| like d^{1-q'}. Fit both on a log-log window
and compare against the predicted exponents and coefficients.
"""

import numpy as np

from mfgcontrol import (
    Family,
    HamiltonianModel,
    Stretching,
    blowup_coefficient,
    build_grid,
    constant_cost,
    gradient_envelope_coefficient,
    solve_equilibrium,
    verify_asymptotics,
)

for q in (1.25, 1.5, 1.75, 2.0):
    model = HamiltonianModel(family=Family.SHIFTED, q=q, sigma=1.0)
    grid = build_grid(
        0.0, 1.0, 2048, stretching=Stretching.BOUNDARY_CLUSTERED, clustering_ratio=12.0
    )
    state = solve_equilibrium(model, constant_cost(0.0), grid)
    report = verify_asymptotics(state.extras["hjb"], model, state.mu)

    qc = model.q_conj
    print(f"q = {q}  (conjugate exponent {qc:.4g})")
    vfit = report.fits["value_left"]
    if q == 2.0:
        print(f"  u ~ K ln(1/d):      slope {vfit.coefficient:+.4f}   predicted {blowup_coefficient(model, state.mu):+.4f}")
    else:
        print(f"  u ~ K d^p:          p = {vfit.exponent:+.4f}   predicted {2 - qc:+.4f}")
        print(f"                      K = {vfit.coefficient:.4f}   predicted {blowup_coefficient(model, state.mu):.4f}")
    gfit = report.fits["gradient_left"]
    print(f"  |Du| ~ K d^p:       p = {gfit.exponent:+.4f}   predicted {1 - qc:+.4f}")
    print(f"                      K = {gfit.coefficient:.4f}   predicted {gradient_envelope_coefficient(model, state.mu):.4f}")
    print(f"  all rate checks pass: {report.passed}")
