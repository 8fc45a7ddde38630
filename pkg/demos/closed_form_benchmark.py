"""
Closed-form benchmark
=====================

On the unit interval with quadratic Hamiltonian, unit noise and no running
cost the equilibrium is known exactly: rho = pi^2, u = -ln sin(pi x) up to
a constant, m = 2 sin^2(pi x). Solve it numerically and compare.
"""

import numpy as np

from mfgcontrol import Family, HamiltonianModel, Stretching, build_grid, constant_cost, solve_equilibrium

model = HamiltonianModel(family=Family.SHIFTED, q=2.0, sigma=1.0)
grid = build_grid(0.0, 1.0, 512, stretching=Stretching.BOUNDARY_CLUSTERED)
state = solve_equilibrium(model, constant_cost(0.0), grid)

print(f"rho         = {state.rho:.12f}")
print(f"pi^2        = {np.pi**2:.12f}")
print(f"rho error   = {state.rho - np.pi**2:.3e}")

x = grid.nodes
exact_u = -np.log(np.sin(np.pi * x))
anchor = grid.midpoint_index
u = state.u.values - state.u.values[anchor] + exact_u[anchor]
interior = grid.node_distance > 0.05
print(f"u  error    = {np.max(np.abs(u - exact_u)[interior]):.3e}  (sup over d > 0.05)")

exact_m = 2.0 * np.sin(np.pi * x) ** 2
print(f"m  error    = {grid.integrate(np.abs(state.m.density - exact_m)):.3e}  (L1)")
print(f"control sd  = {state.control_moment:.6f}  (exact 2 pi = {2*np.pi:.6f})")

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
ax1.plot(x, u, label="computed u")
ax1.plot(x, exact_u, "--", label="-ln sin(pi x)")
ax1.set_ylim(0, 4)
ax1.legend()
ax2.plot(x, state.m.density, label="computed m")
ax2.plot(x, exact_m, "--", label="2 sin^2(pi x)")
ax2.legend()
fig.tight_layout()
fig.savefig("closed_form_benchmark.svg")
print("wrote closed_form_benchmark.svg")
