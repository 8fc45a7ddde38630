"""Solver and verification harness for second-order ergodic mean field
games of controls with state constraints on an interval.

The pipeline computes the equilibrium quadruple (value function, ergodic
constant, state density, joint state-control measure) and then checks the
quantitative structure: wall blow-up rates of the value function and its
gradient, wall-vanishing rates of the density, control-moment bounds, the
ergodic cost identity, and pathwise Monte Carlo consistency.
"""

from .domain import GridDomain, ScalarField, Stretching, VectorField, build_grid
from .fp import (
    DriftField,
    InvarianceReport,
    NormalizationFailure,
    build_drift_field,
    check_invariance_conditions,
    flux_residual,
    layered_expectation,
    null_vector_density,
    solve_fp_1d,
    verify_density_asymptotics,
    weak_solution_residual,
)
from .hjb import (
    AsymptoticsReport,
    BoundaryData,
    BoundaryMode,
    DisagreementError,
    HJBSolution,
    NewtonDivergence,
    blowup_coefficient,
    boundary_value,
    curvature_limit,
    gradient_envelope_coefficient,
    make_boundary_data,
    solve_discounted,
    solve_ergodic,
    verify_asymptotics,
)
from .measure import (
    DensityMeasure,
    FixedPointResult,
    HypothesisViolation,
    JointMeasure,
    NonConvergence,
    gradient_envelope_guard,
    pushforward,
    solve_mu_fixed_point,
    transport_distance_1d,
)
from .mfgc import (
    EquilibriumState,
    ProbeResult,
    ReferenceControlProblem,
    SolverOptions,
    apriori_lambda_ceiling,
    congestion_cost,
    constant_cost,
    cost_identity_gap,
    moment_bound_rhs,
    potential_cost,
    solve_equilibrium,
    solve_reference_problem,
    uniqueness_probe,
)
from .model import (
    CertificationFailure,
    CertificationReport,
    ConstantCoupling,
    Family,
    HamiltonianModel,
    MeanControlCoupling,
    certify_assumptions,
    eval_DalphaL,
    eval_DpH,
    eval_H,
    eval_L,
    structural_constant,
)
from .rates import PowerFit, boundary_window, fit_log_slope, fit_power, fit_power_with_offset
from .sde import (
    PathEnsemble,
    SimulationConfig,
    compare_invariant_density,
    estimate_rho,
    simulate_equilibrium,
    simulate_paths,
)

__version__ = "0.1.0"
