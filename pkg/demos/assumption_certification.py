"""
Structural certification of a model before solving
==================================================

Every solver entry point can first certify that the supplied Hamiltonian
family satisfies the structural assumptions the theory needs: convex
duality, growth bounds, coercivity, coupling monotonicity. A model with a
sign-flipped coupling is rejected with a concrete witness.
"""

from mfgcontrol import (
    ConstantCoupling,
    Family,
    HamiltonianModel,
    MeanControlCoupling,
    certify_assumptions,
)


def show(tag, model):
    report = certify_assumptions(model)
    print(f"{tag}: {'PASS' if report.passed else 'FAIL'}")
    for check in report.checks:
        flag = "ok " if check.passed else "BAD"
        print(f"  [{flag}] {check.name:<28} margin {check.margin:+.3e}")
        if not check.passed:
            print(f"        witness: {check.witness}")
    print()


show(
    "momentum-shift family, monotone coupling",
    HamiltonianModel(
        family=Family.SHIFTED, q=1.5, sigma=1.0, coupling_phi=MeanControlCoupling(0.2)
    ),
)
show(
    "scaled family, constant coefficients",
    HamiltonianModel(
        family=Family.SCALED,
        q=2.0,
        sigma=0.5,
        coupling_psi=ConstantCoupling(2.0),
        coupling_V=ConstantCoupling(0.3),
    ),
)
show(
    "sign-flipped coupling (must fail)",
    HamiltonianModel(
        family=Family.SHIFTED, q=1.5, sigma=1.0, coupling_phi=MeanControlCoupling(-0.5)
    ),
)
