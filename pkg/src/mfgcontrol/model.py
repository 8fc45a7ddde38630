"""Hamiltonian structures for the control problem.

Two families are supported, both power-type with exponent q in (1, 2]:

* shifted:  H(p, mu) = |p + phi(mu)|^q + V(mu)
* scaled:   H(p, mu) = psi(mu) |p|^q + V(mu)

The running-cost side is the convex conjugate
L(alpha, mu) = sup_p { -alpha . p - H(p, mu) }, available in closed form
for both families. A numerical sup is kept only as a certification oracle.

Measure couplings enter through three scalar rules evaluated on a joint
state-control measure: phi (a drift shift proportional to the mean
control), psi (a positive kinetic coefficient) and V (a potential offset).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy import optimize

__all__ = [
    "Family",
    "ConstantCoupling",
    "MeanControlCoupling",
    "HamiltonianModel",
    "eval_H",
    "eval_DpH",
    "eval_L",
    "eval_DalphaL",
    "structural_constant",
    "certify_assumptions",
    "CertificationReport",
    "CertificationFailure",
]


class Family(str, Enum):
    SHIFTED = "shifted"
    SCALED = "scaled"


@dataclass(frozen=True)
class ConstantCoupling:
    value: float
    mu_dependent = False

    def __call__(self, mu):
        return self.value


@dataclass(frozen=True)
class MeanControlCoupling:
    """phi(mu) = weight * integral of alpha d mu."""

    weight: float
    mu_dependent = True

    def __call__(self, mu):
        return self.weight * mu.mean_control()


class CertificationFailure(RuntimeError):
    """A structural assumption failed on sampled data."""

    def __init__(self, name, witness, margin):
        self.name = name
        self.witness = witness
        self.margin = margin
        super().__init__(f"certification check '{name}' failed (margin {margin:.3e}): {witness}")


@dataclass(frozen=True)
class HamiltonianModel:
    family: Family
    q: float
    sigma: float
    coupling_phi: Callable = ConstantCoupling(0.0)
    coupling_psi: Callable = ConstantCoupling(1.0)
    coupling_V: Callable = ConstantCoupling(0.0)
    c0: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not 1.0 < self.q <= 2.0:
            raise ValueError("exponent q must lie in (1, 2]")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def mu_dependent(self) -> bool:
        return any(
            getattr(c, "mu_dependent", True)
            for c in (self.coupling_phi, self.coupling_psi, self.coupling_V)
        )

    # family coefficients ----------------------------------------------------

    def f1(self, mu) -> float:
        if self.family is Family.SCALED:
            psi = float(self.coupling_psi(mu))
            if psi <= 0:
                raise ValueError("psi(mu) must be positive")
            return psi
        return 1.0

    def f2(self, mu) -> float:
        if self.family is Family.SHIFTED:
            return float(self.coupling_phi(mu))
        return 0.0

    def f3(self, mu) -> float:
        return abs(float(self.coupling_V(mu)))

    @property
    def conjugate_coeff(self) -> float:
        # coefficient of |alpha|^{q'} in the conjugate of |p|^q
        q, qc = self.q, self.q_conj
        return q ** (1.0 - qc) - q ** (-qc)

    @property
    def C0(self) -> float:
        if self.c0 is not None:
            return self.c0
        value = structural_constant(self)
        object.__setattr__(self, "c0", value)
        return value


# -- pointwise evaluations (p, alpha may be scalars or small vectors) --------


def _vec(x) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError("expected a scalar or a 1D control/momentum vector")
    return v


def eval_H(model: HamiltonianModel, p, mu) -> float:
    z = _vec(p) + model.f2(mu)
    r = float(np.linalg.norm(z))
    return model.f1(mu) * r**model.q + float(model.coupling_V(mu))


def eval_DpH(model: HamiltonianModel, p, mu) -> np.ndarray:
    z = _vec(p) + model.f2(mu)
    r = float(np.linalg.norm(z))
    if r == 0.0:
        return np.zeros_like(z)
    return model.q * model.f1(mu) * r ** (model.q - 2.0) * z


def eval_L(model: HamiltonianModel, alpha, mu) -> float:
    a = _vec(alpha)
    r = float(np.linalg.norm(a))
    qc = model.q_conj
    V = float(model.coupling_V(mu))
    if model.family is Family.SHIFTED:
        phi = model.f2(mu)
        return model.conjugate_coeff * r**qc + float(np.dot(a, np.atleast_1d(phi)).sum()) - V
    psi = model.f1(mu)
    return model.conjugate_coeff * psi ** (1.0 - qc) * r**qc - V


def eval_DalphaL(model: HamiltonianModel, alpha, mu) -> np.ndarray:
    a = _vec(alpha)
    r = float(np.linalg.norm(a))
    q, qc = model.q, model.q_conj
    core = np.zeros_like(a) if r == 0.0 else q ** (1.0 - qc) * r ** (qc - 2.0) * a
    if model.family is Family.SHIFTED:
        return core + model.f2(mu)
    return core * model.f1(mu) ** (1.0 - qc)


# -- vectorized 1D field versions used by the PDE pipeline -------------------


def dph_field(model: HamiltonianModel, p: np.ndarray, mu) -> np.ndarray:
    z = np.asarray(p, dtype=float) + model.f2(mu)
    return model.q * model.f1(mu) * np.abs(z) ** (model.q - 2.0) * z * (z != 0.0)


def lagrangian_field(model: HamiltonianModel, alpha: np.ndarray, mu) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    qc = model.q_conj
    V = float(model.coupling_V(mu))
    if model.family is Family.SHIFTED:
        return model.conjugate_coeff * np.abs(a) ** qc + a * model.f2(mu) - V
    return model.conjugate_coeff * model.f1(mu) ** (1.0 - qc) * np.abs(a) ** qc - V


# -- structural constant -----------------------------------------------------


def _sample_measures(model: HamiltonianModel, lambdas=(0.0, 0.5, 1.0, 10.0, 100.0)):
    """Small deterministic battery of joint measures with prescribed
    control moments Lambda_{q'}; used for the constant and certification."""
    from .measure import JointMeasure

    out = []
    x = np.linspace(0.1, 0.9, 8)
    w = np.full(8, 1.0 / 8.0)
    signs = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    for lam in lambdas:
        out.append(JointMeasure(x=x, alpha=np.full(8, lam), w=w))
        if lam > 0:
            out.append(JointMeasure(x=x, alpha=lam * signs, w=w))
    return out


def structural_constant(model: HamiltonianModel) -> float:
    """Smallest constant satisfying the growth/coercivity box bounds on
    |p| <= 100, Lambda_{q'} <= 100, then doubled.

    The five bounds, with Lam = Lambda_{q'}(mu):
      |D_p H|      <= C (1 + |p|^{q-1} + Lam)
      |H|          <= C (1 + |p|^q) + C^2 Lam^{q'}
      p.D_pH - H   >= |p|^q / C - C (1 + Lam^{q'})
      L(alpha,mu)  >= |alpha|^{q'} / C - C (1 + Lam^{q'})
      |L|          <= C (1 + |alpha|^{q'} + Lam^{q'})
    """
    q, qc = model.q, model.q_conj
    mags = np.array([0.0, 1e-2, 0.1, 0.5, 1.0, 3.0, 10.0, 30.0, 100.0])
    ps = np.unique(np.concatenate([mags, -mags]))
    need = 1.0
    for mu in _sample_measures(model):
        lam = mu.lambda_r(qc)
        lam_pow = lam**qc
        for p in ps:
            H = eval_H(model, p, mu)
            dH = float(eval_DpH(model, p, mu)[0])
            ap = abs(p)
            need = max(need, abs(dH) / (1.0 + ap ** (q - 1.0) + lam))
            # |H| <= C (1 + |p|^q) + C^2 Lam^{q'}: positive root in C
            bcoef = 1.0 + ap**q
            if lam_pow > 0:
                need = max(
                    need,
                    (-bcoef + math.sqrt(bcoef**2 + 4.0 * lam_pow * abs(H)))
                    / (2.0 * lam_pow),
                )
            else:
                need = max(need, abs(H) / bcoef)
            # coercivity: C^2 (1 + Lam^{q'}) + C x - |p|^q >= 0
            xval = p * dH - H
            acoef = 1.0 + lam_pow
            need = max(
                need,
                (-xval + math.sqrt(xval**2 + 4.0 * acoef * ap**q)) / (2.0 * acoef),
            )
        for aval in ps:
            L = eval_L(model, aval, mu)
            aa = abs(aval)
            acoef = 1.0 + lam_pow
            need = max(
                need,
                (-L + math.sqrt(L**2 + 4.0 * acoef * aa**qc)) / (2.0 * acoef),
            )
            need = max(need, abs(L) / (1.0 + aa**qc + lam_pow))
    return 2.0 * need


# -- certification ------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    witness: str = ""

    def __repr__(self):
        tag = "pass" if self.passed else "FAIL"
        return f"<{self.name}: {tag} margin={self.margin:.3e} {self.witness}>"


@dataclass
class CertificationReport:
    model_constant: float
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def raise_if_failed(self):
        for c in self.checks:
            if not c.passed:
                raise CertificationFailure(c.name, c.witness, c.margin)

    def summary_lines(self):
        out = [f"structural constant C0 = {self.model_constant:.6g}"]
        for c in self.checks:
            tag = "pass" if c.passed else "FAIL"
            line = f"{c.name}: {tag} (margin {c.margin:.3e})"
            if c.witness and not c.passed:
                line += f" witness: {c.witness}"
            out.append(line)
        return out


def _numeric_conjugate(model, p, mu, alpha_star):
    """Certification oracle: grid scan plus local polish of
    sup_alpha { -alpha p - L(alpha, mu) }."""

    def neg(a):
        return a * p + eval_L(model, a, mu)

    width = max(1.0, 2.0 * abs(alpha_star))
    grid = alpha_star + np.linspace(-width, width, 41)
    best = grid[int(np.argmin([neg(a) for a in grid]))]
    res = optimize.minimize_scalar(
        neg, bracket=(best - width / 10, best, best + width / 10) if width else None,
        bounds=(best - width, best + width), method="bounded",
        options={"xatol": 1e-12},
    )
    return -min(float(res.fun), neg(best))


def certify_assumptions(model: HamiltonianModel, sample_measures=None, sample_points=None) -> CertificationReport:
    """Sampled certification of the structural assumptions.

    Returns a report with one named check per assumption; callers that
    require a certified model use report.raise_if_failed().
    """
    if sample_measures is None:
        sample_measures = _sample_measures(model, lambdas=(0.0, 0.5, 1.0, 5.0, 25.0))
    if sample_points is None:
        sample_points = [0.0, 0.3, -0.7, 1.0, -2.5, 8.0, -20.0, 55.0]
    q, qc = model.q, model.q_conj
    C0 = model.C0
    checks = []

    def add(name, passed, margin, witness=""):
        checks.append(CheckResult(name, bool(passed), float(margin), witness))

    # Legendre duality of the closed-form pair (H, L)
    worst, wit = 0.0, ""
    for mu in sample_measures[:6]:
        for p in sample_points:
            H = eval_H(model, p, mu)
            a_star = -float(eval_DpH(model, p, mu)[0])
            Hnum = _numeric_conjugate(model, p, mu, a_star)
            gap = abs(H - Hnum) / (1.0 + abs(H))
            if gap > worst:
                worst, wit = gap, f"p={p}, gap={gap:.2e}"
    add("legendre_duality", worst <= 1e-6, 1e-6 - worst, wit)

    # growth and coercivity with the model constant
    names = ["gradient_growth", "value_growth", "coercivity", "lagrangian_lower", "lagrangian_upper"]
    margins = {n: math.inf for n in names}
    wits = {n: "" for n in names}
    for mu in sample_measures:
        lam = mu.lambda_r(qc)
        lam_pow = lam**qc
        for p in sample_points:
            H = eval_H(model, p, mu)
            dH = float(eval_DpH(model, p, mu)[0])
            ap = abs(p)
            mlist = {
                "gradient_growth": C0 * (1 + ap ** (q - 1) + lam) - abs(dH),
                "value_growth": C0 * (1 + ap**q) + C0**2 * lam_pow - abs(H),
                "coercivity": (p * dH - H) - (ap**q / C0 - C0 * (1 + lam_pow)),
            }
            L = eval_L(model, p, mu)
            mlist["lagrangian_lower"] = L - (ap**qc / C0 - C0 * (1 + lam_pow))
            mlist["lagrangian_upper"] = C0 * (1 + ap**qc + lam_pow) - abs(L)
            for n, m in mlist.items():
                if m < margins[n]:
                    margins[n], wits[n] = m, f"p={p}, Lambda={lam:.3g}"
    for n in names:
        add(n, margins[n] >= -1e-9, margins[n], wits[n])

    # monotonicity of L in the measure (integrated against the difference)
    worst, wit = math.inf, ""
    for i, m1 in enumerate(sample_measures):
        for m2 in sample_measures[i + 1 :]:
            val = 0.0
            for xs, al, ws, sgn in ((m1.x, m1.alpha, m1.w, 1.0), (m2.x, m2.alpha, m2.w, -1.0)):
                La = lagrangian_field(model, al, m1) - lagrangian_field(model, al, m2)
                val += sgn * float(np.sum(ws * La))
            if val < worst:
                worst, wit = val, f"pair value {val:.3e}"
    add("lagrangian_monotonicity", worst >= -1e-9, worst, wit)

    # coupling monotonicity of the family's own coupling rule
    worst, wit = math.inf, ""
    for i, m1 in enumerate(sample_measures):
        for m2 in sample_measures[i + 1 :]:
            if model.family is Family.SHIFTED:
                val = (model.f2(m1) - model.f2(m2)) * (m1.mean_control() - m2.mean_control())
            else:
                val = -(model.f1(m1) - model.f1(m2)) * (m1.lambda_r(qc) - m2.lambda_r(qc))
            if val < worst:
                worst, wit = val, (
                    f"mean controls {m1.mean_control():.3g} vs {m2.mean_control():.3g}"
                )
    add("coupling_monotonicity", worst >= -1e-12, worst, wit)

    # Holder regularity of the residual part G = H - f1 |p + f2|^q.
    # For both families G is constant in p; report the admissible cap.
    cap = 1.0 / (q + 1.0) if q <= 1.5 else 2.0 * (q - 1.0) / (q + 1.0)
    worst = 0.0
    for mu in sample_measures[:4]:
        f1, f2v, V = model.f1(mu), model.f2(mu), float(model.coupling_V(mu))
        for p1 in sample_points:
            for p2 in sample_points:
                G1 = eval_H(model, p1, mu) - f1 * abs(p1 + f2v) ** q
                G2 = eval_H(model, p2, mu) - f1 * abs(p2 + f2v) ** q
                worst = max(worst, abs(G1 - G2))
    add(
        "residual_regularity",
        worst <= 1e-10,
        cap,
        f"largest fitting exponent = admissible cap {cap:.4f} (sampled quotients {worst:.1e})",
    )

    # scaling identity sup_p { H(theta p) - theta H(p) } = (1 - theta) H(0)
    worst, wit = 0.0, ""
    for mu in sample_measures[:4]:
        H0 = eval_H(model, 0.0, mu)
        for theta in (0.5, 0.9, 0.99, 1.0):
            def g(p):
                return -(eval_H(model, theta * p, mu) - theta * eval_H(model, p, mu))

            grid = np.linspace(-30, 30, 121)
            best = grid[int(np.argmin([g(p) for p in grid]))]
            res = optimize.minimize_scalar(g, bounds=(best - 1.0, best + 1.0), method="bounded")
            sup = -min(float(res.fun), g(best))
            gap = abs(sup - (1 - theta) * H0) / (1.0 + abs(H0))
            if gap > worst:
                worst, wit = gap, f"theta={theta}"
    add("scaling_identity", worst <= 1e-6, 1e-6 - worst, wit)

    # strict convexity of L in alpha (midpoint test)
    worst, wit = math.inf, ""
    rng = np.random.default_rng(7)
    for mu in sample_measures[:4]:
        for _ in range(40):
            a1, a2 = rng.uniform(-20, 20, size=2)
            if abs(a1 - a2) < 1e-3:
                continue
            gap = 0.5 * (eval_L(model, a1, mu) + eval_L(model, a2, mu)) - eval_L(
                model, 0.5 * (a1 + a2), mu
            )
            if gap < worst:
                worst, wit = gap, f"a1={a1:.3g}, a2={a2:.3g}"
    add("strict_convexity", worst > 0.0, worst, wit)

    # positivity and compactness of the kinetic coefficient
    f1s = [model.f1(mu) for mu in sample_measures]
    lo, hi = min(f1s), max(f1s)
    add(
        "coefficient_positivity",
        lo > 0 and hi <= C0 and lo >= 1.0 / C0,
        lo,
        f"f1 range [{lo:.3g}, {hi:.3g}]",
    )

    # continuity of H in mu along discrete perturbation sequences
    base = sample_measures[2] if len(sample_measures) > 2 else sample_measures[0]
    gaps = []
    from .measure import JointMeasure

    for k in range(1, 7):
        eps = 2.0**-k
        pert = JointMeasure(x=base.x, alpha=base.alpha + eps, w=base.w)
        gaps.append(abs(eval_H(model, 1.0, pert) - eval_H(model, 1.0, base)))
    decreasing = all(g2 <= g1 + 1e-14 for g1, g2 in zip(gaps, gaps[1:]))
    # continuity means the gap vanishes linearly with the perturbation,
    # not that it is small at any one fixed perturbation size
    ceiling = max(1e-12, gaps[0] / 8.0)
    add(
        "measure_continuity",
        decreasing and gaps[-1] <= ceiling,
        ceiling - gaps[-1],
        f"gap {gaps[0]:.2e} -> {gaps[-1]:.2e} over eps 2^-1 .. 2^-6",
    )

    return CertificationReport(model_constant=C0, checks=checks)
