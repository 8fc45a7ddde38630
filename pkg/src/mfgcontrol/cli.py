"""Command line front end: solve / verify / simulate / sweep.

Runs are described by an INI-style config with sections [model], [domain],
[solver], [simulate], [outputs] and [sweep].  Parsing is strict: unknown
sections or keys are rejected.  Every run writes CSV tables plus one
manifest; the manifest re-parses as a config and reproduces the run
(bitwise-identical CSVs for the same seed).  Exit codes are stable for
scripting: 0 ok, 1 config error, 2 solver failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .domain import Stretching, build_grid
from .fp import NormalizationFailure, verify_density_asymptotics, weak_solution_residual
from .hjb import (
    DisagreementError,
    NewtonDivergence,
    blowup_coefficient,
    gradient_envelope_coefficient,
    verify_asymptotics,
)
from .measure import HypothesisViolation, NonConvergence
from .mfgc import (
    SolverOptions,
    congestion_cost,
    constant_cost,
    potential_cost,
    solve_equilibrium,
)
from .model import (
    CertificationFailure,
    ConstantCoupling,
    Family,
    HamiltonianModel,
    MeanControlCoupling,
    certify_assumptions,
)
from .rates import fit_log_slope, fit_power
from .sde import (
    SimulationConfig,
    compare_invariant_density,
    density_bin_masses,
    estimate_rho,
    simulate_equilibrium,
)

OUT_ENV = "MFGCONTROL_OUT"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3

_SOLVER_ERRORS = (
    NewtonDivergence,
    DisagreementError,
    NonConvergence,
    NormalizationFailure,
    HypothesisViolation,
)


class ConfigError(Exception):
    """Anything wrong with the run description (not with the mathematics)."""


# -- config parsing ----------------------------------------------------------------

_SECTION_KEYS = {
    "model": {
        "family",
        "q",
        "sigma",
        "phi",
        "psi",
        "v",
        "c0",
        "cost",
        "cost_value",
        "cost_weight",
        "cost_center",
        "cost_bandwidth",
    },
    "domain": {"a", "b", "n_nodes", "delta", "stretching", "clustering_ratio"},
    "solver": {
        "tol_outer",
        "max_outer",
        "damping",
        "damping_floor",
        "hjb_mode",
        "hjb_tol",
        "lambda_schedule",
        "certify",
        "enforce_projection",
    },
    "simulate": {
        "horizon",
        "base_dt",
        "n_paths",
        "seed",
        "kappa",
        "burn_in_fraction",
        "n_bins",
        "dt_floor",
        "max_rounds",
    },
    "outputs": {"directory", "formats"},
    "sweep": {"axis", "values", "workers"},
}

# manifest bookkeeping sections, skipped when a manifest is fed back as a config
_INFO_SECTIONS = {"run", "result"}


def read_ini(path) -> dict:
    """Strict INI read: known sections, known keys, no interpolation."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    raw = {}
    for section in parser.sections():
        if section in _INFO_SECTIONS:
            continue
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTION_KEYS[section]
        body = {}
        for key, value in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            body[key] = value.strip()
        raw[section] = body
    return raw


def _need(raw, section):
    if section not in raw:
        raise ConfigError(f"missing required section [{section}]")
    return raw[section]


def _get(body, key, default):
    return body.get(key, default)


def _as_float(body, section, key, default):
    text = body.get(key, None)
    if text is None:
        return default
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got '{text}'") from None


def _as_int(body, section, key, default):
    text = body.get(key, None)
    if text is None:
        return default
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got '{text}'") from None


def _as_bool(body, section, key, default):
    text = body.get(key, None)
    if text is None:
        return default
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key} must be a boolean, got '{text}'")


def _coupling(text, section, key):
    """'0.5' is a constant; '0.5 mean' weights the mean control of mu."""
    tokens = text.split()
    try:
        if len(tokens) == 1:
            return ConstantCoupling(float(tokens[0]))
        if len(tokens) == 2 and tokens[1] in ("mean", "mean_control"):
            return MeanControlCoupling(float(tokens[0]))
    except ValueError:
        pass
    raise ConfigError(
        f"[{section}] {key} must be '<number>' or '<number> mean', got '{text}'"
    )


def _coupling_text(coupling):
    if isinstance(coupling, MeanControlCoupling):
        return f"{_fmt(coupling.weight)} mean"
    return _fmt(coupling.value)


@dataclass
class RunConfig:
    """Typed view of a parsed config plus the fully resolved raw mapping."""

    model: HamiltonianModel
    cost_kind: str
    cost_params: dict
    grid_params: dict
    options: SolverOptions
    sim: SimulationConfig
    out_dir: str
    formats: tuple
    sweep_axis: str | None
    sweep_values: tuple
    sweep_workers: int | None
    source: str

    def build_grid(self):
        p = self.grid_params
        try:
            return build_grid(
                p["a"],
                p["b"],
                p["n_nodes"],
                delta=p["delta"],
                stretching=p["stretching"],
                clustering_ratio=p["clustering_ratio"],
            )
        except ValueError as exc:
            raise ConfigError(f"[domain] {exc}") from exc

    def cost_rule(self):
        if self.cost_kind == "constant":
            return constant_cost(self.cost_params["value"])
        if self.cost_kind == "quadratic":
            w = self.cost_params["weight"]
            c = self.cost_params["center"]
            return potential_cost(lambda x: w * (x - c) ** 2)
        return congestion_cost(
            self.cost_params["weight"], bandwidth=self.cost_params["bandwidth"]
        )

    def resolved(self) -> dict:
        """Complete section/key mapping with every effective value filled in."""
        m = self.model
        model = {
            "family": m.family.value,
            "q": _fmt(m.q),
            "sigma": _fmt(m.sigma),
            "phi": _coupling_text(m.coupling_phi),
            "psi": _coupling_text(m.coupling_psi),
            "v": _coupling_text(m.coupling_V),
            "c0": _fmt(m.c0) if m.c0 is not None else "auto",
            "cost": self.cost_kind,
        }
        if self.cost_kind == "constant":
            model["cost_value"] = _fmt(self.cost_params["value"])
        elif self.cost_kind == "quadratic":
            model["cost_weight"] = _fmt(self.cost_params["weight"])
            model["cost_center"] = _fmt(self.cost_params["center"])
        else:
            model["cost_weight"] = _fmt(self.cost_params["weight"])
            model["cost_bandwidth"] = _fmt(self.cost_params["bandwidth"])
        g = self.grid_params
        domain = {
            "a": _fmt(g["a"]),
            "b": _fmt(g["b"]),
            "n_nodes": str(g["n_nodes"]),
            "delta": "auto" if g["delta"] == "auto" else _fmt(g["delta"]),
            "stretching": g["stretching"].value,
            "clustering_ratio": _fmt(g["clustering_ratio"]),
        }
        o = self.options
        solver = {
            "tol_outer": _fmt(o.tol_outer),
            "max_outer": str(o.max_outer),
            "damping": _fmt(o.damping),
            "damping_floor": _fmt(o.damping_floor),
            "hjb_mode": o.hjb_mode,
            "hjb_tol": _fmt(o.hjb_tol),
            "lambda_schedule": (
                "auto"
                if o.lambda_schedule is None
                else ",".join(_fmt(v) for v in o.lambda_schedule)
            ),
            "certify": o.certify,
            "enforce_projection": "true" if o.enforce_projection else "false",
        }
        s = self.sim
        simulate = {
            "horizon": _fmt(s.horizon),
            "base_dt": _fmt(s.base_dt),
            "n_paths": str(s.n_paths),
            "seed": str(s.seed),
            "kappa": _fmt(s.kappa),
            "burn_in_fraction": _fmt(s.burn_in_fraction),
            "n_bins": str(s.n_bins),
            "dt_floor": _fmt(s.dt_floor),
            "max_rounds": "none" if s.max_rounds is None else str(s.max_rounds),
        }
        out = {"directory": self.out_dir, "formats": ",".join(self.formats)}
        resolved = {
            "model": model,
            "domain": domain,
            "solver": solver,
            "simulate": simulate,
            "outputs": out,
        }
        if self.sweep_axis is not None:
            resolved["sweep"] = {
                "axis": self.sweep_axis,
                "values": ",".join(
                    str(v) if isinstance(v, int) else _fmt(v) for v in self.sweep_values
                ),
                "workers": "auto" if self.sweep_workers is None else str(self.sweep_workers),
            }
        return resolved


def parse_config(path) -> RunConfig:
    return config_from_raw(read_ini(path), source=str(path))


def config_from_raw(raw: dict, source: str = "<memory>") -> RunConfig:
    mb = _need(raw, "model")
    family_text = _get(mb, "family", "shifted").lower()
    try:
        family = Family(family_text)
    except ValueError:
        raise ConfigError(
            f"[model] family must be 'shifted' or 'scaled', got '{family_text}'"
        ) from None
    q = _as_float(mb, "model", "q", 2.0)
    sigma = _as_float(mb, "model", "sigma", 1.0)
    phi = _coupling(_get(mb, "phi", "0.0"), "model", "phi")
    psi = _coupling(_get(mb, "psi", "1.0"), "model", "psi")
    vco = _coupling(_get(mb, "v", "0.0"), "model", "v")
    c0_text = _get(mb, "c0", "auto")
    c0 = None if c0_text.lower() in ("auto", "none") else float(c0_text)
    try:
        model = HamiltonianModel(
            family=family,
            q=q,
            sigma=sigma,
            coupling_phi=phi,
            coupling_psi=psi,
            coupling_V=vco,
            c0=c0,
        )
    except ValueError as exc:
        # e.g. the exponent constraint q in (1, 2]
        raise ConfigError(f"[model] {exc}") from exc

    cost_kind = _get(mb, "cost", "constant").lower()
    if cost_kind == "constant":
        cost_params = {"value": _as_float(mb, "model", "cost_value", 0.0)}
    elif cost_kind == "quadratic":
        cost_params = {
            "weight": _as_float(mb, "model", "cost_weight", 1.0),
            "center": _as_float(mb, "model", "cost_center", 0.0),
        }
    elif cost_kind == "congestion":
        cost_params = {
            "weight": _as_float(mb, "model", "cost_weight", 1.0),
            "bandwidth": _as_float(mb, "model", "cost_bandwidth", 0.1),
        }
    else:
        raise ConfigError(
            f"[model] cost must be constant, quadratic or congestion, got '{cost_kind}'"
        )

    db = _need(raw, "domain")
    a = _as_float(db, "domain", "a", 0.0)
    b = _as_float(db, "domain", "b", 1.0)
    if not b > a:
        raise ConfigError(f"[domain] needs b > a, got a={a}, b={b}")
    delta_text = _get(db, "delta", "auto").lower()
    delta = "auto" if delta_text == "auto" else float(delta_text)
    stretch_text = _get(db, "stretching", "boundary_clustered").lower()
    try:
        stretching = Stretching(stretch_text)
    except ValueError:
        raise ConfigError(
            f"[domain] stretching must be one of "
            f"{[s.value for s in Stretching]}, got '{stretch_text}'"
        ) from None
    grid_params = {
        "a": a,
        "b": b,
        "n_nodes": _as_int(db, "domain", "n_nodes", 256),
        "delta": delta,
        "stretching": stretching,
        "clustering_ratio": _as_float(db, "domain", "clustering_ratio", 5.0),
    }
    if grid_params["n_nodes"] < 16:
        raise ConfigError("[domain] n_nodes must be at least 16")

    sb = raw.get("solver", {})
    sched_text = _get(sb, "lambda_schedule", "auto").lower()
    if sched_text in ("auto", "none"):
        schedule = None
    else:
        try:
            schedule = tuple(float(tok) for tok in sched_text.split(",") if tok.strip())
        except ValueError:
            raise ConfigError(
                f"[solver] lambda_schedule must be comma-separated numbers, got '{sched_text}'"
            ) from None
    certify = _get(sb, "certify", "warn").lower()
    if certify not in ("warn", "raise", "skip"):
        raise ConfigError(f"[solver] certify must be warn, raise or skip, got '{certify}'")
    hjb_mode = _get(sb, "hjb_mode", "auto").lower()
    if hjb_mode not in ("auto", "direct", "homotopy", "both"):
        raise ConfigError(f"[solver] unknown hjb_mode '{hjb_mode}'")
    options = SolverOptions(
        tol_outer=_as_float(sb, "solver", "tol_outer", 1e-6),
        max_outer=_as_int(sb, "solver", "max_outer", 60),
        damping=_as_float(sb, "solver", "damping", 0.5),
        damping_floor=_as_float(sb, "solver", "damping_floor", 1.0 / 64.0),
        hjb_mode=hjb_mode,
        hjb_tol=_as_float(sb, "solver", "hjb_tol", 1e-11),
        lambda_schedule=schedule,
        certify=certify,
        enforce_projection=_as_bool(sb, "solver", "enforce_projection", True),
    )

    smb = raw.get("simulate", {})
    max_rounds_text = _get(smb, "max_rounds", "none").lower()
    try:
        sim = SimulationConfig(
            horizon=_as_float(smb, "simulate", "horizon", 200.0),
            base_dt=_as_float(smb, "simulate", "base_dt", 1e-3),
            n_paths=_as_int(smb, "simulate", "n_paths", 64),
            seed=_as_int(smb, "simulate", "seed", 70),
            kappa=_as_float(smb, "simulate", "kappa", 0.02),
            burn_in_fraction=_as_float(smb, "simulate", "burn_in_fraction", 0.25),
            n_bins=_as_int(smb, "simulate", "n_bins", 64),
            dt_floor=_as_float(smb, "simulate", "dt_floor", 1e-15),
            max_rounds=(
                None if max_rounds_text in ("none", "auto") else int(max_rounds_text)
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"[simulate] {exc}") from exc

    ob = raw.get("outputs", {})
    out_dir = _get(ob, "directory", "runs")
    formats_text = _get(ob, "formats", "csv,svg")
    formats = tuple(
        dict.fromkeys(tok.strip().lower() for tok in formats_text.split(",") if tok.strip())
    )
    for fmt in formats:
        if fmt not in ("csv", "svg"):
            raise ConfigError(f"[outputs] unknown format '{fmt}' (csv and svg exist)")
    if "csv" not in formats:
        raise ConfigError("[outputs] formats must include csv")

    sweep_axis = None
    sweep_values: tuple = ()
    sweep_workers = None
    if "sweep" in raw:
        swb = raw["sweep"]
        sweep_axis = _get(swb, "axis", "").lower()
        if sweep_axis not in ("q", "n_nodes", "coupling"):
            raise ConfigError(
                f"[sweep] axis must be q, n_nodes or coupling, got '{sweep_axis}'"
            )
        values_text = _get(swb, "values", "")
        tokens = [tok.strip() for tok in values_text.split(",") if tok.strip()]
        if not tokens:
            raise ConfigError("[sweep] values is empty; nothing to sweep")
        try:
            if sweep_axis == "n_nodes":
                sweep_values = tuple(int(tok) for tok in tokens)
            else:
                sweep_values = tuple(float(tok) for tok in tokens)
        except ValueError:
            raise ConfigError(f"[sweep] values could not be parsed: '{values_text}'") from None
        workers_text = _get(swb, "workers", "auto").lower()
        sweep_workers = None if workers_text == "auto" else int(workers_text)
        if sweep_workers is not None and sweep_workers < 1:
            raise ConfigError("[sweep] workers must be at least 1")

    return RunConfig(
        model=model,
        cost_kind=cost_kind,
        cost_params=cost_params,
        grid_params=grid_params,
        options=options,
        sim=sim,
        out_dir=out_dir,
        formats=formats,
        sweep_axis=sweep_axis,
        sweep_values=sweep_values,
        sweep_workers=sweep_workers,
        source=source,
    )


# -- output helpers ----------------------------------------------------------------


def _fmt(value) -> str:
    """Shortest exact decimal for floats so re-reads round-trip bitwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if x != x:
            return "nan"
        return repr(x)
    return str(value)


def write_csv(path, comment: str, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {comment}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _resolve_out(flag_value, cfg: RunConfig) -> Path:
    if flag_value:
        chosen = flag_value
    elif os.environ.get(OUT_ENV):
        chosen = os.environ[OUT_ENV]
    else:
        chosen = cfg.out_dir
    out = Path(chosen)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(path, cfg: RunConfig, command: str, result: dict):
    """Resolved config plus bookkeeping; feeds back in as a config file."""
    parser = configparser.ConfigParser(interpolation=None)
    resolved = cfg.resolved()
    for section, body in resolved.items():
        parser[section] = body
    parser["run"] = {
        "command": command,
        "source": cfg.source,
        "version": __version__,
    }
    parser["result"] = {key: _fmt(val) for key, val in result.items()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# run manifest; reusable directly as --config\n")
        parser.write(fh)


# -- solve -------------------------------------------------------------------------


def _solve_bundle(cfg: RunConfig, out: Path, verbose: bool = False):
    """Solve and write the full bundle; returns the equilibrium state."""
    grid = cfg.build_grid()
    state = solve_equilibrium(cfg.model, cfg.cost_rule(), grid, cfg.options)
    hjb = state.extras["hjb"]
    drift = state.extras["drift"]
    F = state.extras["cost_field"]

    write_csv(
        out / "solution.csv",
        "equilibrium fields per node: value u, gradient, density m, "
        "optimal drift, running-cost field",
        ("x", "u", "grad_u", "m", "drift", "cost"),
        zip(
            grid.nodes,
            state.u.values,
            hjb.grad_u.values,
            state.m.density,
            drift.values,
            F.values,
        ),
    )
    write_csv(
        out / "measure.csv",
        "joint state-control measure atoms: position, control, weight",
        ("x", "alpha", "weight"),
        zip(state.mu.x, state.mu.alpha, state.mu.w),
    )
    lead = blowup_coefficient(cfg.model, state.mu)
    gcoef = gradient_envelope_coefficient(cfg.model, state.mu)
    scalars = [
        ("rho", state.rho),
        ("control_moment", state.control_moment),
        ("control_moment_ceiling", state.apriori_bound),
        ("cost_identity_gap", state.extras["cost_identity_gap"]),
        ("outer_iterations", state.outer_iterations),
        ("newton_residual", hjb.newton_residual),
        ("wall_value_coefficient", lead),
        ("wall_gradient_coefficient", gcoef),
        ("projection_events", state.extras["projection_events"]),
    ]
    write_csv(
        out / "scalars.csv",
        "run summary: ergodic constant, control moment and bound, "
        "identity defect, iteration counts, wall coefficients",
        ("name", "value"),
        scalars,
    )
    write_csv(
        out / "residuals.csv",
        "outer-loop residuals per iteration: measure transport gap, "
        "ergodic-constant increment, drift increment",
        ("iteration", "w1", "drho", "ddrift"),
        [(k,) + tuple(row) for k, row in enumerate(state.residual_history)],
    )
    write_csv(
        out / "homotopy.csv",
        "vanishing-discount chain of the final value solve: discount, "
        "ergodic estimate, Newton iterations, scheme",
        ("lambda", "rho_estimate", "newton_iterations", "scheme"),
        hjb.lambda_history,
    )
    if "svg" in cfg.formats:
        _write_plots(cfg, state, out)
    if verbose:
        print(
            f"solved: rho={state.rho:.8g} outer_iterations={state.outer_iterations} "
            f"control_moment={state.control_moment:.6g}"
        )
    return state


def _result_block(state) -> dict:
    w1, drho, db = state.residual_history[-1]
    return {
        "status": "ok",
        "rho": state.rho,
        "outer_iterations": state.outer_iterations,
        "control_moment": state.control_moment,
        "control_moment_ceiling": state.apriori_bound,
        "cost_identity_gap": state.extras["cost_identity_gap"],
        "final_w1": w1,
        "final_drho": drho,
        "final_ddrift": db,
    }


def cmd_solve(config_path, out_dir=None, workers=None, verbose=False) -> int:
    del workers
    try:
        cfg = parse_config(config_path)
        out = _resolve_out(out_dir, cfg)
        cfg = replace(cfg, out_dir=str(out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        state = _solve_bundle(cfg, out, verbose)
    except _SOLVER_ERRORS as exc:
        _write_failure(out, cfg, "solve", exc)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CertificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    write_manifest(out / "manifest.ini", cfg, "solve", _result_block(state))
    print(f"rho = {_fmt(state.rho)} ({state.outer_iterations} outer iterations) -> {out}")
    return EXIT_OK


def _write_failure(out: Path, cfg: RunConfig, command: str, exc: Exception):
    """Diagnostics for a failed run: manifest with the error plus any history."""
    write_manifest(
        out / "manifest.ini",
        cfg,
        command,
        {"status": "failed", "error": f"{type(exc).__name__}: {exc}"},
    )
    history = getattr(exc, "history", None)
    if history:
        write_csv(
            out / "diagnostics.csv",
            "residual history of the failed iteration",
            ("iteration", "residual"),
            list(enumerate(np.atleast_1d(np.asarray(history, dtype=float)).ravel())),
        )


# -- verify ------------------------------------------------------------------------


def correction_scale_case(q: float) -> tuple:
    """Decay scale of the next-order wall correction, by exponent regime."""
    if abs(q - 2.0) < 1e-12:
        return "d", "q = 2"
    if abs(q - 1.5) < 1e-12:
        return "d|ln d|", "q = 3/2"
    if q < 1.5:
        return "d", "1 < q < 3/2"
    return "d^(q'-2)", "3/2 < q < 2"


def _report_rows(name_prefix, report):
    rows = []
    for check in report.checks:
        rows.append(
            (
                f"{name_prefix}:{check.name}",
                bool(check.passed),
                float(check.margin),
                getattr(check, "witness", ""),
            )
        )
    return rows


def cmd_verify(config_path, out_dir=None, workers=None, verbose=False) -> int:
    del workers
    try:
        cfg = parse_config(config_path)
        out = _resolve_out(out_dir, cfg)
        cfg = replace(cfg, out_dir=str(out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    rows = []
    model = cfg.model
    # structural certification first: a model that fails it should be
    # reported as a verification failure, not crash the solver downstream
    cert = certify_assumptions(model)
    rows.extend(_report_rows("model", cert))
    if not cert.passed:
        _finish_verify(out, cfg, rows, verbose)
        failed = next(c.name for c in cert.checks if not c.passed)
        write_manifest(
            out / "manifest.ini",
            cfg,
            "verify",
            {"status": "failed", "verification": "fail", "failed_check": f"model:{failed}"},
        )
        print(f"verification failed: model:{failed}", file=sys.stderr)
        return EXIT_VERIFY

    run_cfg = replace(cfg, options=replace(cfg.options, certify="skip"))
    try:
        state = _solve_bundle(run_cfg, out, verbose)
    except _SOLVER_ERRORS as exc:
        _write_failure(out, cfg, "verify", exc)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    grid = state.grid
    hjb = state.extras["hjb"]
    drift = state.extras["drift"]
    rows.extend(_report_rows("value", verify_asymptotics(hjb, model, state.mu)))
    rows.extend(_report_rows("density", verify_density_asymptotics(state.m, model, state.mu)))

    nodes = grid.nodes
    span = grid.length
    battery = [
        nodes - grid.a,
        (nodes - grid.a) ** 2,
        np.sin(np.pi * (nodes - grid.a) / span),
        np.cos(np.pi * (nodes - grid.a) / span),
    ]
    residuals = weak_solution_residual(state.m, drift, battery, sigma=model.sigma)
    for k, res in enumerate(residuals):
        rows.append((f"density:weak_residual_{k}", abs(res) <= 1e-3, 1e-3 - abs(res), ""))

    ceiling_margin = state.apriori_bound - state.control_moment
    rows.append(
        (
            "measure:moment_ceiling",
            ceiling_margin >= 0.0,
            ceiling_margin,
            f"control moment {state.control_moment:.6g} vs ceiling {state.apriori_bound:.6g}",
        )
    )
    gap = state.extras["cost_identity_gap"]
    gap_tol = 1e-3 * (1.0 + abs(state.rho))
    rows.append(
        (
            "cost:ergodic_identity",
            gap <= gap_tol,
            gap_tol - gap,
            f"defect {gap:.4g} vs tolerance {gap_tol:.4g}",
        )
    )
    scale, regime = correction_scale_case(model.q)
    rows.append(
        (
            "value:correction_scale_class",
            True,
            0.0,
            f"q={_fmt(model.q)} is in regime {regime}: correction scale {scale}; "
            "cases: d on 1<q<3/2, d|ln d| at q=3/2, d^(q'-2) on 3/2<q<2, d at q=2",
        )
    )

    ok = _finish_verify(out, cfg, rows, verbose)
    result = _result_block(state)
    result["verification"] = "pass" if ok else "fail"
    if not ok:
        result["failed_check"] = next(name for name, passed, _, _ in rows if not passed)
    write_manifest(out / "manifest.ini", cfg, "verify", result)
    if ok:
        print(f"verification passed: {len(rows)} checks -> {out}")
        return EXIT_OK
    print(f"verification failed: {result['failed_check']}", file=sys.stderr)
    return EXIT_VERIFY


def _finish_verify(out: Path, cfg: RunConfig, rows, verbose: bool) -> bool:
    write_csv(
        out / "verify_report.csv",
        "verification checks: name, pass flag, signed margin (negative = fail), witness",
        ("check", "passed", "margin", "witness"),
        [(n, p, m, w.replace(",", ";")) for n, p, m, w in rows],
    )
    if verbose:
        for name, passed, margin, _ in rows:
            print(f"  {'PASS' if passed else 'FAIL'} {name} (margin {margin:+.3g})")
    return all(passed for _, passed, _, _ in rows)


# -- simulate ----------------------------------------------------------------------


def cmd_simulate(config_path, out_dir=None, workers=None, verbose=False) -> int:
    del workers
    try:
        cfg = parse_config(config_path)
        if cfg.sim.n_paths < 2:
            raise ConfigError(
                "[simulate] n_paths must be at least 2 to form a standard error"
            )
        out = _resolve_out(out_dir, cfg)
        cfg = replace(cfg, out_dir=str(out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        state = _solve_bundle(cfg, out, verbose)
        ensemble = simulate_equilibrium(cfg.model, state, cfg.sim)
    except _SOLVER_ERRORS as exc:
        _write_failure(out, cfg, "simulate", exc)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    averages = ensemble.path_averages
    write_csv(
        out / "paths.csv",
        "per-path outcomes: exit flag (1 = step collapse at a wall), "
        "time-averaged running cost after burn-in",
        ("path", "exit_flag", "time_avg_cost"),
        [
            (k, int(ensemble.exit_flags[k]), float(averages[k]))
            for k in range(cfg.sim.n_paths)
        ],
    )
    centers = 0.5 * (ensemble.bin_edges[:-1] + ensemble.bin_edges[1:])
    reference = density_bin_masses(state.m, ensemble.bin_edges)
    write_csv(
        out / "occupation.csv",
        "occupation histogram vs invariant density, both as per-bin mass",
        ("bin_center", "occupation", "m_reference"),
        zip(centers, ensemble.occupation, reference),
    )

    rho_mc, stderr, n_used = estimate_rho(ensemble)
    gap = abs(rho_mc - state.rho)
    within = gap <= 3.0 * stderr
    l1 = compare_invariant_density(ensemble, state.m)
    write_csv(
        out / "rho_comparison.csv",
        "ergodic constant: solver value vs Monte Carlo time average",
        (
            "rho_pde",
            "rho_mc",
            "stderr",
            "n_paths_used",
            "abs_gap",
            "within_3_stderr",
            "occupation_l1",
        ),
        [(state.rho, rho_mc, stderr, n_used, gap, within, l1)],
    )
    result = _result_block(state)
    result.update(
        {
            "rho_mc": rho_mc,
            "rho_mc_stderr": stderr,
            "n_exits": ensemble.n_exits,
            "occupation_l1": l1,
        }
    )
    write_manifest(out / "manifest.ini", cfg, "simulate", result)

    print(
        f"rho: pde={_fmt(state.rho)} mc={_fmt(rho_mc)} stderr={stderr:.4g} "
        f"gap={gap:.4g} [{'ok' if within else 'mismatch'}]"
    )
    if ensemble.n_exits > 0:
        print(
            f"step collapse: {ensemble.n_exits} path(s) hit the adaptive floor "
            "at a wall; statistics incomplete",
            file=sys.stderr,
        )
        return EXIT_SOLVER
    if not within:
        print(
            f"verification failed: |rho_mc - rho| = {gap:.4g} exceeds 3*stderr = "
            f"{3.0 * stderr:.4g}",
            file=sys.stderr,
        )
        return EXIT_VERIFY
    return EXIT_OK


# -- sweep -------------------------------------------------------------------------


def _point_label(axis: str, value) -> str:
    text = str(value) if isinstance(value, int) else _fmt(float(value))
    return f"point_{axis}_{text.replace('.', 'p').replace('-', 'm')}"


def _apply_axis(raw: dict, axis: str, value) -> dict:
    override = {section: dict(body) for section, body in raw.items()}
    override.pop("sweep", None)
    if axis == "q":
        override.setdefault("model", {})["q"] = _fmt(float(value))
    elif axis == "n_nodes":
        override.setdefault("domain", {})["n_nodes"] = str(int(value))
    else:  # coupling: weight of the mean-control shift
        override.setdefault("model", {})["phi"] = f"{_fmt(float(value))} mean"
    return override


def _sweep_point(task) -> dict:
    """One axis point, run in a worker process; must stay picklable."""
    raw, axis, value, subdir, verbose = task
    row = {"axis": axis, "value": value, "status": "ok", "error": ""}
    try:
        cfg = config_from_raw(_apply_axis(raw, axis, value), source=f"<sweep {axis}={value}>")
        out = Path(subdir)
        out.mkdir(parents=True, exist_ok=True)
        state = _solve_bundle(cfg, out, verbose)
        write_manifest(out / "manifest.ini", cfg, "solve", _result_block(state))
        model = cfg.model
        grid = state.grid
        log_mode = abs(model.q - 2.0) < 1e-12
        row.update(
            {
                "rho": state.rho,
                "control_moment": state.control_moment,
                "value_exponent": float("nan"),
                "value_log_slope": float("nan"),
                "gradient_exponent": float("nan"),
                "density_exponent": float("nan"),
                "n_nodes": grid.n_nodes,
            }
        )

        def fitted(fits, key, attr):
            fit = fits.get(key)
            return float(getattr(fit, attr)) if fit is not None else float("nan")

        # rate fits are reported where the grid supports the fitting window;
        # a coarse ladder point still contributes its ergodic constant
        try:
            report = verify_asymptotics(state.extras["hjb"], model, state.mu)
            dens = verify_density_asymptotics(state.m, model, state.mu)
        except Exception:
            pass
        else:
            row.update(
                {
                    "value_exponent": (
                        float("nan")
                        if log_mode
                        else fitted(report.fits, "value_left", "exponent")
                    ),
                    "value_log_slope": (
                        fitted(report.fits, "value_left", "coefficient")
                        if log_mode
                        else float("nan")
                    ),
                    "gradient_exponent": fitted(report.fits, "gradient_left", "exponent"),
                    "density_exponent": fitted(dens.fits, "density_left", "exponent"),
                }
            )
    except Exception as exc:  # recorded per point; the sweep itself continues
        row.update(
            {
                "status": "failed",
                "error": f"{type(exc).__name__}: {exc}",
                "rho": float("nan"),
                "control_moment": float("nan"),
                "value_exponent": float("nan"),
                "value_log_slope": float("nan"),
                "gradient_exponent": float("nan"),
                "density_exponent": float("nan"),
                "n_nodes": 0,
            }
        )
    return row


def _refinement_orders(rows) -> list:
    """Observed convergence order of rho from consecutive ladder triples."""
    ok = [r for r in rows if r["status"] == "ok"]
    ok.sort(key=lambda r: r["n_nodes"])
    orders = []
    for i in range(len(ok) - 2):
        n0, n1, n2 = (ok[i + j]["n_nodes"] for j in range(3))
        r0, r1, r2 = (ok[i + j]["rho"] for j in range(3))
        d01, d12 = abs(r0 - r1), abs(r1 - r2)
        ratio = n1 / n0
        if d12 == 0.0 or ratio <= 1.0:
            order = float("inf") if d01 > 0 else float("nan")
        else:
            order = float(np.log(d01 / d12) / np.log(ratio))
        orders.append((f"{n0}/{n1}/{n2}", "rho", order))
    return orders


def cmd_sweep(config_path, out_dir=None, workers=None, verbose=False) -> int:
    try:
        cfg = parse_config(config_path)
        if cfg.sweep_axis is None:
            raise ConfigError("missing required section [sweep]")
        raw = read_ini(config_path)
        out = _resolve_out(out_dir, cfg)
        cfg = replace(cfg, out_dir=str(out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    axis, values = cfg.sweep_axis, cfg.sweep_values
    n_workers = workers or cfg.sweep_workers or min(len(values), os.cpu_count() or 1)
    tasks = [
        (raw, axis, value, str(out / _point_label(axis, value)), verbose)
        for value in values
    ]
    if n_workers == 1 or len(tasks) == 1:
        rows = [_sweep_point(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))

    write_csv(
        out / "sweep.csv",
        "one row per axis point: ergodic constant, control moment, fitted "
        "wall exponents (value/gradient/density); failures recorded in place",
        (
            "axis",
            "value",
            "status",
            "rho",
            "control_moment",
            "value_exponent",
            "value_log_slope",
            "gradient_exponent",
            "density_exponent",
            "error",
        ),
        [
            (
                r["axis"],
                r["value"],
                r["status"],
                r["rho"],
                r["control_moment"],
                r["value_exponent"],
                r["value_log_slope"],
                r["gradient_exponent"],
                r["density_exponent"],
                r["error"].replace(",", ";"),
            )
            for r in rows
        ],
    )
    if axis == "n_nodes":
        orders = _refinement_orders(rows)
        write_csv(
            out / "orders.csv",
            "observed convergence order from consecutive refinement triples",
            ("ladder", "quantity", "order"),
            orders,
        )
        if verbose:
            for ladder, quantity, order in orders:
                print(f"  order({quantity}, {ladder}) = {order:.3f}")
    write_manifest(
        out / "manifest.ini",
        cfg,
        "sweep",
        {
            "status": "ok" if all(r["status"] == "ok" for r in rows) else "partial",
            "points": len(rows),
            "failed": sum(r["status"] != "ok" for r in rows),
        },
    )
    failed = [r for r in rows if r["status"] != "ok"]
    print(
        f"sweep over {axis}: {len(rows) - len(failed)}/{len(rows)} points ok -> {out}"
    )
    if failed:
        for r in failed:
            print(f"point {axis}={r['value']} failed: {r['error']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


# -- plots -------------------------------------------------------------------------


def _write_plots(cfg: RunConfig, state, out: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    model = cfg.model
    grid = state.grid
    hjb = state.extras["hjb"]
    x, u = grid.nodes, state.u.values
    log_mode = abs(model.q - 2.0) < 1e-12
    lead = blowup_coefficient(model, state.mu)
    qc = model.q_conj

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, u, lw=1.2, label="u")
    window = 0.1 * grid.length
    for side in ("left", "right"):
        d = x - grid.a if side == "left" else grid.b - x
        mask = (d <= window) & (d > 0)
        if not np.any(mask):
            continue
        core = -np.log(d[mask]) if log_mode else d[mask] ** (2.0 - qc)
        edge = np.argmax(d[mask])
        offset = u[mask][edge] - lead * core[edge]
        ax.plot(
            x[mask],
            lead * core + offset,
            "--",
            lw=1.0,
            color="tab:red",
            label="wall asymptote" if side == "left" else None,
        )
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend()
    ax.set_title("value function and wall asymptotes")
    fig.savefig(out / "value.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(x, state.m.density, lw=1.2, color="tab:green")
    ax.set_xlabel("x")
    ax.set_ylabel("m")
    ax.set_title("invariant state density")
    fig.savefig(out / "density.svg")
    plt.close(fig)

    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0))
    d_left = x - grid.a
    mask = (d_left > grid.delta) & (d_left <= window)
    g = np.abs(hjb.grad_u.values)
    if np.any(mask):
        gfit = fit_power(d_left[mask], g[mask])
        axes[0].loglog(d_left[mask], g[mask], "o", ms=3, label="|grad u|")
        axes[0].loglog(
            d_left[mask],
            gfit.coefficient * d_left[mask] ** gfit.exponent,
            "--",
            label=f"fit: d^{gfit.exponent:.3f}",
        )
        axes[0].set_xlabel("wall distance d")
        axes[0].legend()
        axes[0].set_title("gradient blow-up rate")
        mfit_mask = mask & (state.m.density > 0)
        mfit = fit_power(d_left[mfit_mask], state.m.density[mfit_mask])
        axes[1].loglog(d_left[mfit_mask], state.m.density[mfit_mask], "o", ms=3, label="m")
        axes[1].loglog(
            d_left[mfit_mask],
            mfit.coefficient * d_left[mfit_mask] ** mfit.exponent,
            "--",
            label=f"fit: d^{mfit.exponent:.3f}",
        )
        axes[1].set_xlabel("wall distance d")
        axes[1].legend()
        axes[1].set_title("density vanishing rate")
    fig.tight_layout()
    fig.savefig(out / "rates.svg")
    plt.close(fig)

    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0))
    chain = [(lam, rho) for lam, rho, _, _ in hjb.lambda_history if lam > 0]
    if chain:
        lams, rhos = zip(*chain)
        axes[0].semilogx(lams, rhos, "o-", ms=4)
        axes[0].invert_xaxis()
    axes[0].axhline(state.rho, color="tab:red", ls="--", lw=1.0, label="final rho")
    axes[0].set_xlabel("discount")
    axes[0].set_ylabel("ergodic estimate")
    axes[0].legend()
    axes[0].set_title("vanishing-discount trace")
    w1 = [row[0] for row in state.residual_history]
    axes[1].semilogy(range(len(w1)), np.maximum(w1, 1e-17), "o-", ms=4)
    axes[1].set_xlabel("outer iteration")
    axes[1].set_ylabel("measure residual")
    axes[1].set_title("outer fixed-point residuals")
    fig.tight_layout()
    fig.savefig(out / "homotopy.svg")
    plt.close(fig)


# -- entry point -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # bad flags are config errors, not solver errors
        raise ConfigError(message)


_COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = _Parser(
        prog="mfgcontrol",
        description=(
            "equilibrium solver and verification harness for constrained "
            "ergodic mean field games of controls on an interval"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "compute the equilibrium and write the solution bundle"),
        ("verify", "solve, then check wall rates, moments and identities"),
        ("simulate", "solve, then cross-check the cost by Monte Carlo paths"),
        ("sweep", "run the solver across an axis of configs concurrently"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the run config (INI)")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--workers", type=int, default=None, help="sweep worker count")
        sp.add_argument("--verbose", action="store_true")
    try:
        ns = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _COMMANDS[ns.command](
        ns.config, out_dir=ns.out, workers=ns.workers, verbose=ns.verbose
    )
