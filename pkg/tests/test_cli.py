"""End-to-end checks of the command line front end, run in process."""

import configparser
import csv
import math

import numpy as np
import pytest

from mfgcontrol.cli import main


BASE = """\
[model]
family = shifted
q = 2.0
sigma = 1.0
cost = constant
cost_value = 0.0

[domain]
a = 0.0
b = 1.0
n_nodes = 512
stretching = boundary_clustered
"""


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_manifest(out_dir):
    parser = configparser.ConfigParser(interpolation=None)
    parser.read(out_dir / "manifest.ini")
    return parser


def read_rows(path):
    with open(path) as fh:
        comment = fh.readline()
        assert comment.startswith("#")
        return list(csv.DictReader(fh))


def test_solve_writes_bundle_and_manifest(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE + f"\n[outputs]\ndirectory = {tmp_path/'out'}\nformats = csv,svg\n")
    assert main(["solve", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    for name in (
        "solution.csv",
        "measure.csv",
        "scalars.csv",
        "residuals.csv",
        "homotopy.csv",
        "manifest.ini",
        "value.svg",
        "density.svg",
        "rates.svg",
        "homotopy.svg",
    ):
        assert (out / name).exists(), name
    man = read_manifest(out)
    assert man["run"]["command"] == "solve"
    assert man["result"]["outer_iterations"] == "1"
    assert float(man["result"]["rho"]) == pytest.approx(math.pi**2, abs=1e-3)
    assert "rho = " in capsys.readouterr().out


def test_scalar_table_carries_the_run_summary(tmp_path):
    cfg = write_config(tmp_path, BASE + f"\n[outputs]\ndirectory = {tmp_path/'out'}\nformats = csv\n")
    assert main(["solve", "--config", str(cfg)]) == 0
    rows = {r["name"]: float(r["value"]) for r in read_rows(tmp_path / "out" / "scalars.csv")}
    assert rows["rho"] == pytest.approx(math.pi**2, abs=1e-3)
    assert rows["control_moment"] <= rows["control_moment_ceiling"]
    assert rows["cost_identity_gap"] <= 1e-3 * (1.0 + rows["rho"])


def test_exponent_out_of_range_is_a_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE.replace("q = 2.0", "q = 3.0"))
    assert main(["solve", "--config", str(cfg)]) == 1
    assert "(1, 2]" in capsys.readouterr().err


def test_unknown_key_is_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE + "mesh = fine\n")
    assert main(["solve", "--config", str(cfg)]) == 1
    assert "mesh" in capsys.readouterr().err


def test_unknown_section_is_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE + "\n[extras]\nfoo = 1\n")
    assert main(["solve", "--config", str(cfg)]) == 1
    assert "extras" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.ini")]) == 1
    assert "config error" in capsys.readouterr().err


def test_unknown_flag_is_a_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE)
    assert main(["solve", "--config", str(cfg), "--bogus"]) == 1


def test_manifest_reruns_bitwise_identically(tmp_path):
    cfg = write_config(tmp_path, BASE + f"\n[outputs]\ndirectory = {tmp_path/'one'}\nformats = csv\n")
    assert main(["solve", "--config", str(cfg)]) == 0
    manifest = tmp_path / "one" / "manifest.ini"
    assert main(["solve", "--config", str(manifest), "--out", str(tmp_path / "two")]) == 0
    for name in ("solution.csv", "measure.csv", "scalars.csv", "residuals.csv", "homotopy.csv"):
        a = (tmp_path / "one" / name).read_bytes()
        b = (tmp_path / "two" / name).read_bytes()
        assert a == b, name


def test_env_var_selects_the_output_directory(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("MFGCONTROL_OUT", str(target))
    cfg = write_config(tmp_path, BASE)
    assert main(["solve", "--config", str(cfg)]) == 0
    assert (target / "solution.csv").exists()


def test_out_flag_beats_the_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("MFGCONTROL_OUT", str(tmp_path / "losing"))
    winning = tmp_path / "winning"
    cfg = write_config(tmp_path, BASE)
    assert main(["solve", "--config", str(cfg), "--out", str(winning)]) == 0
    assert (winning / "solution.csv").exists()
    assert not (tmp_path / "losing").exists()


def test_verify_reports_all_checks(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE + f"\n[outputs]\ndirectory = {tmp_path/'out'}\nformats = csv\n")
    assert main(["verify", "--config", str(cfg)]) == 0
    assert "verification passed" in capsys.readouterr().out
    rows = read_rows(tmp_path / "out" / "verify_report.csv")
    names = {r["check"] for r in rows}
    assert "value:value_blowup_exponent" in names
    assert "density:density_exponent" in names
    assert "cost:ergodic_identity" in names
    assert "measure:moment_ceiling" in names
    assert "value:correction_scale_class" in names
    assert all(r["passed"] == "true" for r in rows)
    man = read_manifest(tmp_path / "out")
    assert man["result"]["verification"] == "pass"


def test_verify_rejects_sign_flipped_coupling(tmp_path, capsys):
    text = BASE.replace("cost = constant", "phi = -0.5 mean\ncost = constant")
    cfg = write_config(tmp_path, text + f"\n[outputs]\ndirectory = {tmp_path/'out'}\nformats = csv\n")
    assert main(["verify", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert "model:" in err
    man = read_manifest(tmp_path / "out")
    assert man["result"]["verification"] == "fail"
    assert man["result"]["failed_check"].startswith("model:")


def test_simulate_matches_the_pde_constant(tmp_path, capsys):
    text = BASE + f"\n[simulate]\nhorizon = 20.0\nn_paths = 16\nseed = 3\n\n[outputs]\ndirectory = {tmp_path/'one'}\nformats = csv\n"
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert "rho: pde=" in capsys.readouterr().out
    rows = read_rows(tmp_path / "one" / "rho_comparison.csv")
    assert rows[0]["within_3_stderr"] == "true"
    paths = read_rows(tmp_path / "one" / "paths.csv")
    assert len(paths) == 16
    assert all(r["exit_flag"] == "0" for r in paths)
    occ = read_rows(tmp_path / "one" / "occupation.csv")
    l1 = sum(abs(float(r["occupation"]) - float(r["m_reference"])) for r in occ)
    assert l1 <= 0.06


def test_simulate_reruns_bitwise_identically(tmp_path):
    text = BASE + f"\n[simulate]\nhorizon = 5.0\nn_paths = 8\nseed = 11\n\n[outputs]\ndirectory = {tmp_path/'one'}\nformats = csv\n"
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "two")]) == 0
    for name in ("paths.csv", "occupation.csv", "rho_comparison.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes(), name


def test_simulate_needs_an_ensemble(tmp_path, capsys):
    text = BASE + "\n[simulate]\nhorizon = 5.0\nn_paths = 1\n"
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "n_paths" in capsys.readouterr().err


def test_sweep_ladder_reports_convergence_order(tmp_path, capsys):
    text = (
        BASE
        + f"\n[outputs]\ndirectory = {tmp_path/'out'}\nformats = csv\n"
        + "\n[sweep]\naxis = n_nodes\nvalues = 128, 256, 512\nworkers = 3\n"
    )
    cfg = write_config(tmp_path, text)
    assert main(["sweep", "--config", str(cfg)]) == 0
    rows = read_rows(tmp_path / "out" / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok", "ok", "ok"]
    for r in rows:
        sub = tmp_path / "out" / f"point_n_nodes_{r['value']}"
        assert (sub / "manifest.ini").exists()
    orders = read_rows(tmp_path / "out" / "orders.csv")
    rho_orders = [float(r["order"]) for r in orders if r["quantity"] == "rho"]
    assert rho_orders and rho_orders[-1] >= 1.5


def test_sweep_runs_inline_with_one_worker(tmp_path):
    text = (
        BASE
        + f"\n[outputs]\ndirectory = {tmp_path/'out'}\nformats = csv\n"
        + "\n[sweep]\naxis = n_nodes\nvalues = 128, 256\n"
    )
    cfg = write_config(tmp_path, text)
    assert main(["sweep", "--config", str(cfg), "--workers", "1"]) == 0
    assert len(read_rows(tmp_path / "out" / "sweep.csv")) == 2


def test_sweep_records_partial_failures(tmp_path, capsys):
    text = (
        BASE.replace("n_nodes = 512", "n_nodes = 256")
        + f"\n[outputs]\ndirectory = {tmp_path/'out'}\nformats = csv\n"
        + "\n[sweep]\naxis = q\nvalues = 1.5, 2.5\n"
    )
    cfg = write_config(tmp_path, text)
    assert main(["sweep", "--config", str(cfg)]) == 2
    rows = {r["value"]: r for r in read_rows(tmp_path / "out" / "sweep.csv")}
    assert rows["1.5"]["status"] == "ok"
    assert rows["2.5"]["status"] == "failed"
    assert rows["2.5"]["error"]
    assert "failed" in capsys.readouterr().err
    man = read_manifest(tmp_path / "out")
    assert man["result"]["status"] == "partial"


def test_sweep_without_axis_is_a_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE)
    assert main(["sweep", "--config", str(cfg)]) == 1
    assert "sweep" in capsys.readouterr().err


def test_quadratic_cost_round_trips_through_the_manifest(tmp_path):
    text = BASE.replace(
        "cost = constant\ncost_value = 0.0",
        "cost = quadratic\ncost_weight = 0.3\ncost_center = 0.4",
    )
    cfg = write_config(tmp_path, text + f"\n[outputs]\ndirectory = {tmp_path/'one'}\nformats = csv\n")
    assert main(["solve", "--config", str(cfg)]) == 0
    man = read_manifest(tmp_path / "one")
    assert man["model"]["cost"] == "quadratic"
    assert float(man["model"]["cost_weight"]) == 0.3
    assert main(["solve", "--config", str(tmp_path / "one" / "manifest.ini"), "--out", str(tmp_path / "two")]) == 0
    a = (tmp_path / "one" / "solution.csv").read_bytes()
    assert a == (tmp_path / "two" / "solution.csv").read_bytes()
