import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ionquench import cli

BASE = """\
[scenario]
name = {name}
[trap]
g = {g}
delta = {delta}
[thermal]
temperature_uk = {temps}
[time]
t_max_us = {t_max}
"""


def write_cfg(tmp_path, name="demo", g=0.02, delta=0.025, temps="0, 50", t_max=5, extra=""):
    path = tmp_path / f"{name}.ini"
    path.write_text(BASE.format(name=name, g=g, delta=delta, temps=temps, t_max=t_max) + extra)
    return path


def run(*args):
    return cli.main([str(a) for a in args])


def read_csv(path):
    with open(path) as fh:
        comment = fh.readline()
        rows = list(csv.reader(fh))
    return comment, rows[0], rows[1:]


def test_equilibrium_and_modes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, g=-0.1)
    assert run("equilibrium", "--config", cfg, "--out", tmp_path / "o") == 0
    out = capsys.readouterr().out
    assert "zigzag" in out and "um" in out
    comment, header, rows = read_csv(tmp_path / "o" / "demo__equilibrium.csv")
    assert comment.startswith("# ionquench-csv/1 config_fingerprint=")
    assert header[:3] == ["state", "structure", "ion"] and len(rows) == 6
    assert run("modes", "--config", cfg, "--out", tmp_path / "o") == 0
    _, header, rows = read_csv(tmp_path / "o" / "demo__modes.csv")
    assert header[-2:] == ["nbar_T_uK=0.0", "nbar_T_uK=50.0"] and len(rows) == 12
    record = json.loads((tmp_path / "o" / "modes_record.json").read_text())
    assert "timestamp" not in json.dumps(record)
    assert record["artifacts"]["map"]["cond_u"] >= 1.0


def test_table_check_reports_flagged_cells(tmp_path, capsys):
    assert run("modes", "--check-table2", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert out.count("FLAGGED") == 2
    _, header, rows = read_csv(tmp_path / "scenario__reference_check.csv")
    flagged = [r for r in rows if r[header.index("flagged")] == "True"]
    assert {r[header.index("published")] for r in flagged} == {"0.0193", "0.1593"}


def test_visibility_csv_schema_and_values(tmp_path):
    cfg = write_cfg(tmp_path)
    assert run("visibility", "--config", cfg, "--out", tmp_path / "o") == 0
    for T in ("0.0", "50.0"):
        _, header, rows = read_csv(tmp_path / "o" / f"demo__T_uK={T}.csv")
        assert header == ["t_seconds", "t_dimensionless", "re_overlap", "im_overlap", "visibility",
                          "ramsey_probability"]
        data = np.array(rows, dtype=float)
        assert data[0, 4] == pytest.approx(1.0)
        assert data[-1, 0] == pytest.approx(5e-6)
        np.testing.assert_allclose(data[:, 4], np.hypot(data[:, 2], data[:, 3]), rtol=1e-12)
    record = json.loads((tmp_path / "o" / "visibility_record.json").read_text())
    assert set(record["outputs"]) == {"demo__T_uK=0.0.csv", "demo__T_uK=50.0.csv"}
    assert all("branch_max_step" in v for v in record["artifacts"]["traces"].values())


def test_outputs_independent_of_threads_and_reruns(tmp_path):
    cfg = write_cfg(tmp_path)
    run("visibility", "--config", cfg, "--out", tmp_path / "a", "--threads", "1")
    run("visibility", "--config", cfg, "--out", tmp_path / "b", "--threads", "4")
    for name in ("demo__T_uK=0.0.csv", "demo__T_uK=50.0.csv", "visibility_record.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_verify_and_tampering(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    assert run("visibility", "--config", cfg, "--out", out) == 0
    assert run("visibility", "--config", cfg, "--out", out, "--verify") == 0
    with open(out / "demo__T_uK=50.0.csv", "a") as fh:
        fh.write("\n")
    capsys.readouterr()
    assert run("visibility", "--config", cfg, "--out", out, "--verify") == 4
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ChecksumMismatchError" and err["exit_code"] == 4
    assert run("spectrum", "--config", cfg, "--out", tmp_path / "none", "--verify") == 2


def test_spectrum_outputs(tmp_path):
    cfg = write_cfg(tmp_path, temps="100", t_max=60)
    assert run("spectrum", "--config", cfg, "--out", tmp_path) == 0
    _, header, rows = read_csv(tmp_path / "demo__T_uK=100.0__spectrum.csv")
    assert header == ["omega_rad_per_s", "re_S", "im_S", "abs_S"]
    _, header, peaks = read_csv(tmp_path / "demo__T_uK=100.0__peaks.csv")
    assert header == ["omega_rad_per_s", "height", "nearest_label", "nearest_omega_rad_per_s", "offset_bins"]
    assert peaks[0][2] == "1*omega_beat"


def test_single_point_sweep_equals_visibility(tmp_path):
    cfg = write_cfg(tmp_path, temps="10", extra="[sweep]\ndelta = 0.025\n")
    assert run("sweep", "--config", cfg, "--out", tmp_path / "s") == 0
    assert run("visibility", "--config", cfg, "--out", tmp_path / "v") == 0
    swept = read_csv(tmp_path / "s" / "demo__delta=0.025__T_uK=10.0.csv")[2]
    single = read_csv(tmp_path / "v" / "demo__T_uK=10.0.csv")[2]
    assert swept == single
    manifest = json.loads((tmp_path / "s" / "sweep_manifest.json").read_text())
    assert manifest[0]["status"] == "ok"


def test_sweep_partial_failure_writes_manifest(tmp_path):
    cfg = write_cfg(tmp_path, temps="0", t_max=2, extra="[sweep]\ng = 0.02, 0.0001\n")
    assert run("sweep", "--config", cfg, "--out", tmp_path, "--threads", "2") == 3
    manifest = json.loads((tmp_path / "sweep_manifest.json").read_text())
    assert [m["status"] for m in manifest] == ["ok", "failed"]
    assert manifest[1]["error"] == "NearCriticalError"
    assert (tmp_path / "demo__g=0.02__T_uK=0.0.csv").exists()


def test_recoil_geometry_sweep(tmp_path):
    extra = "[sweep]\nrecoil_geometry = copropagating, orthogonal, counterpropagating\n"
    cfg = write_cfg(tmp_path, temps="0", t_max=3, extra=extra)
    assert run("sweep", "--config", cfg, "--out", tmp_path) == 0
    vis = {}
    for geom in ("copropagating", "orthogonal", "counterpropagating"):
        data = np.array(read_csv(tmp_path / f"demo__recoil_geometry={geom}__T_uK=0.0.csv")[2], dtype=float)
        vis[geom] = data[:, 4]
    # no net recoil reproduces the bare trace; a transverse kick changes it
    assert not np.allclose(vis["copropagating"], vis["counterpropagating"])


def test_near_critical_exit_code_and_override(tmp_path, capsys):
    cfg = write_cfg(tmp_path, g=0.0001, temps="0", t_max=1)
    assert run("visibility", "--config", cfg, "--out", tmp_path) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "NearCriticalError"
    with pytest.warns(RuntimeWarning):
        assert run("visibility", "--config", cfg, "--out", tmp_path, "--allow-near-critical") == 0


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[trap]\ng = 0.02\n")
    assert run("visibility", "--config", bad) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and err["exit_code"] == 2
    cfg = write_cfg(tmp_path, extra="n_samples = 10\n")  # appended to the [time] section
    assert run("visibility", "--config", cfg, "--out", tmp_path) == 2  # grid below the density bound


def test_oracle_check_exit_codes(tmp_path, monkeypatch):
    import ionquench.equivalence as eq

    cases = eq.synthetic_cases()[:2]
    monkeypatch.setattr(eq, "run_suite", lambda: [eq.run_case(c) for c in cases])
    assert run("oracle-check", "--out", tmp_path) == 0
    assert (tmp_path / "oracle_check.csv").exists()
    bad = dict(eq.run_case(cases[0]), passed=False, max_deviation=1.0)
    monkeypatch.setattr(eq, "run_suite", lambda: [bad])
    assert run("oracle-check", "--out", tmp_path) == 4


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ionquench", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "ionquench" in out.stdout
