import csv
import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from blowup_lab.cli import main, read_surface, write_surface
from blowup_lab.energy import read_reports
from blowup_lab.wave import build_surface

BUMP = {"schema_version": 1, "model": {"p": 3.0, "a": 2.0}, "grid": {"nx": 1000},
        "init": {"preset": "bump"}}
MANIFOLD = {"schema_version": 1, "model": {"p": 3.0, "perturbed": False},
            "grid": {"nx": 64, "x_min": -1, "x_max": 1},
            "init": {"preset": "ode_manifold", "v0": math.sqrt(2)}}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, command, cfg, out="out", name="cfg.json"):
    code = main([command, "--config", write_cfg(tmp_path, cfg, name), "--out",
                 str(tmp_path / out)])
    return code, tmp_path / out


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def bump_report(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bump")
    code, out = run(tmp, "energy-report", BUMP)
    assert code == 0
    return tmp, out


# -- ode ----------------------------------------------------------------------------

def test_ode_exact_manifold(tmp_path):
    code, out = run(tmp_path, "ode", MANIFOLD)
    assert code == 0
    fit = load(out / "fit.json")
    assert fit["exponent_est"] == pytest.approx(1.0, rel=0.01)
    assert fit["kappa_est"] == pytest.approx(math.sqrt(2), rel=0.01)
    assert fit["T_est"] == pytest.approx(1.0, rel=2e-4)
    with open(out / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "v", "vdot"] and len(rows) == fit["steps"] + 2


def test_ode_perturbed_kappa(tmp_path):
    cfg = {"schema_version": 1, "model": {"p": 3.0, "a": 2.0},
           "init": {"preset": "bump", "amplitude": 10.0}, "solver": {"dt0": 0.005, "cfl": 0.05}}
    code, out = run(tmp_path, "ode", cfg)
    assert code == 0
    fit = load(out / "fit.json")
    assert fit["kappa_est"] == pytest.approx(math.sqrt(2), rel=0.05)
    assert fit["exponent_est"] == pytest.approx(1.0, rel=0.05)


def test_zero_data_exit_3(tmp_path):
    cfg = {"schema_version": 1, "model": {"p": 3.0}, "grid": {"nx": 64},
           "init": {"preset": "zero"}, "solver": {"max_steps": 2000}}
    assert run(tmp_path, "ode", cfg)[0] == 3
    code, out = run(tmp_path, "simulate", cfg, out="sim")
    assert code == 3 and load(out / "verdict.json")["status"] == "bounded"


@pytest.mark.parametrize("cfg", [
    {"schema_version": 2, "model": {"p": 3.0}},
    {"schema_version": 1, "model": {"p": 3.0}, "extra": 1},
    {"schema_version": 1, "model": {"p": 1.0}},
    {"schema_version": 1, "model": {"p": 3.0, "a": 0.5}},
    {"schema_version": 1, "model": {"p": 3.0}, "grid": {"nx": 8}},
    {"schema_version": 1, "model": {"p": 3.0}, "grid": {"kind": "radial"}},
    {"schema_version": 1, "model": {"p": 3.0}, "energy": {"s_min": 5, "s_max": 3}},
    {"schema_version": 1, "model": {"p": 3.0}, "init": {"preset": "file"}},
    {"schema_version": 1, "model": {"p": 3.0}, "init": {"preset": "file", "path": "/nope.csv"}},
])
def test_config_errors_exit_2(tmp_path, cfg):
    assert run(tmp_path, "simulate", cfg)[0] == 2


def test_unreadable_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["ode", "--config", str(bad)]) == 2
    assert main(["ode", "--config", str(tmp_path / "missing.json")]) == 2
    assert "config error" in capsys.readouterr().err


# -- simulate -------------------------------------------------------------------------

def test_simulate_bump(bump_report):
    _tmp, out = bump_report
    v = load(out / "verdict.json")
    assert v["status"] == "saturated" and v["non_characteristic"] is True
    surf = read_surface(out / "surface.csv")
    assert math.isfinite(surf.T_at(0.0)) and abs(surf.x_star) < 0.02
    assert len(list((out / "snapshots").glob("snap_*.csv"))) == v["snapshots"]


def test_simulate_space_independent_flat(tmp_path):
    code, out = run(tmp_path, "simulate", MANIFOLD)
    assert code == 0
    with open(out / "surface.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    T = np.array([float(r[1]) for r in rows])
    slope = np.array([float(r[2]) for r in rows])
    assert np.ptp(T) == 0.0 and np.all(slope == 0.0)
    assert T[0] == pytest.approx(1.0, rel=1e-3)


def test_surface_file_round_trip(tmp_path):
    x = np.linspace(-1, 1, 21)
    surf = build_surface(x, np.where(np.abs(x) < 0.5, 0.3 + 0.1 * x ** 2, np.inf))
    write_surface(surf, tmp_path / "s.csv")
    back = read_surface(tmp_path / "s.csv")
    assert np.array_equal(back.T_of_x, surf.T_of_x) and back.x_star == surf.x_star


def test_file_preset_reproduces_run(tmp_path, bump_report):
    _tmp, out = bump_report
    cfg = dict(BUMP, init={"preset": "file", "path": str(out / "snapshots" / "snap_0000.csv")})
    code, out2 = run(tmp_path, "simulate", cfg)
    assert code == 0
    assert (out2 / "surface.csv").read_bytes() == (out / "surface.csv").read_bytes()


# -- energy report ------------------------------------------------------------------

def test_energy_report_bump(bump_report):
    _tmp, out = bump_report
    t1 = load(out / "theorem1.json")
    assert t1["pass"] is True and t1["non_characteristic"] is True
    assert set(t1) == {"check", "window", "pass", "worst_excess", "empirical_constants",
                       "non_characteristic"}
    diag = load(out / "diagnostics.json")
    assert diag["identity"]["pass"] and diag["theorem2"]["pass"] and diag["lp1_windows"]["pass"]
    assert diag["hardy"]["empirical_constants"]["C_emp"] < 1
    reps = read_reports(out / "energy_reports.csv")
    assert len(reps) == 61 and reps[0].s == pytest.approx(2.0) and reps[-1].s == pytest.approx(8.0)
    for name, col in (("H.dat", "H"), ("D.dat", "D"), ("lp1.dat", "lp1")):
        data = np.loadtxt(out / name)
        assert data.shape == (61, 2)
        assert np.array_equal(data[:, 1], [getattr(r, col) for r in reps])
    assert "matplotlib" in (out / "plot_energy.py").read_text()


def test_energy_report_reingests_bit_exactly(bump_report):
    tmp, out = bump_report
    first = (out / "energy_reports.csv").read_bytes()
    frame_files = sorted((out / "frame").glob("snap_*"))
    stamps = [f.stat().st_mtime_ns for f in frame_files]
    assert main(["energy-report", "--config", str(tmp / "cfg.json"), "--out", str(out)]) == 0
    assert [f.stat().st_mtime_ns for f in frame_files] == stamps  # snapshots reused
    assert (out / "energy_reports.csv").read_bytes() == first


def test_energy_report_deterministic(tmp_path, bump_report):
    _tmp, out = bump_report
    code, out2 = run(tmp_path, "energy-report", BUMP)
    assert code == 0
    for name in ("energy_reports.csv", "surface.csv", "H.dat", "diagnostics.json"):
        assert (out2 / name).read_bytes() == (out / name).read_bytes()


def test_energy_report_kappa_stationary(tmp_path):
    code, out = run(tmp_path, "energy-report", MANIFOLD)
    assert code == 0
    H = np.loadtxt(out / "H.dat")[:, 1]
    D = np.loadtxt(out / "D.dat")[:, 1]
    assert np.all(np.diff(H) < 0) and np.max(D) < 1e-5
    assert load(out / "theorem1.json")["empirical_constants"]["theta"] == 0.0


def test_characteristic_frame_warns(tmp_path, bump_report, capsys):
    _tmp, ref = bump_report
    T_c = read_surface(ref / "surface.csv").T_at(0.0)
    out = tmp_path / "out"
    out.mkdir()
    x = np.linspace(-1, 1, 801)
    write_surface(build_surface(x, T_c + np.abs(x)), out / "surface.csv")
    cfg = dict(BUMP, frame={"x0": 0.0, "window": 0.1})
    code, _ = run(tmp_path, "energy-report", cfg)
    assert code == 0
    assert "not non-characteristic" in capsys.readouterr().err
    assert load(out / "theorem1.json")["non_characteristic"] is False
    assert load(out / "diagnostics.json")["non_characteristic"] is False


def test_invalid_frame_exit_2(tmp_path, bump_report):
    _tmp, ref = bump_report
    out = tmp_path / "out"
    out.mkdir()
    shutil.copy(ref / "surface.csv", out / "surface.csv")
    cfg = dict(BUMP, frame={"x0": 0.0, "T0": 1e-3})  # s_min = 2 precedes -log(T0)
    assert run(tmp_path, "energy-report", cfg)[0] == 2


# -- sweep ----------------------------------------------------------------------------

def sweep_cfg(**kw):
    return dict({"schema_version": 1, "base": BUMP}, **kw)


def read_summary(out):
    with open(out / "sweep_summary.csv") as fh:
        return list(csv.DictReader(fh))


def test_sweep_cap_exceeded(tmp_path):
    cfg = sweep_cfg(axes={"p": [2.0, 3.0], "a": [1.5, 2.0]}, cap=3)
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 2 and not out.exists()


def test_sweep_empty_axes_equals_base_run(tmp_path, bump_report):
    _tmp, ref = bump_report
    code, out = run(tmp_path, "sweep", sweep_cfg())
    assert code == 0
    rows = read_summary(out)
    assert len(rows) == 1 and rows[0]["error"] == "" and rows[0]["theorem1_pass"] == "True"
    assert float(rows[0]["amplitude"]) == pytest.approx(5 * math.sqrt(2))
    assert ((out / "run_000" / "energy_reports.csv").read_bytes()
            == (ref / "energy_reports.csv").read_bytes())


def test_sweep_failure_recorded(tmp_path, capsys):
    code, out = run(tmp_path, "sweep", sweep_cfg(axes={"a": [0.5]}))
    assert code == 4
    rows = read_summary(out)
    assert rows[0]["error"].startswith("ConfigError") and rows[0]["theorem1_pass"] == "False"
    assert "run 0 failed" in capsys.readouterr().err


def test_sweep_two_by_two(tmp_path, monkeypatch):
    monkeypatch.setenv("BLOWUP_LAB_THREADS", "2")
    cfg = sweep_cfg(axes={"p": [2.0, 3.0], "a": [1.5, 2.0]}, parallelism=4)
    code, out = run(tmp_path, "sweep", cfg)
    assert code == 0
    rows = read_summary(out)
    assert [(float(r["p"]), float(r["a"])) for r in rows] == [(2, 1.5), (2, 2), (3, 1.5), (3, 2)]
    for r in rows:
        assert r["theorem1_pass"] == "True" and r["error"] == ""
        assert float(r["exponent_est"]) == pytest.approx(2 / (float(r["p"]) - 1), rel=0.05)
        assert float(r["Q_ratio"]) < 10


def test_console_script(tmp_path):
    exe = shutil.which("blowup-lab")
    cmd = [exe] if exe else [sys.executable, "-m", "blowup_lab.cli"]
    res = subprocess.run(cmd + ["ode", "--config", write_cfg(tmp_path, MANIFOLD), "--out",
                                str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0 and (tmp_path / "o" / "fit.json").exists()
