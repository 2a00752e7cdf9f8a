"""``blowup-lab ode|simulate|energy-report|sweep --config <file> [--out <dir>]``.

Exit codes: 0 ok, 2 configuration error, 3 no blow-up, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import diagnostics as dg
from .energy import hardy_ratio, identity_residual, sigma0_bound_check, write_reports
from .model import ModelParams, derive_constants
from .ode import NoBlowupError, OdeTrajectory, fit_blowup, integrate_ode
from .pipeline import (FrameError, auto_frame, frame_series, initial_callables,
                       manifold_velocity, reports_from_snapshots, s_grid, sample_on, with_theta)
from .similarity import SimilarityFrame, to_similarity
from .wave import (BlowupSurface, Grid, SolverConfig, build_surface, non_characteristic_check,
                   read_snapshot, run_to_blowup, write_snapshot)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NO_BLOWUP, EXIT_NUMERICAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NoBlowup(RuntimeError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

RUN_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "model"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {
            "type": "object", "required": ["p"],
            "properties": {"p": _num, "a": _num, "M": _num,
                           "N": {"type": "integer", "minimum": 1},
                           "perturbed": {"type": "boolean"}},
            "additionalProperties": False},
        "grid": {
            "type": "object",
            "properties": {"kind": {"enum": ["line", "radial"]}, "x_min": _num, "x_max": _num,
                           "nx": {"type": "integer", "minimum": 16},
                           "boundary": {"enum": ["periodic", "absorbing"]}},
            "additionalProperties": False},
        "init": {
            "type": "object", "required": ["preset"],
            "properties": {"preset": {"enum": ["zero", "bump", "ode_manifold", "file"]},
                           "amplitude": _num, "width": _pos, "center": _num, "v0": _num,
                           "v1": _num, "path": {"type": "string"}},
            "additionalProperties": False},
        "frame": {
            "type": "object",
            "properties": {"x0": _num, "T0": {"oneOf": [_pos, {"const": "auto"}]},
                           "window": _pos},
            "additionalProperties": False},
        "solver": {
            "type": "object",
            "properties": {"dt0": {"oneOf": [_pos, {"type": "null"}]}, "cfl": _pos,
                           "U_max": _pos, "snapshot_growth": {"type": "number", "exclusiveMinimum": 1},
                           "max_steps": {"type": "integer", "minimum": 1},
                           "n_per_radius": {"type": "integer", "minimum": 8},
                           "threshold": _pos},
            "additionalProperties": False},
        "energy": {
            "type": "object",
            "properties": {"s_min": _num, "s_max": _num, "ds": _pos,
                           "n_quad": {"type": "integer", "minimum": 2}},
            "additionalProperties": False},
        "diag": {
            "type": "object",
            "properties": {"S1": {"type": "number", "minimum": 1},
                           "theta": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "auto"}]},
                           "tolerance": {"oneOf": [{"type": "number", "minimum": 0},
                                                   {"type": "null"}]}},
            "additionalProperties": False},
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"},
                           "formats": {"type": "array", "items": {"enum": ["csv", "npz"]}}},
            "additionalProperties": False},
    },
    "additionalProperties": False,
}

SWEEP_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "base"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "base": {"type": "object"},
        "axes": {"type": "object",
                 "properties": {k: {"type": "array", "items": _num}
                                for k in ("p", "a", "amplitude")},
                 "additionalProperties": False},
        "parallelism": {"type": "integer", "minimum": 1},
        "cap": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}


def load_config(path, schema=RUN_SCHEMA) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate(cfg, schema)
    return cfg


def validate(cfg, schema=RUN_SCHEMA):
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    if schema is RUN_SCHEMA:
        params_of(cfg)
        e = cfg.get("energy", {})
        if e.get("s_min", 2.0) >= e.get("s_max", 8.0):
            raise ConfigError("energy.s_min must be below energy.s_max")


def params_of(cfg) -> ModelParams:
    try:
        return ModelParams(**cfg["model"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def grid_of(cfg, params) -> Grid:
    g = {"kind": "line", "x_min": -4.0, "x_max": 4.0, "nx": 2000, "boundary": "periodic"}
    g.update(cfg.get("grid", {}))
    if g["kind"] == "radial":
        if params.N < 2:
            raise ConfigError("radial grids need N >= 2")
        boundary = g["boundary"] if "boundary" in cfg.get("grid", {}) else "absorbing"
        return Grid.radial(g["x_max"], g["nx"], params.N, boundary)
    if params.N != 1:
        raise ConfigError("line grids need N = 1")
    if not g["x_max"] > g["x_min"]:
        raise ConfigError("grid.x_max must exceed grid.x_min")
    return Grid.line(g["x_min"], g["x_max"], g["nx"], g["boundary"])


def _init(cfg, params):
    try:
        return initial_callables(cfg.get("init", {"preset": "bump"}), params)
    except (KeyError, ValueError, OSError) as exc:
        raise ConfigError(f"bad init block: {exc}") from exc


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for r in rows:
            out.writerow([repr(float(v)) for v in r])


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def _write_two_column(path, x, y):
    with open(path, "w") as fh:
        for a, b in zip(x, y):
            fh.write(f"{a!r} {b!r}\n")


# -- ode --------------------------------------------------------------------------

def cmd_ode(cfg, out: Path) -> dict:
    params = params_of(cfg)
    init = cfg.get("init", {"preset": "bump"})
    preset = init.get("preset", "bump")
    if preset == "zero":
        v0, v1 = 0.0, 0.0
    elif preset == "ode_manifold":
        v0 = float(init["v0"])
        v1 = float(init.get("v1", manifold_velocity(params, v0)))
    elif preset == "bump":
        v0 = float(init.get("amplitude", 5 * derive_constants(params).kappa))
        v1 = float(init.get("v1", 0.0))
    else:
        raise ConfigError("the ode command needs a zero, bump or ode_manifold preset")
    sol = cfg.get("solver", {})
    threshold = sol.get("threshold", 1e8)
    if not threshold > max(1.0, v0):
        raise ConfigError("solver.threshold must exceed max(1, v0)")
    traj = integrate_ode(params, v0, v1, threshold=threshold, dt0=sol.get("dt0") or 1e-2,
                         cfl=sol.get("cfl", 0.1), max_steps=sol.get("max_steps", 200_000))
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "trajectory.csv", ["t", "v", "vdot"], zip(traj.t, traj.v, traj.vdot))
    if not traj.blew_up:
        raise NoBlowup("trajectory stayed below the threshold")
    try:
        fit = fit_blowup(traj, params)
    except NoBlowupError as exc:
        raise NoBlowup(str(exc)) from exc
    summary = {"T_est": fit.T_est, "exponent_est": fit.exponent_est,
               "kappa_est": fit.kappa_est, "residual": fit.residual,
               "kappa": derive_constants(params).kappa, "steps": int(len(traj.t) - 1)}
    dg.write_json(summary, out / "fit.json")
    return summary


# -- simulate -------------------------------------------------------------------

def _solver_config(cfg):
    sol = cfg.get("solver", {})
    return SolverConfig(dt0=sol.get("dt0"), cfl=sol.get("cfl", 0.1), U_max=sol.get("U_max", 1e7),
                        snapshot_growth=sol.get("snapshot_growth", 2 ** 0.25),
                        max_steps=sol.get("max_steps", 200_000))


def write_surface(surface: BlowupSurface, path):
    T = surface.T_of_x
    slope = np.full_like(T, math.nan)
    ok = np.isfinite(T)
    with np.errstate(invalid="ignore"):
        d = np.abs(np.diff(T) / np.diff(surface.x))
    both = ok[1:] & ok[:-1]
    left = np.where(both, d, math.nan)
    slope[1:] = np.fmax(slope[1:], left)
    slope[:-1] = np.fmax(slope[:-1], left)
    _write_rows(path, ["x", "T", "slope"], zip(surface.x, T, slope))


def read_surface(path) -> BlowupSurface:
    _hdr, data = _read_rows(path)
    return build_surface(data[:, 0], data[:, 1])


def cmd_simulate(cfg, out: Path) -> dict:
    params = params_of(cfg)
    grid = grid_of(cfg, params)
    init = _init(cfg, params)
    try:
        state = sample_on(init, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = run_to_blowup(state, params, grid, _solver_config(cfg))
    out.mkdir(parents=True, exist_ok=True)
    if res.status != "saturated":
        dg.write_json({"status": res.status, "t_end": res.final.t,
                       "max_amplitude": float(res.max_amp[-1])}, out / "verdict.json")
        raise NoBlowup("globally bounded on the computed horizon")
    fmt = cfg.get("output", {}).get("formats", ["csv"])[0]
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for old in snap_dir.glob("snap_*"):
        old.unlink()
    for k, sn in enumerate(res.snapshots):
        write_snapshot(sn, snap_dir / f"snap_{k:04d}.{fmt}", fmt)
    write_surface(res.surface, out / "surface.csv")
    surf = res.surface
    fr = cfg.get("frame", {})
    x0 = fr.get("x0", surf.x_star)
    window = fr.get("window", 0.05)
    verdict_nc, slope = non_characteristic_check(surf, x0, window)
    summary = {"status": res.status, "T_min": surf.T_min, "x_star": surf.x_star,
               "slope_max": surf.slope_max, "x0": x0, "T_x0": surf.T_at(x0),
               "window": window, "non_characteristic": verdict_nc, "window_slope": slope,
               "snapshots": len(res.snapshots)}
    dg.write_json(_jsonable(summary), out / "verdict.json")
    return summary


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not math.isfinite(v):
            v = None
        out[k] = v
    return out


# -- energy report ------------------------------------------------------------

def _frame_meta(x0, T0, svals, n_per_radius):
    return {"x0": x0, "T0": T0, "s": svals, "n_per_radius": n_per_radius}


def _load_frame_snapshots(fdir: Path, meta):
    mfile = fdir / "frame.json"
    if not mfile.exists():
        return None
    old = json.loads(mfile.read_text())
    if old.get("meta") != meta:
        return None
    files = sorted(fdir.glob("snap_*"))
    if len(files) != len(meta["s"]):
        return None
    return [read_snapshot(f) for f in files]


def cmd_energy_report(cfg, out: Path) -> dict:
    params = params_of(cfg)
    if not (out / "surface.csv").exists():
        cmd_simulate(cfg, out)
    surf = read_surface(out / "surface.csv")
    init = _init(cfg, params)
    kind = cfg.get("grid", {}).get("kind", "line")
    fr = cfg.get("frame", {})
    x0 = float(fr.get("x0", surf.x_star))
    if kind == "radial" and x0 != 0.0:
        raise ConfigError("radial frames must use x0 = 0")
    sol = cfg.get("solver", {})
    n_per_radius = sol.get("n_per_radius", 64)
    en = cfg.get("energy", {})
    s_lo, s_hi, ds = en.get("s_min", 2.0), en.get("s_max", 8.0), en.get("ds", 0.1)
    n_quad = en.get("n_quad", 48)
    t_start = getattr(init, "t", 0.0)
    T_surface = surf.T_at(x0)
    T0 = fr.get("T0", "auto")
    if T0 == "auto":
        if not math.isfinite(T_surface):
            raise ConfigError(f"no finite blow-up time at x0={x0}")
        try:
            T0, _run = auto_frame(init, params, x0, T_surface, n_per_radius, kind,
                                  t_start=t_start)
        except FrameError as exc:
            raise RuntimeError(str(exc)) from exc
    T0 = float(T0)
    if not T0 > t_start:
        raise ConfigError(f"frame T0={T0} does not exceed the snapshot time {t_start}")
    if -math.log(T0 - t_start) > s_lo:
        raise ConfigError(f"s_min={s_lo} precedes the first available s={-math.log(T0 - t_start)}")
    svals = s_grid(s_lo, s_hi, ds)
    frame = SimilarityFrame(x0, T0)
    meta = _frame_meta(x0, T0, svals, n_per_radius)
    fdir = out / "frame"
    snaps = _load_frame_snapshots(fdir, meta)
    if snaps is None:
        series = frame_series(init, params, frame, svals, n_per_radius, n_quad, kind,
                              t_start=t_start)
        snaps = series.cone.snapshots
        fdir.mkdir(parents=True, exist_ok=True)
        for old in fdir.glob("snap_*"):
            old.unlink()
        for k, sn in enumerate(snaps):
            write_snapshot(sn, fdir / f"snap_{k:04d}.csv")
        dg.write_json({"meta": meta}, fdir / "frame.json")
        reports = series.reports
    else:
        reports = reports_from_snapshots(snaps, frame, params, n_quad)

    dcfg = dg.DiagnosticsConfig(**cfg.get("diag", {}))
    if dcfg.theta == "auto":
        theta = dg.choose_theta(reports, params, dcfg)
    else:
        theta = float(dcfg.theta)
    reports = with_theta(reports, params, theta)
    write_reports(reports, out / "energy_reports.csv")
    mono = dg.theorem1_monotonicity(reports, params, dcfg)
    nc_verdict, nc_slope = non_characteristic_check(surf, x0, fr.get("window", 0.05))
    if nc_verdict is False:
        print(f"warning: x0={x0} is not non-characteristic (slope {nc_slope:.3f})",
              file=sys.stderr)
    t1 = dg.verdict("theorem1_monotonicity", (s_lo, s_hi), mono.passed, mono.worst_excess,
                    theta=theta, tolerance=mono.tolerance, violations=len(mono.violations))
    t1["non_characteristic"] = nc_verdict
    dg.write_json(t1, out / "theorem1.json")

    # identity residuals over consecutive triples (midpoint in the middle)
    alpha = derive_constants(params).alpha
    ident = [identity_residual(reports[i], reports[i + 2], reports[i + 1].D,
                               reports[i + 1].sigma0, params)
             for i in range(0, len(reports) - 2, 2)]
    scale = max(1.0, max(abs(r.E0 + r.I) for r in reports))
    sigma_C = [sigma0_bound_check(r, params) for r in reports]
    hardy = [hardy_ratio(lambda y, sn=sn: to_similarity(sn, frame, params, y), params, n_quad)
             for sn in snaps[:: max(1, len(snaps) // 10)]]
    bounds = dg.corollary_bounds(reports)
    win = dg.lp1_windows(reports, s_lo, s_hi)
    q = dg.theorem2_physical(snaps, T0, x0, params, S1=dcfg.S1)
    diag = {
        "alpha": alpha,
        "identity": dg.verdict("energy_identity", (s_lo, s_hi),
                               max(map(abs, ident), default=0.0) < 1e-2 * scale,
                               max(map(abs, ident), default=0.0) / scale, scale=scale),
        "sigma0_bound": dg.verdict("sigma0_bound", (s_lo, s_hi),
                                   all(math.isfinite(c) for c in sigma_C), max(sigma_C),
                                   C_max=max(sigma_C), C_last=sigma_C[-1]),
        "hardy": dg.verdict("hardy", (s_lo, s_hi), all(math.isfinite(h) for h in hardy),
                            max(hardy), C_emp=max(hardy)),
        "bounds": dg.verdict("corollary_bounds", bounds.window, bounds.eps0_emp > 0,
                             bounds.band_ratio, eps0_emp=bounds.eps0_emp, K_emp=bounds.K_emp,
                             E_min=bounds.E_min, E_max=bounds.E_max,
                             cumulative_dissipation=bounds.cumulative_dissipation),
        "lp1_windows": dg.verdict("lp1_time_average", (s_lo, s_hi),
                                  all(b < 2 * a for a, b in zip(win, win[1:])),
                                  max((b / a for a, b in zip(win, win[1:]) if a > 0), default=0.0),
                                  averages=json.dumps(win)),
        "theorem2": dg.verdict("theorem2_Q", (float(q.t[0]) if q.t.size else T0, T0),
                               q.envelope_ratio < 10, q.envelope_ratio,
                               Q_min=float(q.Q.min()) if q.Q.size else None,
                               Q_max=float(q.Q.max()) if q.Q.size else None),
        "non_characteristic": nc_verdict,
    }
    dg.write_json(diag, out / "diagnostics.json")
    s = [r.s for r in reports]
    _write_two_column(out / "H.dat", s, [r.H for r in reports])
    _write_two_column(out / "D.dat", s, [r.D for r in reports])
    _write_two_column(out / "lp1.dat", s, [r.lp1 for r in reports])
    (out / "plot_energy.py").write_text(PLOT_STUB)
    return {"theta": theta, "theorem1_pass": mono.passed, "T0": T0, "Q_ratio": q.envelope_ratio,
            "reports": len(reports)}


PLOT_STUB = '''"""Plot the two-column files written next to this script (needs matplotlib)."""
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

here = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
for ax, name in zip(axes, ["H", "D", "lp1"]):
    s, v = np.loadtxt(here / f"{name}.dat", unpack=True)
    ax.plot(s, v)
    ax.set_xlabel("s")
    ax.set_title(name)
fig.tight_layout()
fig.savefig(here / "energy.png", dpi=120)
'''


# -- sweep ----------------------------------------------------------------------

def _sweep_one(args):
    idx, cfg, out = args
    out = Path(out)
    row = {"run": idx, "p": cfg["model"]["p"], "a": cfg["model"].get("a", 2.0),
           "amplitude": math.nan}
    try:
        validate(cfg)
        init_spec = cfg.get("init", {"preset": "bump"})
        if init_spec.get("preset") == "bump":
            row["amplitude"] = float(init_spec.get(
                "amplitude", 5 * derive_constants(params_of(cfg)).kappa))
        out.mkdir(parents=True, exist_ok=True)
        dg.write_json(cfg, out / "config.json")
        params = params_of(cfg)
        rep = cmd_energy_report(cfg, out)
        # growth exponent from the centre history of a saturating cone run
        init = _init(cfg, params)
        _T, run = auto_frame(init, params, cfg.get("frame", {}).get("x0", 0.0), rep["T0"],
                             cfg.get("solver", {}).get("n_per_radius", 64),
                             cfg.get("grid", {}).get("kind", "line"), U_max=1e8)
        tr = OdeTrajectory(run.center_t, run.center_amp, np.gradient(run.center_amp, run.center_t),
                           "threshold", params)
        fit = fit_blowup(tr)
        row.update(exponent_est=fit.exponent_est, theta_used=rep["theta"],
                   theorem1_pass=rep["theorem1_pass"], Q_ratio=rep["Q_ratio"], error="")
    except Exception as exc:  # recorded per run, the sweep continues
        row.update(exponent_est=math.nan, theta_used=math.nan, theorem1_pass=False,
                   Q_ratio=math.nan, error=f"{type(exc).__name__}: {exc}")
    return row


def sweep_configs(sweep: dict):
    base = sweep["base"]
    axes = sweep.get("axes", {})
    names = [k for k in ("p", "a", "amplitude") if axes.get(k)]
    combos = list(itertools.product(*(axes[k] for k in names))) if names else [()]
    out = []
    for combo in combos:
        cfg = copy.deepcopy(base)
        for k, v in zip(names, combo):
            if k == "amplitude":
                cfg.setdefault("init", {"preset": "bump"})["amplitude"] = v
            else:
                cfg["model"][k] = v
        out.append(cfg)
    return out


def cmd_sweep(sweep: dict, out: Path) -> list:
    cfgs = sweep_configs(sweep)
    cap = sweep.get("cap", 64)
    if len(cfgs) > cap:
        raise ConfigError(f"sweep has {len(cfgs)} runs, above the cap of {cap}")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, c, str(out / f"run_{i:03d}")) for i, c in enumerate(cfgs)]
    workers = sweep.get("parallelism", 1)
    env_cap = os.environ.get("BLOWUP_LAB_THREADS")
    if env_cap:
        workers = min(workers, max(1, int(env_cap)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    cols = ["run", "p", "a", "amplitude", "exponent_est", "theta_used", "theorem1_pass",
            "Q_ratio", "error"]
    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return rows


# -- entry point ----------------------------------------------------------------

def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="blowup-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["ode", "simulate", "energy-report", "sweep"])
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    args = ap.parse_args(argv)
    try:
        if args.command == "sweep":
            cfg = load_config(args.config, SWEEP_SCHEMA)
            out = Path(args.out or "sweep_out")
            rows = cmd_sweep(cfg, out)
            bad = [r for r in rows if r["error"]]
            for r in bad:
                print(f"run {r['run']} failed: {r['error']}", file=sys.stderr)
            return EXIT_NUMERICAL if bad else EXIT_OK
        cfg = load_config(args.config)
        out = Path(args.out or cfg.get("output", {}).get("dir", "out"))
        fn = {"ode": cmd_ode, "simulate": cmd_simulate, "energy-report": cmd_energy_report}
        fn[args.command](cfg, out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoBlowup as exc:
        print(f"no blow-up: {exc}", file=sys.stderr)
        return EXIT_NO_BLOWUP
    except (RuntimeError, FloatingPointError, ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
