"""Run orchestration: initial data presets, frame selection and report series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import EnergyReport, compute_H, retheta
from .model import ModelParams, derive_constants
from .wave import ConeRun, FieldState, Grid, estimate_T, read_snapshot, run_in_cone
from .similarity import SimilarityFrame, to_similarity


# -- initial data -------------------------------------------------------------

def bump(amplitude: float, width: float = 1.0, center: float = 0.0):
    """Gaussian displacement at rest: (u0, u1) callables."""
    return (lambda x: amplitude * np.exp(-((np.asarray(x) - center) / width) ** 2),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)))


def manifold_velocity(params: ModelParams, v0: float) -> float:
    """v1 with zero pure-power energy, so (v0, v1) lies on κ (T - t)^{-2/(p-1)}."""
    p = params.p
    return math.sqrt(2 * abs(v0) ** (p + 1) / (p + 1))


def constant(v0: float, v1: float):
    return (lambda x: np.full(np.shape(x), float(v0)),
            lambda x: np.full(np.shape(x), float(v1)))


def initial_callables(spec: dict, params: ModelParams):
    """Build (u0, u1) from an init block: zero, bump, ode_manifold or file."""
    kind = spec.get("preset", "bump")
    if kind == "zero":
        return constant(0.0, 0.0)
    if kind == "bump":
        return bump(spec.get("amplitude", 5 * derive_constants(params).kappa),
                    spec.get("width", 1.0), spec.get("center", 0.0))
    if kind == "ode_manifold":
        v0 = float(spec["v0"])
        return constant(v0, manifold_velocity(params, v0))
    if kind == "file":
        return read_snapshot(spec["path"])
    raise ValueError(f"unknown initial-data preset {kind!r}")


def sample_on(init, grid: Grid, t: float = 0.0) -> FieldState:
    if isinstance(init, FieldState):
        if len(init.u) != len(grid) or not np.allclose(init.grid.x, grid.x):
            raise ValueError("snapshot file does not match the configured grid")
        return FieldState(init.t, init.u.copy(), init.ut.copy(), grid)
    u0, u1 = init
    return FieldState(t, np.asarray(u0(grid.x), float), np.asarray(u1(grid.x), float), grid)


# -- frames -------------------------------------------------------------------

class FrameError(RuntimeError):
    pass


def auto_frame(init, params: ModelParams, x0: float, T_guess: float, n_per_radius: int = 64,
               kind: str = "line", U_max: float = 1e12, max_passes: int = 8,
               rtol: float = 1e-12, t_start: float = 0.0):
    """Blow-up time at x0 as seen by the cone solver at this resolution.

    Each pass runs the cone-adapted solver towards T0 and re-estimates T(x0)
    from the centre history; the next pass recentres on that estimate.  A
    guess below the true blow-up time is pushed up until the run saturates.
    Returns ``(T0, last_run)``.
    """
    kappa = derive_constants(params).kappa
    T0 = float(T_guess)
    run = None
    for _ in range(max_passes):
        run = run_in_cone(init, params, x0, T0, [60.0], t_start=t_start,
                          n_per_radius=n_per_radius, kind=kind, U_max=U_max)
        if run.status != "saturated":
            T0 = t_start + 1.5 * (T0 - t_start)
            continue
        T, _q = estimate_T(run.center_t, run.center_amp, params, kappa=kappa)
        if not math.isfinite(T[0]):
            raise FrameError("centre history does not support a blow-up fit")
        done = abs(T[0] - T0) <= rtol * T0
        T0 = float(T[0])
        if done:
            break
    if run is None or run.status != "saturated":
        raise FrameError("no saturating run found near the guessed blow-up time")
    return T0, run


@dataclass
class FrameSeries:
    frame: SimilarityFrame
    cone: ConeRun
    reports: list
    theta: float


def s_grid(s_lo: float, s_hi: float, ds: float):
    n = int(round((s_hi - s_lo) / ds))
    return [round(s_lo + k * ds, 12) for k in range(n + 1)]


def reports_from_snapshots(snapshots, frame: SimilarityFrame, params: ModelParams,
                           n_quad: int = 48, theta: float = 0.0):
    """EnergyReport per snapshot, sampling w at the quadrature nodes directly."""
    out = []
    for sn in snapshots:
        src = lambda y, sn=sn: to_similarity(sn, frame, params, y)  # noqa: E731
        out.append(compute_H(src, params, n=n_quad, theta=theta))
    return out


def frame_series(init, params: ModelParams, frame: SimilarityFrame, s_values,
                 n_per_radius: int = 64, n_quad: int = 48, kind: str = "line",
                 U_max: float = 1e12, t_start: float = 0.0) -> FrameSeries:
    s_values = list(s_values)
    if frame.T0 <= t_start or -math.log(frame.T0 - t_start) > s_values[0] + 1e-12:
        raise FrameError("first requested s precedes the start of the run")
    cone = run_in_cone(init, params, frame.x0, frame.T0, s_values, t_start=t_start,
                       n_per_radius=n_per_radius, kind=kind, U_max=U_max)
    if cone.status != "complete":
        raise FrameError(f"cone run {cone.status} before reaching s={s_values[-1]}")
    reps = reports_from_snapshots(cone.snapshots, frame, params, n_quad)
    return FrameSeries(frame, cone, reps, 0.0)


def with_theta(reports, params: ModelParams, theta: float) -> list[EnergyReport]:
    return [retheta(r, params, theta) for r in reports]
