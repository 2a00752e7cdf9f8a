"""Physical-variable solver for u_tt = Δu + |u|^{p-1}u + f(u).

Explicit leapfrog in kick-drift-kick form (second order in t and x) on a
uniform line grid or a radial grid, with dt halving keyed to the local
nonlinear frequency |u|^{(p-1)/2}.  ``run_in_cone`` re-grids inside the
backward light cone of a frame so that the shrinking similarity ball keeps
a fixed number of nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .model import ModelParams, derive_constants, source_term

BOUNDARIES = ("periodic", "absorbing", "open")


@dataclass(frozen=True, eq=False)
class Grid:
    kind: str
    x: np.ndarray
    dx: float
    N: int = 1
    boundary: str = "periodic"

    def __post_init__(self):
        if self.kind not in ("line", "radial"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if self.kind == "radial":
            if self.x[0] != 0.0:
                raise ValueError("radial grids start at r = 0")
            if self.boundary == "periodic":
                raise ValueError("radial grids cannot be periodic")
        elif self.N != 1:
            raise ValueError("line grids are one-dimensional")

    @classmethod
    def line(cls, x_min: float, x_max: float, nx: int, boundary: str = "periodic") -> "Grid":
        if boundary == "periodic":
            dx = (x_max - x_min) / nx
            x = x_min + dx * np.arange(nx)
        else:
            x = np.linspace(x_min, x_max, nx)
            dx = x[1] - x[0]
        return cls("line", x, float(dx), 1, boundary)

    @classmethod
    def radial(cls, r_max: float, nx: int, N: int, boundary: str = "absorbing") -> "Grid":
        x = np.linspace(0.0, r_max, nx)
        return cls("radial", x, float(x[1] - x[0]), int(N), boundary)

    def __len__(self):
        return len(self.x)


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    ut: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.ut = np.asarray(self.ut, dtype=float)
        if self.u.shape != self.grid.x.shape or self.ut.shape != self.grid.x.shape:
            raise ValueError("field arrays must match the grid")


class BlowupSaturation(Exception):
    """Non-finite values appeared; ``state`` is the last finite state."""

    def __init__(self, state: FieldState):
        super().__init__(f"solution saturated after t={state.t:.6g}")
        self.state = state


@dataclass
class BlowupSurface:
    x: np.ndarray
    T_of_x: np.ndarray
    slope_max: float
    x_star: float
    non_characteristic: bool | None
    quality: np.ndarray = field(default=None, repr=False)

    @property
    def T_min(self) -> float:
        finite = np.isfinite(self.T_of_x)
        return float(np.min(self.T_of_x[finite])) if finite.any() else math.inf

    def T_at(self, x0: float) -> float:
        i = int(np.argmin(np.abs(self.x - x0)))
        return float(self.T_of_x[i])


def laplacian(u: np.ndarray, grid: Grid) -> np.ndarray:
    h2 = grid.dx * grid.dx
    if grid.kind == "line" and grid.boundary == "periodic":
        return (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / h2
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h2
    # mirror ghost nodes at the ends; absorbing ends are overwritten in step()
    out[-1] = 2.0 * (u[-2] - u[-1]) / h2
    if grid.kind == "radial":
        r = grid.x
        out[1:-1] += (grid.N - 1) / r[1:-1] * (u[2:] - u[:-2]) / (2.0 * grid.dx)
        out[-1] += 0.0
        out[0] = grid.N * 2.0 * (u[1] - u[0]) / h2
    else:
        out[0] = 2.0 * (u[1] - u[0]) / h2
    return out


def acceleration(u: np.ndarray, params: ModelParams, grid: Grid) -> np.ndarray:
    return laplacian(u, grid) + source_term(u, params)


def _absorb(u_old, u_new, ut_new, dt, grid):
    # first-order outgoing condition u_t = -(u_r + (N-1) u / (2r)) at outer ends
    c = dt / grid.dx
    if grid.kind == "line":
        u_new[0] = u_old[0] + c * (u_old[1] - u_old[0])
        ut_new[0] = (u_new[0] - u_old[0]) / dt
    r = grid.x[-1]
    decay = (grid.N - 1) / (2.0 * r) if grid.kind == "radial" else 0.0
    u_new[-1] = u_old[-1] - c * (u_old[-1] - u_old[-2]) - dt * decay * u_old[-1]
    ut_new[-1] = (u_new[-1] - u_old[-1]) / dt


def step(state: FieldState, dt: float, params: ModelParams, grid: Grid | None = None,
         acc: np.ndarray | None = None, return_acc: bool = False):
    """One kick-drift-kick leapfrog step.

    ``acc`` may carry the acceleration at ``state`` from the previous step.
    Raises :class:`BlowupSaturation` if the update is not finite.
    """
    grid = grid or state.grid
    # landing steps t_event - t carry a few ulps of t in rounding
    if dt > 0.5 * grid.dx * (1 + 1e-8) + 4 * math.ulp(state.t):
        raise ValueError(f"dt={dt:g} violates the CFL bound 0.5*dx={0.5 * grid.dx:g}")
    if acc is None:
        acc = acceleration(state.u, params, grid)
    with np.errstate(over="ignore", invalid="ignore"):
        vh = state.ut + 0.5 * dt * acc
        u_new = state.u + dt * vh
        acc_new = acceleration(u_new, params, grid)
        ut_new = vh + 0.5 * dt * acc_new
    if grid.boundary == "absorbing":
        _absorb(state.u, u_new, ut_new, dt, grid)
        acc_new = acceleration(u_new, params, grid)
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(ut_new))
            and np.all(np.isfinite(acc_new))):
        raise BlowupSaturation(state)
    new = FieldState(state.t + dt, u_new, ut_new, grid)
    return (new, acc_new) if return_acc else new


@dataclass
class SolverConfig:
    dt0: float | None = None  # defaults to 0.5 dx
    cfl: float = 0.1
    U_max: float = 1e7
    snapshot_growth: float = 2.0 ** 0.25
    max_steps: int = 200_000
    t_max: float = math.inf
    history_cap: int = 20_000
    min_growth_points: int = 20


@dataclass
class RunResult:
    status: str  # "saturated" or "bounded"
    snapshots: list
    surface: BlowupSurface | None
    history_t: np.ndarray
    history_amp: np.ndarray
    max_t: np.ndarray
    max_amp: np.ndarray
    final: FieldState


def _halve_dt(dt, umax, params, cfl):
    q = (params.p - 1) / 2
    while umax ** q * dt > cfl:
        dt *= 0.5
    return dt


def run_to_blowup(init: FieldState, params: ModelParams, grid: Grid | None = None,
                  config: SolverConfig | None = None) -> RunResult:
    """Advance until max|u| >= U_max or the step budget runs out.

    Snapshots are stored each time max|u| grows by ``snapshot_growth``
    (log-spaced in amplitude, hence roughly in T - t).  The per-node |u|
    history feeds :func:`estimate_T`.
    """
    cfg = config or SolverConfig()
    grid = grid or init.grid
    dt = cfg.dt0 if cfg.dt0 is not None else 0.5 * grid.dx
    state = init
    acc = acceleration(state.u, params, grid)
    snaps = [state]
    next_snap = max(float(np.max(np.abs(state.u))), 1e-300) * cfg.snapshot_growth
    hist_t, hist_a = [state.t], [np.abs(state.u)]
    max_t, max_a = [state.t], [float(np.max(np.abs(state.u)))]
    status = "bounded"
    for _ in range(cfg.max_steps):
        umax = max_a[-1]
        if umax >= cfg.U_max:
            status = "saturated"
            break
        if state.t >= cfg.t_max:
            break
        dt = _halve_dt(dt, umax, params, cfg.cfl)
        try:
            state, acc = step(state, dt, params, grid, acc=acc, return_acc=True)
        except BlowupSaturation as exc:
            state = exc.state
            status = "saturated"
            break
        amp = np.abs(state.u)
        umax = float(amp.max())
        hist_t.append(state.t)
        hist_a.append(amp)
        max_t.append(state.t)
        max_a.append(umax)
        if len(hist_t) > cfg.history_cap:
            half = len(hist_t) // 2
            hist_t = hist_t[:half:2] + hist_t[half:]
            hist_a = hist_a[:half:2] + hist_a[half:]
        if umax >= next_snap:
            snaps.append(state)
            while next_snap <= umax:
                next_snap *= cfg.snapshot_growth
    else:
        if max_a[-1] >= cfg.U_max:
            status = "saturated"
    if snaps[-1] is not state:
        snaps.append(state)
    ht, ha = np.array(hist_t), np.array(hist_a)
    surface = None
    if status == "saturated":
        T, quality = estimate_T(ht, ha, params, min_points=cfg.min_growth_points,
                                kappa=derive_constants(params).kappa)
        surface = build_surface(grid.x, T, quality)
    return RunResult(status, snaps, surface, ht, ha, np.array(max_t), np.array(max_a), state)


def estimate_T(times, amps, params: ModelParams, min_points: int = 20,
               kappa: float | None = None, amp_factor: float = 4.0):
    """Per-node blow-up time from |u| ~ C (T - t)^{-2/(p-1)} on the last decade.

    The exponent is frozen, so |u|^{-(p-1)/2} is fitted by a straight line in
    t and T is its zero.  Nodes without a full final decade of at least
    ``min_points`` samples, with a non-monotone tail, or (when ``kappa`` is
    given) with a fitted amplitude C^{(p-1)/2} more than ``amp_factor`` away
    from kappa^{(p-1)/2} get T = inf.

    Returns ``(T, quality)`` with quality strings per node.
    """
    times = np.asarray(times, dtype=float)
    amps = np.asarray(amps, dtype=float)
    if amps.ndim == 1:
        amps = amps[:, None]
    q = (params.p - 1) / 2
    n_nodes = amps.shape[1]
    T = np.full(n_nodes, math.inf)
    quality = np.full(n_nodes, "ok", dtype=object)
    for j in range(n_nodes):
        a = amps[:, j]
        a_end = a[-1]
        if not a_end > 0:
            quality[j] = "no-growth"
            continue
        below = np.nonzero(a < a_end / 10.0)[0]
        if below.size == 0:
            quality[j] = "no-growth"
            continue
        start = below[-1] + 1
        if len(a) - start < min_points:
            quality[j] = "few-points"
            continue
        tt, aa = times[start:], a[start:]
        if np.any(np.diff(aa) <= 0):
            quality[j] = "non-monotone"
            continue
        with np.errstate(over="ignore", divide="ignore"):
            z = aa ** (-q)
        if not np.all(np.isfinite(z)):
            quality[j] = "bad-fit"  # amplitudes near underflow
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            slope, icpt = np.polyfit(tt, z, 1)
        if not (slope < 0 and math.isfinite(slope) and math.isfinite(icpt)):
            quality[j] = "bad-fit"
            continue
        Tj = -icpt / slope
        if kappa is not None:
            amp = -1.0 / slope  # C^q
            kq = kappa ** q
            if not (kq / amp_factor <= amp <= kq * amp_factor):
                quality[j] = "bad-amplitude"
                continue
        T[j] = Tj
    return T, quality


def _slope_near(x, T, i0):
    lo = i0
    while lo > 0 and np.isfinite(T[lo - 1]):
        lo -= 1
    hi = i0
    while hi < len(T) - 1 and np.isfinite(T[hi + 1]):
        hi += 1
    if hi - lo < 1:
        return math.nan
    return float(np.max(np.abs(np.diff(T[lo:hi + 1]) / np.diff(x[lo:hi + 1]))))


def build_surface(x, T, quality=None, margin: float = 0.05) -> BlowupSurface:
    x = np.asarray(x, dtype=float)
    T = np.asarray(T, dtype=float)
    finite = np.isfinite(T)
    if not finite.any():
        return BlowupSurface(x, T, math.nan, math.nan, None, quality)
    i0 = int(np.argmin(np.where(finite, T, np.inf)))
    slope = _slope_near(x, T, i0)
    verdict = None if math.isnan(slope) else bool(slope <= 1 - margin)
    return BlowupSurface(x, T, slope, float(x[i0]), verdict, quality)


def non_characteristic_check(surface: BlowupSurface, x0: float, window: float,
                             margin: float = 0.05):
    """Max finite-difference slope of T on |x - x0| <= window.

    Returns ``(verdict, slope)``; the verdict is ``None`` (inconclusive) when
    fewer than three finite-T nodes fall in the window.
    """
    sel = (np.abs(surface.x - x0) <= window) & np.isfinite(surface.T_of_x)
    if np.count_nonzero(sel) < 3:
        return None, math.nan
    xs, Ts = surface.x[sel], surface.T_of_x[sel]
    slope = float(np.max(np.abs(np.diff(Ts) / np.diff(xs))))
    return bool(slope <= 1 - margin), slope


# -- cone-adapted runs ------------------------------------------------------

@dataclass
class ConeRun:
    status: str  # "complete", "saturated" or "exhausted"
    snapshots: list
    s_reached: list
    center_t: np.ndarray
    center_amp: np.ndarray
    cone_max: np.ndarray
    t_saturation: float | None = None


def _as_callables(init):
    if isinstance(init, FieldState):
        g = init.grid
        if g.kind == "radial":
            bc = ((1, 0.0), "not-a-knot")
            su = CubicSpline(g.x, init.u, bc_type=bc)
            sv = CubicSpline(g.x, init.ut, bc_type=bc)
        else:
            su = CubicSpline(g.x, init.u)
            sv = CubicSpline(g.x, init.ut)
        return su, sv
    return init


def run_in_cone(init, params: ModelParams, x0: float, T0: float, s_targets,
                t_start: float = 0.0, n_per_radius: int = 64, width: float = 3.0,
                cfl: float = 0.1, U_max: float = 1e7, kind: str = "line",
                max_steps: int = 2_000_000) -> ConeRun:
    """Solve inside the backward light cone of (x0, T0), re-gridding as it shrinks.

    ``init`` is a FieldState or a pair of callables (u0, u1) evaluated at
    ``t_start``.  The grid covers |x - x0| <= width * R with R = T0 - t and
    spacing R / n_per_radius; each time R halves the solution is moved to a
    grid twice as fine by cubic interpolation.  Everything outside the cone
    is a buffer whose errors cannot reach the cone before the next re-grid.

    Snapshots are returned exactly at t = T0 - exp(-s) for each requested s.
    """
    if kind == "radial" and x0 != 0.0:
        raise ValueError("radial runs only support x0 = 0")
    s_targets = sorted(float(s) for s in s_targets)
    t_targets = [T0 - math.exp(-s) for s in s_targets]
    if t_targets and t_targets[0] < t_start:
        raise ValueError("first target lies before the start time")
    u0, u1 = _as_callables(init)
    N = params.N

    def make_grid(R):
        dx = R / n_per_radius
        J = int(math.ceil(width * n_per_radius))
        if kind == "radial":
            return Grid("radial", dx * np.arange(J + 1), dx, N, "open")
        return Grid("line", x0 + dx * np.arange(-J, J + 1), dx, 1, "open")

    R = T0 - t_start
    if not R > 0:
        raise ValueError("start time must precede T0")
    grid = make_grid(R)
    state = FieldState(t_start, np.asarray(u0(grid.x), float), np.asarray(u1(grid.x), float), grid)
    R_level = R
    acc = acceleration(state.u, params, grid)
    dt = 0.5 * grid.dx
    snaps, reached = [], []
    ct, ca, cm = [state.t], [], []
    ic = int(np.argmin(np.abs(grid.x - x0)))
    ca.append(abs(state.u[ic]))
    in_cone = np.abs(grid.x - x0) <= R
    cm.append(float(np.max(np.abs(state.u[in_cone]))))
    k = 0
    status = "exhausted"
    t_sat = None
    regrid_due = False
    for _ in range(max_steps):
        if k >= len(t_targets):
            status = "complete"
            break
        R = T0 - state.t
        if R <= 4096 * math.ulp(T0):
            break  # the cone has shrunk below time resolution
        if regrid_due:
            regrid_due = False
            # re-grid on the shrunken cone
            new_grid = make_grid(R)
            bc = ((1, 0.0), "not-a-knot") if kind == "radial" else "not-a-knot"
            su = CubicSpline(grid.x, state.u, bc_type=bc)
            sv = CubicSpline(grid.x, state.ut, bc_type=bc)
            grid = new_grid
            state = FieldState(state.t, su(grid.x), sv(grid.x), grid)
            acc = acceleration(state.u, params, grid)
            R_level = R
            dt = 0.5 * grid.dx
            ic = int(np.argmin(np.abs(grid.x - x0)))
        umax = float(np.max(np.abs(state.u[np.abs(grid.x - x0) <= R])))
        if umax >= U_max:
            status = "saturated"
            t_sat = state.t
            break
        dt = _halve_dt(min(dt, 0.5 * grid.dx), umax, params, cfl)
        # land exactly on the next target or re-grid time
        t_regrid = T0 - 0.5 * R_level
        t_event = min(t_targets[k], t_regrid)
        hit = state.t + dt >= t_event - 1e-9 * dt
        h = t_event - state.t if hit else dt
        if not state.t + h > state.t:
            break  # the cone has shrunk below time resolution
        try:
            state, acc = step(state, h, params, grid, acc=acc, return_acc=True)
        except BlowupSaturation:
            status = "saturated"
            t_sat = state.t
            break
        if hit:
            state.t = t_event
            regrid_due = t_event == t_regrid
            if t_event == t_targets[k]:
                snaps.append(state)
                reached.append(s_targets[k])
                k += 1
        ct.append(state.t)
        ca.append(abs(state.u[ic]))
        cm.append(float(np.max(np.abs(state.u[np.abs(grid.x - x0) <= T0 - state.t]))))
    if status == "exhausted" and k >= len(t_targets):
        status = "complete"
    return ConeRun(status, snaps, reached, np.array(ct), np.array(ca), np.array(cm), t_sat)


# -- snapshot files -----------------------------------------------------------

def write_snapshot(state: FieldState, path, fmt: str = "csv") -> Path:
    path = Path(path)
    g = state.grid
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "dx", "N", "kind", "boundary"])
            w.writerow([repr(float(state.t)), repr(float(g.dx)), g.N, g.kind, g.boundary])
            w.writerow(["x", "u", "ut"])
            for row in zip(g.x, state.u, state.ut):
                w.writerow([repr(float(v)) for v in row])
    elif fmt == "npz":
        np.savez(path, t=state.t, dx=g.dx, N=g.N, kind=g.kind, boundary=g.boundary,
                 x=g.x, u=state.u, ut=state.ut)
    else:
        raise ValueError(f"unknown snapshot format {fmt!r}")
    return path


def read_snapshot(path) -> FieldState:
    path = Path(path)
    if path.suffix == ".npz":
        d = np.load(path)
        grid = Grid(str(d["kind"]), d["x"], float(d["dx"]), int(d["N"]), str(d["boundary"]))
        return FieldState(float(d["t"]), d["u"], d["ut"], grid)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    t, dx, N, kind, boundary = rows[1]
    data = np.array([[float(v) for v in r] for r in rows[3:]])
    grid = Grid(kind, data[:, 0], float(dx), int(N), boundary)
    return FieldState(float(t), data[:, 1], data[:, 2], grid)


def shifted(state: FieldState, dx0: float) -> FieldState:
    """The same snapshot with its x-axis translated by ``dx0``."""
    g = state.grid
    return replace(state, grid=Grid(g.kind, g.x + dx0, g.dx, g.N, g.boundary))
