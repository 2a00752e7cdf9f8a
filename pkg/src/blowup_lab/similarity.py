"""Similarity variables y = (x - x0)/(T0 - t), s = -log(T0 - t),
w = (T0 - t)^{2/(p-1)} u, and the equation w satisfies on the unit ball.

Line frames use y in (-1, 1); radial frames (x0 = 0) use the radius y in [0, 1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .model import ModelParams, derive_constants, perturbation
from .wave import FieldState


@dataclass(frozen=True)
class SimilarityFrame:
    x0: float
    T0: float

    def s_of(self, t: float) -> float:
        return -math.log(self.T0 - t)

    def t_of(self, s: float) -> float:
        return self.T0 - math.exp(-s)


@dataclass
class WState:
    s: float
    y: np.ndarray
    w: np.ndarray
    ws: np.ndarray
    frame: SimilarityFrame
    wy: np.ndarray | None = None
    kind: str = "line"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        self.ws = np.asarray(self.ws, dtype=float)
        if self.w.shape != self.y.shape or self.ws.shape != self.y.shape:
            raise ValueError("w and ws must match the y nodes")
        if np.any(np.abs(self.y) >= 1):
            raise ValueError("similarity nodes must satisfy |y| < 1")
        if self.kind == "radial" and np.any(self.y < 0):
            raise ValueError("radial nodes are radii in [0, 1)")


def default_nodes(kind: str = "line", n: int = 201, eta: float = 0.05) -> np.ndarray:
    if kind == "radial":
        return np.linspace(0.0, 1.0 - eta, n)
    return np.linspace(-1.0 + eta, 1.0 - eta, n)


def _splines(snapshot: FieldState):
    g = snapshot.grid
    bc = ((1, 0.0), "not-a-knot") if g.kind == "radial" else "not-a-knot"
    return CubicSpline(g.x, snapshot.u, bc_type=bc), CubicSpline(g.x, snapshot.ut, bc_type=bc)


def to_similarity(snapshot: FieldState, frame: SimilarityFrame, params: ModelParams,
                  y_nodes=None) -> WState:
    """Sample w and ∂_s w at ``y_nodes`` from a physical snapshot.

    u and u_t are interpolated by cubic splines; ∇_y w is the derivative of
    the spline of u, and ∂_s w = -(2/(p-1)) w - y·∇_y w + R^{(p+1)/(p-1)} u_t
    with R = T0 - t.
    """
    g = snapshot.grid
    R = frame.T0 - snapshot.t
    if not R > 0:
        raise ValueError(f"snapshot time {snapshot.t} is not before T0={frame.T0}")
    if g.kind == "radial" and frame.x0 != 0.0:
        raise ValueError("radial frames must be centred at the origin")
    y = default_nodes(g.kind) if y_nodes is None else np.asarray(y_nodes, dtype=float)
    x = frame.x0 + y * R
    if x.min() < g.x[0] - 1e-12 * R or x.max() > g.x[-1] + 1e-12 * R:
        raise ValueError("requested nodes map outside the snapshot's spatial domain")
    su, sut = _splines(snapshot)
    beta = 2.0 / (params.p - 1)
    Rb = R ** beta
    w = Rb * su(x)
    wy = Rb * R * su(x, 1)
    ws = -beta * w - y * wy + Rb * R * sut(x)
    return WState(-math.log(R), y, w, ws, frame, wy, g.kind)


def _derivs(f, y):
    d1 = np.gradient(f, y, edge_order=2)
    d2 = np.gradient(d1, y, edge_order=2)
    return d1, d2


def eq_rhs(w, ws, y, s, params: ModelParams, kind="line"):
    """Right-hand side of the w-equation with y-derivatives by finite differences."""
    p = params.p
    alpha = derive_constants(params).alpha
    wy, wyy = _derivs(w, y)
    wsy = np.gradient(ws, y, edge_order=2)
    one = 1.0 - y * y
    if kind == "radial":
        N = params.N
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = np.where(y > 0, wyy + (N - 1) / np.where(y > 0, y, 1.0) * wy, N * wyy)
        div = one * lap - 2.0 * (alpha + 1) * y * wy
    else:
        div = one * wyy - 2.0 * (alpha + 1) * y * wy
    beta = 2.0 / (p - 1)
    forcing = 0.0
    if params.perturbed:
        forcing = math.exp(-p * beta * s) * perturbation(math.exp(beta * s) * w, params)
    return (div - 2 * (p + 1) / (p - 1) ** 2 * w + np.abs(w) ** (p - 1) * w
            - (p + 3) / (p - 1) * ws - 2.0 * y * wsy + forcing)


def _rho_norm(res, y, params, kind, eta):
    alpha = derive_constants(params).alpha
    sel = np.abs(y) <= 1 - eta + 1e-12
    yy, rr = y[sel], res[sel]
    wgt = (1 - yy * yy) ** alpha
    if kind == "radial":
        wgt = wgt * yy ** (params.N - 1) * _sphere_area(params.N)
    return math.sqrt(max(np.trapezoid(rr * rr * wgt, yy), 0.0))


def _sphere_area(N):
    return 2 * math.pi ** (N / 2) / math.gamma(N / 2)


def eq1_residual(states, params: ModelParams, eta: float = 0.0):
    """Residual of the w-equation at the middle of three equally spaced states.

    ∂²_s w is the central second difference of the three w's; everything
    else is evaluated on the middle state.  Returns ``(residual, norm)`` with
    the weighted L²_ρ norm over |y| <= 1 - eta.
    """
    a, b, c = states
    if not (np.array_equal(a.y, b.y) and np.array_equal(b.y, c.y)):
        raise ValueError("states must share one y grid")
    h1, h2 = b.s - a.s, c.s - b.s
    if not (h1 > 0 and abs(h1 - h2) <= 1e-9 * max(h1, 1.0)):
        raise ValueError("states must be equally spaced in s")
    ds = 0.5 * (h1 + h2)
    wss = (c.w - 2.0 * b.w + a.w) / ds ** 2
    res = wss - eq_rhs(b.w, b.ws, b.y, b.s, params, b.kind)
    return res, _rho_norm(res, b.y, params, b.kind, eta)


# -- the w^δ family -----------------------------------------------------------

class SnapshotSource:
    """Evaluate (w, ∂_s w, ∇w) from physical snapshots at their own s values."""

    def __init__(self, snapshots, frame: SimilarityFrame, params: ModelParams):
        self.frame, self.params = frame, params
        self._by_s = {frame.s_of(sn.t): sn for sn in snapshots}

    def available(self):
        return sorted(self._by_s)

    def __call__(self, y, s):
        for key, sn in self._by_s.items():
            if abs(key - s) <= 1e-10 * max(1.0, abs(s)):
                st = to_similarity(sn, self.frame, self.params, y)
                return st.w, st.ws, st.wy
        raise ValueError(f"no snapshot at s={s}")


def delta_rescale(w_source, delta: float, s: float, y_nodes, params: ModelParams,
                  frame: SimilarityFrame | None = None, kind: str = "line",
                  mode: str = "chain", ds: float = 1e-4) -> WState:
    """w^δ(y, s) = (1 + δe^s)^{-2/(p-1)} w(y/(1 + δe^s), -log(δ + e^{-s})).

    ``w_source(y, s)`` returns ``(w, ws)`` or ``(w, ws, wy)``.  In ``"chain"``
    mode ∂_s w^δ comes from the chain rule (∇w by finite differences when the
    source does not supply it); in ``"fd"`` mode it is a central difference
    of the rescaled family with step ``ds``.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    y = np.asarray(y_nodes, dtype=float)
    beta = 2.0 / (params.p - 1)

    def rescaled(sv):
        lam = 1.0 + delta * math.exp(sv)
        sigma = -math.log(delta + math.exp(-sv))
        out = w_source(y / lam, sigma)
        return lam, sigma, out

    lam, sigma, out = rescaled(s)
    w_src, ws_src = out[0], out[1]
    amp = lam ** (-beta)
    w = amp * w_src
    if mode == "fd":
        wp = rescaled(s + ds)
        wm = rescaled(s - ds)
        ws = (wp[0] ** (-beta) * wp[2][0] - wm[0] ** (-beta) * wm[2][0]) / (2 * ds)
    elif mode == "chain":
        if len(out) > 2 and out[2] is not None:
            wy_src = out[2]
        else:
            wy_src = np.gradient(w_src, y / lam, edge_order=2)
        g = delta * math.exp(s) / lam  # d(log lam)/ds
        dz = -(y / lam) * g
        dsigma = 1.0 / lam
        ws = amp * (-beta * g * w_src + wy_src * dz + ws_src * dsigma)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    fr = frame or SimilarityFrame(0.0, 0.0)
    if frame is not None:
        fr = SimilarityFrame(frame.x0, frame.T0 - delta)
    return WState(s, y, w, ws, fr, None, kind)


# -- direct interior solver -------------------------------------------------

def _extrapolate_ends(f):
    f[0] = 3 * f[1] - 3 * f[2] + f[3]
    f[-1] = 3 * f[-2] - 3 * f[-3] + f[-4]


def step_w(state: WState, ds: float, params: ModelParams, eta: float = 0.05) -> WState:
    """One classical RK4 step of the w-equation on |y| <= 1 - eta.

    Boundary nodes are filled by quadratic extrapolation after every stage:
    near |y| = 1 the characteristics leave the ball, so no boundary data is
    imposed.  Raises ``FloatingPointError`` if the solution norm grows more
    than tenfold in one step.
    """
    y = state.y
    if np.any(np.abs(y) > 1 - eta + 1e-12):
        raise ValueError("state nodes exceed the interior cutoff")
    kind = state.kind

    def rhs(sv, w, v):
        a = eq_rhs(w, v, y, sv, params, kind)
        return v.copy(), a

    def fix(w, v):
        w = w.copy()
        v = v.copy()
        if kind == "radial":
            # symmetry at r = 0, outflow at the outer edge
            w[-1] = 3 * w[-2] - 3 * w[-3] + w[-4]
            v[-1] = 3 * v[-2] - 3 * v[-3] + v[-4]
        else:
            _extrapolate_ends(w)
            _extrapolate_ends(v)
        return w, v

    s0, w0, v0 = state.s, state.w, state.ws
    k1 = rhs(s0, w0, v0)
    w1, v1 = fix(w0 + 0.5 * ds * k1[0], v0 + 0.5 * ds * k1[1])
    k2 = rhs(s0 + 0.5 * ds, w1, v1)
    w2, v2 = fix(w0 + 0.5 * ds * k2[0], v0 + 0.5 * ds * k2[1])
    k3 = rhs(s0 + 0.5 * ds, w2, v2)
    w3, v3 = fix(w0 + ds * k3[0], v0 + ds * k3[1])
    k4 = rhs(s0 + ds, w3, v3)
    w_new = w0 + ds / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v_new = v0 + ds / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    w_new, v_new = fix(w_new, v_new)
    before = math.sqrt(np.sum(w0 ** 2 + v0 ** 2)) + 1e-300
    after = math.sqrt(np.sum(w_new ** 2 + v_new ** 2))
    if not np.isfinite(after) or after > 10 * before and after > 1e-12:
        raise FloatingPointError("w-solver unstable; reduce ds")
    return WState(s0 + ds, y, w_new, v_new, state.frame, None, kind)


# -- files ------------------------------------------------------------------

def write_wstate(state: WState, params: ModelParams, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["s", "x0", "T0", "p", "a"])
        out.writerow([repr(float(v)) for v in (state.s, state.frame.x0, state.frame.T0,
                                                params.p, params.a)])
        out.writerow(["y", "w", "ws"])
        for row in zip(state.y, state.w, state.ws):
            out.writerow([repr(float(v)) for v in row])
    return path


def read_wstate(path, kind: str = "line") -> WState:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    s, x0, T0, _p, _a = (float(v) for v in rows[1])
    data = np.array([[float(v) for v in r] for r in rows[3:]])
    return WState(s, data[:, 0], data[:, 1], data[:, 2], SimilarityFrame(x0, T0), None, kind)
