"""Verdicts over series of energy reports and physical snapshots."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .energy import EnergyReport, jacobi_quad, lp1_time_average, retheta
from .model import ModelParams, derive_constants


@dataclass
class DiagnosticsConfig:
    S1: float = 1.0
    theta: float | str = "auto"
    tolerance: float | None = None  # relative to max|H|; None picks min(1e-3, 10 ds^2)

    def __post_init__(self):
        if not self.S1 >= 1:
            raise ValueError("S1 must be at least 1")
        if self.tolerance is not None and self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        if not (self.theta == "auto" or (isinstance(self.theta, (int, float)) and self.theta >= 0)):
            raise ValueError("theta must be 'auto' or a non-negative number")


@dataclass
class MonotonicityResult:
    violations: list  # (s1, s2, excess)
    worst_excess: float
    passed: bool
    tolerance: float


def _check_series(reports):
    ss = np.array([r.s for r in reports])
    if np.any(np.diff(ss) <= 0):
        raise ValueError("reports must be sorted by strictly increasing s")
    return ss


def theorem1_monotonicity(reports, params: ModelParams,
                          config: DiagnosticsConfig | None = None) -> MonotonicityResult:
    """Check H(s2) - H(s1) + α ∫_{s1}^{s2} D ds <= tol on every adjacent pair.

    The integral of D is the trapezoid rule on the two endpoint values.
    """
    cfg = config or DiagnosticsConfig()
    if len(reports) < 2:
        return MonotonicityResult([], -math.inf, True, 0.0)
    ss = _check_series(reports)
    if ss[0] < cfg.S1:
        raise ValueError(f"series starts at s={ss[0]} below S1={cfg.S1}")
    alpha = derive_constants(params).alpha
    H = np.array([r.H for r in reports])
    D = np.array([r.D for r in reports])
    ds = np.diff(ss)
    rel = cfg.tolerance if cfg.tolerance is not None else min(1e-3, 10 * float(ds.max()) ** 2)
    tol = rel * float(np.max(np.abs(H)))
    excess = np.diff(H) + alpha * 0.5 * (D[1:] + D[:-1]) * ds
    bad = np.nonzero(excess > tol)[0]
    viol = [(float(ss[i]), float(ss[i + 1]), float(excess[i])) for i in bad]
    return MonotonicityResult(viol, float(excess.max()), not viol, tol)


def choose_theta(reports, params: ModelParams, config: DiagnosticsConfig | None = None,
                 cap: float = 1e6, resolution: float = 1e-3) -> float:
    """Smallest θ >= 0 (to ``resolution``) for which the monotonicity check passes."""
    cfg = config or DiagnosticsConfig()
    if len(reports) < 2:
        return 0.0

    def ok(theta):
        reps = [retheta(r, params, theta) for r in reports]
        return theorem1_monotonicity(reps, params, cfg).passed

    if ok(0.0):
        return 0.0
    hi = 1.0
    while not ok(hi):
        if hi >= cap:
            res = theorem1_monotonicity([retheta(r, params, cap) for r in reports], params, cfg)
            raise RuntimeError(
                f"no theta <= {cap:g} restores monotonicity; worst excess "
                f"{res.worst_excess:.3e} at {res.violations[:1]} (discretisation too coarse?)")
        hi = min(2 * hi, cap)
    lo = 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def blowup_criterion(report: EnergyReport, S1: float = 1.0) -> bool:
    """True when H < 0: such a state cannot belong to a global solution."""
    if report.s < S1:
        raise ValueError(f"criterion needs s >= S1={S1}, got {report.s}")
    return report.H < 0


@dataclass
class BoundsReport:
    eps0_emp: float
    K_emp: float
    E_min: float
    E_max: float
    cumulative_dissipation: float
    window: tuple

    @property
    def band_ratio(self) -> float:
        return self.K_emp / self.eps0_emp if self.eps0_emp > 0 else math.inf


def corollary_bounds(reports, s_lo: float | None = None, s_hi: float | None = None) -> BoundsReport:
    ss = _check_series(reports) if len(reports) > 1 else np.array([r.s for r in reports])
    lo = -math.inf if s_lo is None else s_lo
    hi = math.inf if s_hi is None else s_hi
    sel = [r for r, s in zip(reports, ss) if lo - 1e-12 <= s <= hi + 1e-12]
    if not sel:
        raise ValueError("no reports in the requested window")
    norms = np.array([r.h1_norm + r.l2_ws for r in sel])
    E = np.array([r.E for r in sel])
    s = np.array([r.s for r in sel])
    D = np.array([r.D for r in sel])
    cum = float(np.trapezoid(D, s)) if len(sel) > 1 else 0.0
    return BoundsReport(float(norms.min()), float(norms.max()), float(E.min()), float(E.max()),
                        cum, (float(s[0]), float(s[-1])))


def lp1_windows(reports, s_lo: float, s_hi: float):
    """Averages of ∫|w|^{p+1}ρ over consecutive unit windows in [s_lo, s_hi]."""
    out = []
    s = s_lo
    while s + 1 <= s_hi + 1e-9:
        out.append(lp1_time_average(reports, s))
        s += 1.0
    return out


# -- physical-space two-sided bound ------------------------------------------

@dataclass
class Theorem2Result:
    t: np.ndarray
    Q: np.ndarray
    t0: float
    T: float
    stopped: str  # "complete" or "resolution"

    @property
    def envelope_ratio(self) -> float:
        if self.Q.size == 0 or not self.Q.min() > 0:
            return math.inf
        return float(self.Q.max() / self.Q.min())


def theorem2_start(T: float, S1: float = 1.0) -> float:
    s_hat = max(S1, -math.log(T / 4))
    return max(T - math.exp(-s_hat), 0.75 * T)


def _ball_norms(snap, x0, R, n=64):
    g = snap.grid
    bc = ((1, 0.0), "not-a-knot") if g.kind == "radial" else "not-a-knot"
    su = CubicSpline(g.x, snap.u, bc_type=bc)
    sv = CubicSpline(g.x, snap.ut, bc_type=bc)
    if g.kind == "radial":
        rule = jacobi_quad(n, 0.0, g.N, "radial")
        x = R * rule.nodes
        scale = R ** g.N
    else:
        rule = jacobi_quad(n, 0.0)
        x = x0 + R * rule.nodes
        scale = R
    if x.min() < g.x[0] - 1e-12 or x.max() > g.x[-1] + 1e-12:
        raise ValueError("ball extends outside the snapshot domain")
    norm = lambda v: math.sqrt(scale * rule.integrate(v * v))  # noqa: E731
    return norm(su(x)), norm(sv(x)), norm(su(x, 1))


def theorem2_physical(snapshots, T: float, x0: float, params: ModelParams,
                      S1: float = 1.0, min_cells: int = 3, n: int = 64) -> Theorem2Result:
    """Q(t) = R^β ‖u‖/R^{N/2} + R^{β+1} (‖u_t‖ + ‖∇u‖)/R^{N/2} on B(x0, R), R = T - t.

    β = 2/(p-1); norms are L² over the ball, computed by Gauss–Legendre
    quadrature of the cubic spline of each snapshot.  Snapshots before
    t0(x0) or at/after T are skipped; the scan stops once the ball spans
    fewer than ``min_cells`` grid cells.
    """
    if not math.isfinite(T):
        raise ValueError("blow-up time at x0 is not finite")
    beta = 2 / (params.p - 1)
    t0 = theorem2_start(T, S1)
    ts, Qs = [], []
    stopped = "complete"
    for sn in sorted(snapshots, key=lambda s: s.t):
        if sn.t < t0 or sn.t >= T:
            continue
        R = T - sn.t
        if R < min_cells * sn.grid.dx:
            stopped = "resolution"
            break
        nu, nut, ngrad = _ball_norms(sn, x0, R, n)
        norm = R ** (params.N / 2)
        ts.append(sn.t)
        Qs.append(R ** beta * nu / norm + R ** (beta + 1) * (nut + ngrad) / norm)
    return Theorem2Result(np.array(ts), np.array(Qs), t0, T, stopped)


# -- verdict files --------------------------------------------------------------

def verdict(check: str, window, passed: bool, worst_excess: float, **constants) -> dict:
    def clean(v):
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v
    return {"check": check, "window": [clean(float(w)) for w in window], "pass": bool(passed),
            "worst_excess": clean(float(worst_excess)),
            "empirical_constants": {k: clean(v) for k, v in constants.items()}}


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
