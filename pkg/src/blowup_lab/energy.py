"""Weighted quadrature on the unit ball and the Lyapunov functionals.

All integrals carry the weight ρ(y) = (1 - |y|^2)^α.  Each integral uses a
Gauss–Jacobi rule whose weight exponent absorbs its boundary behaviour:
β = α for most terms, β = α - 1 for the dissipation, β = 0 for plain
L² / H¹ norms.

A *source* is either a WState or a callable ``y_nodes -> WState``.  Callables
are sampled directly at the rule's nodes (no interpolation).  A WState is
resampled by cubic splines, with gradients from the spline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from .model import F_table, ModelParams, derive_constants, perturbation
from .similarity import WState


@dataclass(frozen=True, eq=False)
class QuadRule:
    nodes: np.ndarray
    weights: np.ndarray
    beta: float
    N: int = 1
    kind: str = "line"

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _sphere_area(N):
    return 2 * math.pi ** (N / 2) / math.gamma(N / 2)


@lru_cache(maxsize=128)
def jacobi_quad(n: int, beta: float, N: int = 1, kind: str = "line") -> QuadRule:
    """n-point Gauss–Jacobi rule for ∫ g(y) (1 - |y|^2)^β dy on the unit ball.

    ``kind="line"`` integrates over (-1, 1).  ``kind="radial"`` integrates a
    radial g over the N-ball; with z = 2r^2 - 1 this is a Jacobi rule with
    exponents (β, (N-2)/2), exact for polynomials of degree <= 2n-1 in r^2.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if not beta > -1:
        raise ValueError(f"weight exponent {beta} is not integrable (need > -1)")
    if kind == "line":
        x, wts = roots_jacobi(n, beta, beta)
        return QuadRule(x, wts, beta, N, kind)
    if kind != "radial":
        raise ValueError(f"unknown quadrature kind {kind!r}")
    gam = (N - 2) / 2
    z, wz = roots_jacobi(n, beta, gam)
    r = np.sqrt((1 + z) / 2)
    scale = _sphere_area(N) / 4 * 2.0 ** (-beta - gam)
    order = np.argsort(r)
    return QuadRule(r[order], (wz * scale)[order], beta, N, kind)


def rule_for(params: ModelParams, n: int, shift: float = 0.0, kind: str | None = None,
             absolute: float | None = None) -> QuadRule:
    """Rule with β = α + shift (or β = ``absolute``) for the model's dimension."""
    kind = kind or ("line" if params.N == 1 else "radial")
    beta = derive_constants(params).alpha + shift if absolute is None else absolute
    return jacobi_quad(n, float(beta), params.N, kind)


# -- sampling -----------------------------------------------------------------

@dataclass
class Sample:
    y: np.ndarray
    w: np.ndarray
    ws: np.ndarray
    wy: np.ndarray
    s: float


def sample(source, rule: QuadRule) -> Sample:
    if callable(source) and not isinstance(source, WState):
        st = source(rule.nodes)
        if st.wy is None:
            raise ValueError("sampled state carries no gradient")
        return Sample(rule.nodes, st.w, st.ws, st.wy, st.s)
    st = source
    if st.y.shape == rule.nodes.shape and np.array_equal(st.y, rule.nodes) and st.wy is not None:
        return Sample(st.y, st.w, st.ws, st.wy, st.s)
    if st.y.size < 4:
        raise ValueError("need at least 4 nodes to resample")
    sw = CubicSpline(st.y, st.w)
    sws = CubicSpline(st.y, st.ws)
    y = rule.nodes
    return Sample(y, sw(y), sws(y), sw(y, 1), st.s)


# -- functionals ----------------------------------------------------------------

def _grad_sq(smp: Sample):
    # |∇w|^2 - (y·∇w)^2 reduces to w_r^2 (1 - r^2) for 1-D and radial fields
    return smp.wy ** 2 * (1 - smp.y ** 2)


def compute_E0(source, params: ModelParams, rule: QuadRule) -> float:
    smp = sample(source, rule)
    p = params.p
    dens = (0.5 * smp.ws ** 2 + 0.5 * _grad_sq(smp)
            + (p + 1) / (p - 1) ** 2 * smp.w ** 2
            - np.abs(smp.w) ** (p + 1) / (p + 1))
    return rule.integrate(dens)


def compute_I(source, params: ModelParams, rule: QuadRule) -> float:
    if not params.perturbed:
        return 0.0
    smp = sample(source, rule)
    return _I_from(smp, params, rule)


def _I_from(smp: Sample, params, rule):
    if not params.perturbed:
        return 0.0
    p, s = params.p, smp.s
    big = F_table(params)(math.exp(2 * s / (p - 1)) * smp.w)
    return -math.exp(-2 * (p + 1) * s / (p - 1)) * rule.integrate(big)


def compute_J(source, params: ModelParams, rule: QuadRule) -> float:
    smp = sample(source, rule)
    if not smp.s > 0:
        raise ValueError(f"J needs s > 0, got s={smp.s}")
    b = derive_constants(params).b
    return -rule.integrate(smp.w * smp.ws) / smp.s ** b


def h_factor(params: ModelParams, s: float) -> float:
    b = derive_constants(params).b
    return math.exp((params.p + 3) / ((params.a - 1) * s ** (b - 1)))


def theta_weight(params: ModelParams, s: float) -> float:
    return math.exp(-(params.p + 1) * s / (params.p - 1))


@dataclass
class EnergyReport:
    s: float
    E0: float
    I: float
    J: float
    E: float
    H: float
    D: float
    sigma01: float
    sigma02: float
    lp1: float
    h1_norm: float
    l2_ws: float
    theta_used: float

    @property
    def sigma0(self) -> float:
        return self.sigma01 + self.sigma02


def _assemble(s, E0, I, J, D, s1, s2, lp1, h1, l2, theta, params):
    E = E0 + I + J
    H = h_factor(params, s) * E + theta * theta_weight(params, s)
    return EnergyReport(s, E0, I, J, E, H, D, s1, s2, lp1, h1, l2, theta)


def retheta(report: EnergyReport, params: ModelParams, theta: float) -> EnergyReport:
    """Same report with a different θ (H is affine in θ)."""
    return _assemble(report.s, report.E0, report.I, report.J, report.D, report.sigma01,
                     report.sigma02, report.lp1, report.h1_norm, report.l2_ws, theta, params)


def sigma0_parts(smp: Sample, params: ModelParams, rule: QuadRule):
    if not params.perturbed:
        return 0.0, 0.0
    p, s = params.p, smp.s
    lam = math.exp(2 * s / (p - 1))
    s1 = (2 * (p + 1) / (p - 1)) * math.exp(-2 * (p + 1) * s / (p - 1)) \
        * rule.integrate(F_table(params)(lam * smp.w))
    s2 = -(2 / (p - 1)) * math.exp(-2 * p * s / (p - 1)) \
        * rule.integrate(perturbation(lam * smp.w, params) * smp.w)
    return s1, s2


def compute_D(source, params: ModelParams, n: int = 64) -> float:
    rd = rule_for(params, n, shift=-1.0)
    smp = sample(source, rd)
    return rd.integrate(smp.ws ** 2)


def compute_H(source, params: ModelParams, rule: QuadRule | None = None,
              theta: float = 0.0, n: int = 64) -> EnergyReport:
    """Every functional at one similarity time.

    ``rule`` (default: n-point rule at β = α) carries E0, I, J, Σ0 and the
    L^{p+1} mass; D uses β = α - 1 and the plain norms β = 0, each with the
    same number of nodes.
    """
    if rule is None:
        rule = rule_for(params, n)
    n = rule.nodes.size
    kind = rule.kind
    p = params.p
    smp = sample(source, rule)
    if not smp.s >= 1:
        raise ValueError(f"H is defined here for s >= 1, got s={smp.s}")
    dens = (0.5 * smp.ws ** 2 + 0.5 * _grad_sq(smp)
            + (p + 1) / (p - 1) ** 2 * smp.w ** 2
            - np.abs(smp.w) ** (p + 1) / (p + 1))
    E0 = rule.integrate(dens)
    I = _I_from(smp, params, rule)
    b = derive_constants(params).b
    J = -rule.integrate(smp.w * smp.ws) / smp.s ** b
    lp1 = rule.integrate(np.abs(smp.w) ** (p + 1))
    s1, s2 = sigma0_parts(smp, params, rule)

    rd = jacobi_quad(n, rule.beta - 1.0, params.N, kind)
    D = rd.integrate(sample(source, rd).ws ** 2)
    r0 = jacobi_quad(n, 0.0, params.N, kind)
    s0 = sample(source, r0)
    h1 = math.sqrt(r0.integrate(s0.w ** 2 + s0.wy ** 2))
    l2 = math.sqrt(r0.integrate(s0.ws ** 2))
    return _assemble(smp.s, E0, I, J, D, s1, s2, lp1, h1, l2, theta, params)


def identity_residual(r1: EnergyReport, r2: EnergyReport, D_mid: float, sigma_mid: float,
                      params: ModelParams) -> float:
    """Discrete residual of d/ds (E0 + I) = -2α D + Σ0 over [r1.s, r2.s]."""
    ds = r2.s - r1.s
    if not ds > 0:
        raise ValueError("reports must be in increasing s")
    alpha = derive_constants(params).alpha
    return ((r2.E0 + r2.I) - (r1.E0 + r1.I)) / ds + 2 * alpha * D_mid - sigma_mid


def sigma0_bound_check(report: EnergyReport, params: ModelParams) -> float:
    """Smallest C with Σ0 <= C e^{-(p+1)s/(p-1)} + (C / s^a) ∫|w|^{p+1} ρ."""
    if not report.s >= 1:
        raise ValueError("needs s >= 1")
    sig = report.sigma01 + report.sigma02
    if sig <= 0:
        return 0.0
    denom = theta_weight(params, report.s) + report.lp1 / report.s ** params.a
    return sig / denom


def hardy_ratio(source, params: ModelParams, n: int = 64) -> float:
    """∫ w^2 |y|^2 ρ/(1-|y|^2) ÷ (∫ |∇w|^2 ρ (1-|y|^2) + ∫ w^2 ρ)."""
    num_rule = rule_for(params, n, shift=-1.0)
    grad_rule = rule_for(params, n, shift=1.0)
    mass_rule = rule_for(params, n)
    a = sample(source, num_rule)
    num = num_rule.integrate(a.w ** 2 * a.y ** 2)
    g = sample(source, grad_rule)
    m = sample(source, mass_rule)
    den = grad_rule.integrate(g.wy ** 2) + mass_rule.integrate(m.w ** 2)
    if den == 0:
        return 0.0
    return num / den


def lp1_time_average(reports, s_lo: float, width: float = 1.0) -> float:
    """Trapezoid average of lp1 over [s_lo, s_lo + width] from uniformly spaced reports."""
    ss = np.array([r.s for r in reports])
    vals = np.array([r.lp1 for r in reports])
    tol = 1e-9 * max(1.0, abs(s_lo))
    sel = (ss >= s_lo - tol) & (ss <= s_lo + width + tol)
    ss, vals = ss[sel], vals[sel]
    if ss.size < 2 or abs(ss[0] - s_lo) > tol or abs(ss[-1] - (s_lo + width)) > tol:
        raise ValueError(f"reports do not cover [{s_lo}, {s_lo + width}]")
    steps = np.diff(ss)
    if np.ptp(steps) > 1e-6 * steps.mean():
        raise ValueError("reports are not uniformly spaced")
    return float(np.trapezoid(vals, ss)) / width


CSV_COLUMNS = ["s", "E0", "I", "J", "E", "H", "D", "sigma01", "sigma02", "lp1",
               "h1_norm", "l2_ws", "theta"]


def write_reports(reports, path) -> Path:
    path = Path(path)
    names = [f.name for f in fields(EnergyReport)]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_COLUMNS)
        for r in reports:
            out.writerow([repr(float(getattr(r, k))) for k in names])
    return path


def read_reports(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != CSV_COLUMNS:
        raise ValueError("not an energy report file")
    out = []
    for row in rows[1:]:
        v = [float(x) for x in row]
        out.append(EnergyReport(*v))
    return out
