"""Equation parameters, the log-perturbed nonlinearity and its antiderivative.

The equation is

    u_tt = Δu + |u|^{p-1} u + f(u),    f(u) = |u|^p / (log(2 + u^2))^a

with ``f`` switchable off.  ``F`` below is the antiderivative of ``f`` alone;
the pure-power potential |u|^{p+1}/(p+1) is accounted for elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import BPoly

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class ModelParams:
    p: float
    a: float = 2.0
    M: float = 1.0
    N: int = 1
    perturbed: bool = True

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.a > 1:
            raise ValueError(f"a must exceed 1, got {self.a}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if self.N >= 2 and not self.p < 1 + 4 / (self.N - 1):
            raise ValueError(
                f"p={self.p} is not subconformal for N={self.N} "
                f"(need p < {1 + 4 / (self.N - 1)})")

    def replace(self, **changes) -> "ModelParams":
        fields = dict(p=self.p, a=self.a, M=self.M, N=self.N, perturbed=self.perturbed)
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class DerivedConstants:
    kappa: float
    alpha: float
    b: float
    p_c: float


def derive_constants(params: ModelParams) -> DerivedConstants:
    p, N = params.p, params.N
    try:
        kappa = ((2 * p + 2) / (p - 1) ** 2) ** (1 / (p - 1))
    except OverflowError:  # p very close to 1
        kappa = math.inf
    alpha = 2 / (p - 1) - (N - 1) / 2
    b = (params.a + 1) / 2
    p_c = math.inf if N == 1 else 1 + 4 / (N - 1)
    return DerivedConstants(kappa=kappa, alpha=alpha, b=b, p_c=p_c)


def _log_2_plus_sq(u):
    # log(2 + u^2) without forming u^2 (overflows near 1e154)
    with np.errstate(divide="ignore"):
        return np.logaddexp(LOG2, 2.0 * np.log(np.abs(u)))


def perturbation(u, params: ModelParams):
    """f(u) = |u|^p / log(2+u^2)^a, or zero when the perturbation is off."""
    u = np.asarray(u, dtype=float)
    if not params.perturbed:
        return np.zeros_like(u)
    with np.errstate(over="ignore"):
        return np.abs(u) ** params.p / _log_2_plus_sq(u) ** params.a


def source_term(u, params: ModelParams):
    """Right-hand side nonlinearity |u|^{p-1}u + f(u).

    Overflow is not an error: the result is ``inf`` and callers treat any
    non-finite value as the blow-up saturation signal.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.abs(u) ** (params.p - 1) * u
        if params.perturbed:
            out = out + perturbation(u, params)
    return out if out.ndim else float(out)


def F_antiderivative(u: float, params: ModelParams) -> float:
    """F(u) = ∫_0^u f(v) dv by adaptive quadrature (relative tolerance 1e-10)."""
    if not params.perturbed or u == 0:
        return 0.0
    x = abs(float(u))
    fn = lambda v: float(perturbation(v, params))  # noqa: E731
    # split at 1 so the interval stays well-scaled for large |u|
    if x <= 1.0:
        val, _ = quad(fn, 0.0, x, epsabs=0.0, epsrel=1e-12, limit=200)
    else:
        v1, _ = quad(fn, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
        v2, _ = quad(fn, 1.0, x, epsabs=0.0, epsrel=1e-12, limit=500,
                     points=_split_points(x))
        val = v1 + v2
    return math.copysign(val, u)


def _split_points(x):
    if x <= 10.0:
        return None
    return list(np.geomspace(10.0, x, int(math.log10(x)) + 2)[:-1])


class FTable:
    """Vectorised F for hot loops.

    Tabulates log F against log |u| at 1024 log-spaced abscissae.  The first
    two log-derivatives of F are known in closed form, so the table is
    interpolated by a piecewise quintic Hermite polynomial.  Below the table
    F is taken from its small-|u| expansion; above it the exact quadrature is
    used.
    """

    n_nodes = 1024

    def __init__(self, params: ModelParams, u_lo: float = 1e-6, u_hi: float | None = None):
        self.params = params
        p, a = params.p, params.a
        if u_hi is None:
            u_hi = min(1e30, 10 ** (280 / (p + 1)))
        self.u_lo, self.u_hi = u_lo, u_hi
        x = np.geomspace(u_lo, u_hi, self.n_nodes)
        fn = lambda v: float(perturbation(v, params))  # noqa: E731
        vals = np.empty_like(x)
        vals[0] = self._small(u_lo)
        for k in range(1, len(x)):
            piece, _ = quad(fn, x[k - 1], x[k], epsabs=0.0, epsrel=1e-13, limit=100)
            vals[k] = vals[k - 1] + piece
        # g = dlogF/dlogu = u f / F,  dg/dlogu = g (1 + u f'/f - g)
        g = x * perturbation(x, params) / vals
        u_fprime_over_f = p - 2 * a * x * x / ((2 + x * x) * _log_2_plus_sq(x))
        dg = g * (1 + u_fprime_over_f - g)
        derivs = np.column_stack([np.log(vals), g, dg])
        self._spline = BPoly.from_derivatives(np.log(x), derivs)

    def _small(self, x):
        # F(x) = x^{p+1}/((p+1) log2^a) * (1 - a (p+1) x^2 / (2 (p+3) log 2) + ...)
        p, a = self.params.p, self.params.a
        lead = x ** (p + 1) / ((p + 1) * LOG2 ** a)
        return lead * (1 - a * (p + 1) * x * x / (2 * (p + 3) * LOG2))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if not self.params.perturbed:
            return np.zeros_like(u)
        x = np.abs(u)
        out = np.zeros_like(x)
        mid = (x >= self.u_lo) & (x <= self.u_hi)
        lo = (x > 0) & (x < self.u_lo)
        hi = x > self.u_hi
        out[mid] = np.exp(self._spline(np.log(x[mid])))
        out[lo] = self._small(x[lo])
        if np.any(hi):
            out[hi] = [F_antiderivative(v, self.params) for v in x[hi]]
        return np.sign(u) * out


@lru_cache(maxsize=32)
def F_table(params: ModelParams) -> FTable:
    return FTable(params)


def check_Hf(params: ModelParams, sample_points, f=None):
    """Check the growth hypothesis |f(x)| <= M (1 + |x|^p / log(2+x^2)^a).

    Returns ``(holds, worst_ratio)`` where the ratio is |f| / bound maximised
    over the samples.  ``f`` defaults to the built-in perturbation.
    """
    x = np.asarray(sample_points, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one sample point")
    fx = perturbation(x, params) if f is None else np.asarray(f(x), dtype=float)
    bound = params.M * (1 + np.abs(x) ** params.p / _log_2_plus_sq(x) ** params.a)
    ratio = float(np.max(np.abs(fx) / bound))
    return ratio <= 1.0, ratio
