"""Space-independent solutions v'' = |v|^{p-1} v + f(v) and blow-up fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .model import ModelParams, derive_constants, source_term


@dataclass
class OdeTrajectory:
    t: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    stopped_at: str  # "threshold" or "max-steps"
    params: ModelParams | None = None

    @property
    def blew_up(self) -> bool:
        return self.stopped_at == "threshold"


@dataclass
class BlowupFit:
    T_est: float
    exponent_est: float
    kappa_est: float
    residual: float


class NoBlowupError(RuntimeError):
    """Raised when a trajectory is asked for a blow-up fit it cannot support."""


def integrate_ode(params: ModelParams, v0: float, v1: float, threshold: float = 1e8,
                  dt0: float = 1e-2, cfl: float = 0.1, max_steps: int = 200_000) -> OdeTrajectory:
    """Velocity-Verlet integration until ``v`` reaches ``threshold``.

    The step starts at ``dt0`` and is halved (never restored) whenever
    ``|v|^{(p-1)/2} dt`` exceeds ``cfl``.  Halving ``dt0`` and ``cfl``
    together refines the whole step sequence by two.
    """
    if not threshold > max(1.0, v0):
        raise ValueError("threshold must exceed max(1, v0)")
    if not dt0 > 0:
        raise ValueError("dt0 must be positive")
    q = (params.p - 1) / 2
    t, v, vd, dt = 0.0, float(v0), float(v1), float(dt0)
    acc = source_term(v, params)
    ts, vs, vds = [t], [v], [vd]
    stopped = "max-steps"
    for _ in range(max_steps):
        while abs(v) ** q * dt > cfl:
            dt *= 0.5
        vh = vd + 0.5 * dt * acc
        v_new = v + dt * vh
        acc_new = source_term(v_new, params)
        vd_new = vh + 0.5 * dt * acc_new
        if not (math.isfinite(v_new) and math.isfinite(vd_new)):
            stopped = "threshold"
            break
        t, v, vd, acc = t + dt, v_new, vd_new, acc_new
        ts.append(t)
        vs.append(v)
        vds.append(vd)
        if v >= threshold:
            stopped = "threshold"
            break
    return OdeTrajectory(np.array(ts), np.array(vs), np.array(vds), stopped, params)


def _richardson_T(t, v, q):
    # v^{-q} is asymptotically linear in t and vanishes at T
    z = v ** (-q)
    slope, icpt = np.polyfit(t[-10:], z[-10:], 1)
    return -icpt / slope


def fit_blowup(traj: OdeTrajectory, params: ModelParams | None = None,
               window_decades: float = 1.0) -> BlowupFit:
    """Fit v ~ A (T - t)^{-beta} on the last decade of growth.

    Joint least squares in (T, beta, log A) on log v, with T initialised by
    extrapolating v^{-(p-1)/2} linearly to zero.  ``kappa_est`` is the tail
    mean of v (T_est - t)^{2/(p-1)}, i.e. the amplitude at the theoretical
    exponent.
    """
    params = params or traj.params
    if params is None:
        raise ValueError("model parameters are required")
    t, v = np.asarray(traj.t), np.asarray(traj.v)
    if not traj.blew_up:
        raise NoBlowupError("trajectory did not reach its threshold")
    if np.count_nonzero(v > 10 * abs(v[0])) < 50:
        raise NoBlowupError("fewer than 50 points above ten times the initial value")
    sel = v >= v[-1] / 10 ** window_decades
    start = np.argmax(sel)
    tt, vv = t[start:], v[start:]
    if np.any(np.diff(vv) <= 0):
        raise NoBlowupError("tail of the trajectory is not monotone")
    beta_th = 2 / (params.p - 1)
    q = 1 / beta_th

    T0 = _richardson_T(tt, vv, q)
    if not T0 > tt[-1]:
        T0 = tt[-1] + (tt[-1] - tt[-2])
    tau_scale = T0 - tt[-1]

    def resid(x):
        # T parametrised relative to the last time to keep the problem scaled
        T = tt[-1] + tau_scale * math.exp(x[0])
        return np.log(vv) - (x[2] - x[1] * np.log(T - tt))

    A0 = float(np.mean(vv * (T0 - tt) ** beta_th))
    sol = least_squares(resid, [0.0, beta_th, math.log(A0)], method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    T_est = tt[-1] + tau_scale * math.exp(sol.x[0])
    beta = float(sol.x[1])
    kappa_est = float(np.mean(vv * (T_est - tt) ** beta_th))
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return BlowupFit(T_est=float(T_est), exponent_est=beta, kappa_est=kappa_est, residual=rms)


def manifold_data(params: ModelParams, T: float = 1.0):
    """(v0, v1) on the exact pure-power solution kappa (T - t)^{-2/(p-1)}."""
    kappa = derive_constants(params).kappa
    beta = 2 / (params.p - 1)
    return kappa * T ** (-beta), beta * kappa * T ** (-beta - 1)


def energy_blowup_time(params: ModelParams, v0: float) -> float:
    """Blow-up time from rest at v0 > 0 by quadrature of the conserved energy.

    With v'(0) = 0, (v')^2 / 2 = G(v) - G(v0) where G' = source, so
    T = ∫_{v0}^∞ dv / sqrt(2 (G(v) - G(v0))).  Independent of any time stepper.
    """
    from scipy.integrate import quad

    from .model import F_antiderivative

    p = params.p

    def G(v):
        return v ** (p + 1) / (p + 1) + F_antiderivative(v, params)

    G0 = G(v0)
    # substitute v = v0 / x^2 ... use v = v0 / (1 - r^2), r in (0,1): removes both singularities
    def integrand(r):
        if r <= 0.0:
            # endpoint limit: G(v) - G(v0) ~ g(v0)(v - v0), v - v0 ~ v0 r^2
            g0 = float(source_term(v0, params))
            return 2 * v0 / math.sqrt(2 * g0 * v0)
        om = 1.0 - r * r
        v = v0 / om
        dv = 2 * v0 * r / om ** 2
        diff = G(v) - G0
        return dv / math.sqrt(2 * diff)

    val, _ = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=400)
    return val
