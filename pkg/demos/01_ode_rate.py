"""Space-independent blow-up: the ODE v'' = v^p + f(v) and its rate.

Integrates the exact self-similar solution and a perturbed trajectory, then
fits v ~ kappa (T - t)^(-2/(p-1)) near the blow-up time.
"""
from blowup_lab import ModelParams, derive_constants, fit_blowup, integrate_ode
from blowup_lab.ode import energy_blowup_time, manifold_data

pure = ModelParams(3.0, perturbed=False)
v0, v1 = manifold_data(pure)
fit = fit_blowup(integrate_ode(pure, v0, v1, dt0=5e-3, cfl=0.05))
print(f"pure power, exact T = 1: T_est={fit.T_est:.6f} "
      f"exponent={fit.exponent_est:.4f} kappa={fit.kappa_est:.4f}")

prm = ModelParams(3.0, 2.0)
kappa = derive_constants(prm).kappa
for amp in (2.0, 10.0, 100.0):
    fit = fit_blowup(integrate_ode(prm, amp, 0.0, dt0=5e-3, cfl=0.05))
    T_ref = energy_blowup_time(prm, amp)
    print(f"log-perturbed, v0={amp:6.1f}: T_est={fit.T_est:.6f} (quadrature {T_ref:.6f}) "
          f"kappa_est={fit.kappa_est:.4f} vs kappa={kappa:.4f}")
