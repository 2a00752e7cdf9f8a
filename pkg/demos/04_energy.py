"""The perturbed Lyapunov functional along a similarity trajectory.

Computes E0, the perturbation terms and the weighted functional H on an
s-grid, then checks the monotonicity verdict, the bounds and the Hardy-type
ratio.
"""
import numpy as np

from blowup_lab import ModelParams, SimilarityFrame, derive_constants, to_similarity
from blowup_lab.diagnostics import (DiagnosticsConfig, choose_theta, corollary_bounds,
                                    theorem1_monotonicity)
from blowup_lab.energy import hardy_ratio
from blowup_lab.pipeline import auto_frame, bump, frame_series, s_grid, with_theta

prm = ModelParams(3.0, 2.0)
init = bump(5 * derive_constants(prm).kappa)
T0, _ = auto_frame(init, prm, 0.0, 0.26)
frame = SimilarityFrame(0.0, T0)
series = frame_series(init, prm, frame, s_grid(2.0, 8.0, 0.5))

cfg = DiagnosticsConfig()
theta = choose_theta(series.reports, prm, cfg)
reps = with_theta(series.reports, prm, theta)
for r in reps:
    print(f"s={r.s:4.1f} E0={r.E0:.6f} I={r.I:+.2e} J={r.J:+.2e} D={r.D:.2e} H={r.H:.6f}")
mono = theorem1_monotonicity(reps, prm, cfg)
print(f"theta={theta:g} non-increasing={mono.passed} worst excess={mono.worst_excess:.2e}")
b = corollary_bounds(reps)
print(f"bounds: {b}")

last = series.cone.snapshots[-1]
ratio = hardy_ratio(lambda y: to_similarity(last, frame, prm, y), prm)
print(f"Hardy ratio at s={reps[-1].s:g}: {ratio:.4f}")
print("H monotone on the grid:", bool(np.all(np.diff([r.H for r in reps]) <= 0)))
