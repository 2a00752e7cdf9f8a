"""Similarity variables around the blow-up point.

Recentres the solver on the backward cone of (0, T0), maps the solution to
w(y, s) and measures how well the computed w satisfies the self-similar
equation as s grows.
"""
from blowup_lab import ModelParams, SimilarityFrame, derive_constants, to_similarity
from blowup_lab.pipeline import auto_frame, bump
from blowup_lab.similarity import default_nodes, eq1_residual
from blowup_lab.wave import run_in_cone

prm = ModelParams(3.0, 2.0)
kappa = derive_constants(prm).kappa
init = bump(5 * kappa)
T0, _ = auto_frame(init, prm, 0.0, 0.26)
frame = SimilarityFrame(0.0, T0)
print(f"blow-up time at the centre: T0={T0:.7f}")

y = default_nodes()
for s in (2.0, 4.0, 6.0):
    run = run_in_cone(init, prm, 0.0, T0, [s - 0.05, s, s + 0.05], n_per_radius=128)
    states = [to_similarity(sn, frame, prm, y) for sn in run.snapshots]
    _res, norm = eq1_residual(states, prm)
    w0 = states[1].w[len(y) // 2]
    print(f"s={s:.1f}: w(0)={w0:.5f} (kappa={kappa:.5f}) residual={norm:.2e}")
