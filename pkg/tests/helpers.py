import numpy as np

from blowup_lab.similarity import SimilarityFrame, WState


def analytic_source(s, w, ws, wy, frame=SimilarityFrame(0.0, 1.0), kind="line"):
    """Callable y -> WState from closed-form profiles."""
    def src(y):
        y = np.asarray(y, dtype=float)
        return WState(s, y, w(y), ws(y), frame, wy(y), kind)
    return src


def const_source(s, c, cs=0.0, kind="line"):
    return analytic_source(s, lambda y: np.full_like(y, c), lambda y: np.full_like(y, cs),
                           np.zeros_like, kind=kind)


def band_limited(rng, s=2.0, kmax=6, scale=1.0, kind="line"):
    """Random trigonometric field with exact gradient, as a callable source."""
    k = np.arange(kmax + 1) * np.pi / 2
    c = rng.normal(size=kmax + 1) * scale / (1 + np.arange(kmax + 1))
    phase = rng.uniform(0, 2 * np.pi, size=kmax + 1)
    d = rng.normal(size=kmax + 1) * scale / (1 + np.arange(kmax + 1))
    w = lambda y: np.cos(np.outer(y, k) + phase) @ c  # noqa: E731
    wy = lambda y: -(np.sin(np.outer(y, k) + phase) * k) @ c  # noqa: E731
    ws = lambda y: np.sin(np.outer(y, k) + phase) @ d  # noqa: E731
    return analytic_source(s, w, ws, wy, kind=kind)
