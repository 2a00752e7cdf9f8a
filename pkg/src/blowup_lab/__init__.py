"""Numerical laboratory for blow-up of log-perturbed semilinear wave equations.

u_tt = Δu + |u|^{p-1} u + |u|^p / log(2 + u^2)^a, studied in similarity
variables through a perturbed Lyapunov functional.
"""

from .model import DerivedConstants, ModelParams, derive_constants, source_term
from .ode import fit_blowup, integrate_ode
from .similarity import SimilarityFrame, WState, to_similarity
from .wave import FieldState, Grid, run_in_cone, run_to_blowup

__all__ = [
    "DerivedConstants", "FieldState", "Grid", "ModelParams", "SimilarityFrame", "WState",
    "derive_constants", "fit_blowup", "integrate_ode", "run_in_cone", "run_to_blowup",
    "source_term", "to_similarity",
]
__version__ = "0.1.0"
