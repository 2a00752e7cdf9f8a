from dataclasses import dataclass

import pytest

from blowup_lab.model import ModelParams, derive_constants
from blowup_lab.pipeline import auto_frame, bump
from blowup_lab.similarity import SimilarityFrame


@dataclass
class BumpCase:
    params: ModelParams
    init: tuple
    frame: SimilarityFrame


def bump_case(p, a, amp_in_kappa, T_guess, n_per_radius=64):
    params = ModelParams(p, a)
    init = bump(amp_in_kappa * derive_constants(params).kappa)
    T0, _run = auto_frame(init, params, 0.0, T_guess, n_per_radius)
    return BumpCase(params, init, SimilarityFrame(0.0, T0))


@pytest.fixture(scope="session")
def p3_case():
    """Perturbed p=3, a=2 Gaussian bump with its self-consistent blow-up frame."""
    return bump_case(3.0, 2.0, 5.0, 0.26)
