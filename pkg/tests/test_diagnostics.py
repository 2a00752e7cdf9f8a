import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab.diagnostics import (DiagnosticsConfig, blowup_criterion, choose_theta,
                                    corollary_bounds, lp1_windows, theorem1_monotonicity,
                                    theorem2_physical, theorem2_start, verdict, write_json)
from blowup_lab.energy import EnergyReport, compute_H, h_factor, retheta, theta_weight
from blowup_lab.model import ModelParams
from blowup_lab.wave import FieldState, Grid, shifted
from helpers import analytic_source, const_source

P3 = ModelParams(3.0, 2.0)
P3_OFF = ModelParams(3.0, perturbed=False)
KAPPA = math.sqrt(2.0)
S_GRID = np.round(np.arange(1.0, 8.0001, 0.25), 12)


def synthetic(params, s_values, E, D=None, theta=0.0):
    """Reports with prescribed E(s) and D(s); the remaining fields are inert."""
    out = []
    for k, s in enumerate(s_values):
        d = 0.0 if D is None else float(D[k])
        e = float(E[k])
        out.append(EnergyReport(float(s), e, 0.0, 0.0, e,
                                h_factor(params, s) * e + theta * theta_weight(params, s),
                                d, 0.0, 0.0, 1.0, 1.0, 0.0, theta))
    return out


def test_config_validation():
    for bad in (dict(S1=0.5), dict(tolerance=-1.0), dict(theta=-2.0), dict(theta="big")):
        with pytest.raises(ValueError):
            DiagnosticsConfig(**bad)
    assert DiagnosticsConfig(theta=3.0).theta == 3.0


# -- monotonicity --------------------------------------------------------------------

@pytest.mark.parametrize("theta", [0.0, 0.5, 10.0])
def test_stationary_kappa_passes(theta):
    reps = [compute_H(const_source(s, KAPPA), P3_OFF, n=16, theta=theta) for s in S_GRID]
    res = theorem1_monotonicity(reps, P3_OFF)
    assert res.passed and res.violations == [] and res.worst_excess < 0
    H = np.array([r.H for r in reps])
    assert np.all(np.diff(H) < 0)


def test_sign_corrupted_series_fails():
    reps = [compute_H(const_source(s, KAPPA), P3_OFF, n=16) for s in S_GRID]
    bad = [replace(r, H=-r.H) for r in reps]
    res = theorem1_monotonicity(bad, P3_OFF)
    assert not res.passed
    s1, s2, excess = res.violations[0]
    assert (s1, s2) == (S_GRID[0], S_GRID[1]) and excess > res.tolerance


def test_dissipation_enters_the_check():
    E = np.ones(S_GRID.size)
    ok = synthetic(P3, S_GRID, E, D=np.zeros(S_GRID.size))
    assert theorem1_monotonicity(ok, P3).passed
    # the decrease of h(s) is too small to pay for a large dissipation
    heavy = synthetic(P3, S_GRID, E, D=np.full(S_GRID.size, 50.0))
    assert not theorem1_monotonicity(heavy, P3, DiagnosticsConfig(tolerance=0.0)).passed


def test_monotonicity_preconditions():
    reps = [compute_H(const_source(s, KAPPA), P3_OFF, n=16) for s in (2.0, 3.0)]
    with pytest.raises(ValueError):
        theorem1_monotonicity(reps[::-1], P3_OFF)
    with pytest.raises(ValueError):
        theorem1_monotonicity(reps, P3_OFF, DiagnosticsConfig(S1=2.5))
    assert theorem1_monotonicity(reps[:1], P3_OFF).passed


def test_default_tolerance_scale():
    reps = synthetic(P3, S_GRID, np.ones(S_GRID.size))
    res = theorem1_monotonicity(reps, P3)
    assert res.tolerance == pytest.approx(min(1e-3, 10 * 0.25 ** 2) * max(abs(r.H) for r in reps))


@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=25), st.floats(0.0, 3.0),
       st.data())
@settings(max_examples=60, deadline=None)
def test_subsampling_preserves_a_pass(drops, slope, data):
    # H decreasing by at least α ∫D, D linear so its trapezoid sums are additive
    n = len(drops)
    s = 1.0 + 0.5 * np.arange(n)
    D = slope * (s - 1.0)
    intD = np.concatenate([[0.0], np.cumsum(0.5 * (D[1:] + D[:-1]) * 0.5)])
    H = 10.0 - np.cumsum(drops) - intD  # α = 1
    reps = [EnergyReport(float(si), 0, 0, 0, 0, float(h), float(d), 0, 0, 0, 0, 0, 0)
            for si, h, d in zip(s, H, D)]
    cfg = DiagnosticsConfig(tolerance=1e-12)
    assert theorem1_monotonicity(reps, P3, cfg).passed
    keep = sorted(data.draw(st.sets(st.integers(0, n - 1), min_size=2)))
    assert theorem1_monotonicity([reps[i] for i in keep], P3, cfg).passed
    shifted_reps = [replace(r, s=r.s + 3.0) for r in reps]
    assert theorem1_monotonicity(shifted_reps, P3, cfg).passed


# -- θ selection -----------------------------------------------------------------

def test_choose_theta_trivial_cases():
    one = [compute_H(const_source(2.0, KAPPA), P3, n=16)]
    assert choose_theta(one, P3) == 0.0
    reps = [compute_H(const_source(s, KAPPA), P3_OFF, n=16) for s in S_GRID]
    assert choose_theta(reps, P3_OFF) == 0.0


def test_choose_theta_is_minimal():
    # E oscillates on the θ-weight scale, so a positive θ is needed
    E = -np.exp(-2 * S_GRID) * np.sin(3 * S_GRID)
    reps = synthetic(P3, S_GRID, E)
    cfg = DiagnosticsConfig(tolerance=0.0)
    assert not theorem1_monotonicity(reps, P3, cfg).passed
    theta = choose_theta(reps, P3, cfg)
    assert theta > 0
    passes = lambda th: theorem1_monotonicity([retheta(r, P3, th) for r in reps],  # noqa: E731
                                               P3, cfg).passed
    assert passes(theta) and not passes(theta - 2e-3)


def test_choose_theta_cap_reports_irreducible_violation():
    reps = synthetic(P3, S_GRID, np.exp(S_GRID))  # E outgrows h(s) decay; no θ can help
    with pytest.raises(RuntimeError, match="no theta"):
        choose_theta(reps, P3, DiagnosticsConfig(tolerance=0.0), cap=64.0)


# -- blow-up criterion ----------------------------------------------------------

def bump_state(lam, s=2.0):
    return analytic_source(s, lambda y: lam * (1 - y ** 2) ** 2, np.zeros_like,
                           lambda y: -4 * lam * y * (1 - y ** 2))


def test_blowup_criterion_examples():
    assert not blowup_criterion(compute_H(const_source(2.0, 0.0), P3, n=16, theta=1.0))
    lam = 1.0
    while not blowup_criterion(compute_H(bump_state(lam), P3, n=32)):
        lam *= 2
        assert lam < 1e3
    assert lam > 1.0  # small data has positive energy
    with pytest.raises(ValueError):
        blowup_criterion(compute_H(const_source(1.5, 0.0), P3, n=16), S1=2.0)


def test_criterion_monotone_along_decreasing_series():
    H = 1.0 - 0.3 * np.arange(10)
    reps = [EnergyReport(2.0 + k, 0, 0, 0, 0, h, 0, 0, 0, 0, 0, 0, 0) for k, h in enumerate(H)]
    flags = [blowup_criterion(r) for r in reps]
    first = flags.index(True)
    assert all(flags[first:]) and not any(flags[:first])


# -- bounds ----------------------------------------------------------------------

def test_bounds_stationary_kappa():
    reps = [compute_H(const_source(s, KAPPA), P3_OFF, n=16) for s in S_GRID]
    b = corollary_bounds(reps)
    assert b.E_min == b.E_max == pytest.approx(4 / 3, abs=1e-14)
    assert b.cumulative_dissipation == 0.0
    assert b.eps0_emp == b.K_emp and b.band_ratio == 1.0
    assert b.window == (1.0, 8.0)


def test_bounds_window_and_errors():
    reps = synthetic(P3, S_GRID, S_GRID, D=S_GRID)
    b = corollary_bounds(reps, 2.0, 4.0)
    assert b.window == (2.0, 4.0) and b.E_min == 2.0 and b.E_max == 4.0
    assert b.cumulative_dissipation == pytest.approx(6.0)  # ∫_2^4 s ds
    assert b.eps0_emp <= b.K_emp
    with pytest.raises(ValueError):
        corollary_bounds(reps, 20.0, 30.0)
    single = corollary_bounds(reps[:1])
    assert single.cumulative_dissipation == 0.0


def test_lp1_windows_kappa():
    reps = [compute_H(const_source(s, KAPPA), P3_OFF, n=16) for s in S_GRID]
    win = lp1_windows(reps, 2.0, 8.0)
    assert len(win) == 6 and np.allclose(win, 16 / 3, rtol=1e-13)


# -- physical two-sided bound ------------------------------------------------------

def exact_series(T=1.0, n=64, x_shift=0.0, t_end=0.99):
    g = Grid.line(-4 + x_shift, 4 + x_shift, 4096)
    out = []
    for t in np.linspace(0.0, t_end, n):
        u = np.full(len(g), math.sqrt(2) / (T - t))
        out.append(FieldState(float(t), u, u / (T - t), g))
    return out


def test_theorem2_start():
    T = 0.26
    assert theorem2_start(T) == pytest.approx(0.75 * T)
    assert theorem2_start(4.0) == pytest.approx(4.0 - math.exp(-1))
    assert theorem2_start(4.0, S1=3.0) == pytest.approx(4.0 - math.exp(-3))
    assert theorem2_start(1.0, S1=1.5) == pytest.approx(1.0 - math.exp(-1.5))


def test_exact_solution_Q_is_four():
    q = theorem2_physical(exact_series(), 1.0, 0.3, P3_OFF)
    assert q.t.size > 10 and q.t[0] >= q.t0 and q.t.max() < 1.0
    assert np.allclose(q.Q, 4.0, rtol=1e-10)
    assert q.envelope_ratio == pytest.approx(1.0, abs=1e-10)


def test_resolution_stop():
    q = theorem2_physical(exact_series(n=400, t_end=0.999), 1.0, 0.0, P3_OFF, min_cells=3)
    assert q.stopped == "resolution"
    assert (1.0 - q.t[-1]) >= 3 * 8 / 4095


def test_zero_field_Q_vanishes():
    g = Grid.line(-4, 4, 512)
    snaps = [FieldState(t, np.zeros(512), np.zeros(512), g) for t in np.linspace(0.8, 0.95, 6)]
    q = theorem2_physical(snaps, 1.0, 0.0, P3_OFF)
    assert q.Q.size == 6 and np.all(q.Q == 0) and q.envelope_ratio == math.inf


def test_Q_translation_invariant():
    rng = np.random.default_rng(9)
    g = Grid.line(-4, 4, 1024)
    snaps = [FieldState(t, np.cos(3 * g.x) + rng.normal(size=1024) * 1e-3, np.sin(g.x), g)
             for t in np.linspace(0.76, 0.95, 5)]
    a = theorem2_physical(snaps, 1.0, 0.25, P3_OFF)
    b = theorem2_physical([shifted(sn, 0.5) for sn in snaps], 1.0, 0.75, P3_OFF)
    assert np.allclose(a.Q, b.Q, rtol=1e-12)


def test_theorem2_errors():
    with pytest.raises(ValueError):
        theorem2_physical(exact_series(n=4), math.inf, 0.0, P3_OFF)
    with pytest.raises(ValueError):
        theorem2_physical(exact_series(), 1.0, 3.9, P3_OFF)  # ball leaves the domain


# -- verdict files --------------------------------------------------------------

def test_verdict_json(tmp_path):
    v = verdict("x", (2.0, 8.0), True, np.float64(-0.5), theta=0.0, K=math.inf, n=np.int64(3))
    assert v == {"check": "x", "window": [2.0, 8.0], "pass": True, "worst_excess": -0.5,
                 "empirical_constants": {"theta": 0.0, "K": None, "n": 3}}
    back = json.loads(write_json(v, tmp_path / "v.json").read_text())
    assert back == v
