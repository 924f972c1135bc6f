from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coinvade.model import Equilibrium, ModelParams, capacity_bounds, coexistence_equilibrium
from coinvade.rectangle import (box_extrema, build_family, chebyshev_samples,
                                iterate_to_equilibrium, margins_at, verify_contracting,
                                verify_with_fallback)

SYMMETRIC = ModelParams(1.0, 1.0, 1, (0.1,), (0.1,), (0.1, 0.1), (0.1, 0.1))
VIOLATING = ModelParams(1.0, 1.0, 1, (0.4,), (0.4,), (0.4, 0.4), (0.4, 0.4))


def _mc_values(params, species, lows, highs, clows, chighs, n, rng):
    """Vectorized map values at uniform random points of the box (lag order)."""
    lows, highs = np.asarray(lows), np.asarray(highs)
    clows, chighs = np.asarray(clows), np.asarray(chighs)
    u = rng.uniform(lows, highs, (n, lows.size))
    v = rng.uniform(clows, chighs, (n, clows.size))
    r = params.rate(species)
    own = np.asarray(params.own(species))
    cross = np.asarray(params.cross(species))
    depress = u[:, 0] + u[:, 1:] @ own + v @ cross
    return u[:, 0] * np.exp(r * (1 - depress))


def test_box_extrema_hand_example():
    lo, hi = box_extrema(ModelParams(1.0, 1.0), 1, [0.2], [0.8], [0.0], [0.0])
    assert lo == pytest.approx(0.2 * math.exp(0.8), rel=1e-15)
    assert hi == pytest.approx(0.8 * math.exp(0.2), rel=1e-15)
    assert (lo, hi) == (pytest.approx(0.445108, abs=1e-6), pytest.approx(0.977122, abs=1e-6))


def test_box_extrema_point_box_is_the_fixed_point(preset):
    eq = coexistence_equilibrium(preset)
    lo, hi = box_extrema(preset, 1, [eq.k1] * 2, [eq.k1] * 2, [eq.k2] * 2, [eq.k2] * 2)
    assert lo == pytest.approx(eq.k1, rel=1e-14) and hi == pytest.approx(eq.k1, rel=1e-14)


def test_box_extrema_interior_peak():
    # r = 2 puts the peak 1/r = 0.5 inside [0.2, 0.9]
    p = ModelParams(2.0, 1.0)
    lo, hi = box_extrema(p, 1, [0.2], [0.9], [0.0], [0.0])
    assert hi == pytest.approx(0.5 * math.exp(1.0))
    assert lo == pytest.approx(min(0.2 * math.exp(1.6), 0.9 * math.exp(0.2)))


def test_box_extrema_shape_check(preset):
    with pytest.raises(ValueError, match="m\\+1"):
        box_extrema(preset, 1, [0.1], [0.2, 0.3], [0, 0], [0, 0])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_box_extrema_bracket_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    p = ModelParams(rng.uniform(0.3, 2.5), rng.uniform(0.3, 2.5), 2,
                    rng.uniform(0, 0.4, 2), rng.uniform(0, 0.4, 2),
                    rng.uniform(0, 0.4, 3), rng.uniform(0, 0.4, 3))
    for species in (1, 2):
        a = rng.uniform(0, 1.5, 3)
        b = rng.uniform(0, 1.5, 3)
        lows, highs = np.minimum(a, a + rng.uniform(0, 1, 3)), a + rng.uniform(0, 1, 3)
        clows, chighs = b, b + rng.uniform(0, 1, 3)
        lo, hi = box_extrema(p, species, lows, highs, clows, chighs)
        vals = _mc_values(p, species, lows, highs, clows, chighs, 100_000, rng)
        assert vals.min() >= lo - 1e-12 and vals.max() <= hi + 1e-12


def test_family_endpoints(preset_sym):
    eq = coexistence_equilibrium(preset_sym)
    fam = build_family(eq, 0.01, capacity_bounds(preset_sym))
    assert fam.low(1.0) == fam.high(1.0) == pytest.approx((eq.k1, eq.k2))
    assert fam.low(0.0) == (0.0, 0.0) and fam.high(0.0) == (1.01, 1.01)
    for s in np.linspace(0, 0.99, 50):
        assert all(h > l for h, l in zip(fam.high(s), fam.low(s)))


def test_family_validation():
    with pytest.raises(ValueError, match="positive"):
        build_family(Equilibrium(0.5, 0.5), 0.0)
    with pytest.raises(ValueError, match="twice"):
        build_family(Equilibrium(0.5, 0.5), 1.5, capacity_bounds(ModelParams(1, 1)))
    with pytest.raises(ValueError, match="lie in"):
        build_family(Equilibrium(1.2, 0.5), 0.01)


def test_chebyshev_samples_are_interior_and_sorted():
    s = chebyshev_samples(101)
    assert s.size == 101 and 0 < s[0] < s[-1] < 1 and np.all(np.diff(s) > 0)
    assert s[50] == pytest.approx(0.5)


def test_symmetric_preset_is_contracting(preset_sym):
    fam = build_family(coexistence_equilibrium(preset_sym), 0.01)
    rep = verify_contracting(fam, preset_sym, 101)
    assert rep.passed and rep.structural_ok and rep.worst_margin > 0
    assert len(rep.margins) == 103
    assert rep.to_dict()["pass"] is True


def test_margins_vanish_at_the_equilibrium(preset_sym):
    fam = build_family(coexistence_equilibrium(preset_sym), 0.01)
    near = margins_at(fam, preset_sym, 1 - 1e-6)
    far = margins_at(fam, preset_sym, 0.5)
    for key in ("lower_1", "upper_1", "lower_2", "upper_2"):
        assert 0 < near[key] < 1e-5 < far[key]


def test_violating_probe_fails_after_fallback(caplog):
    with caplog.at_level(logging.INFO, logger="coinvade.rectangle"):
        rep = verify_with_fallback(VIOLATING, 0.01)
    assert not rep.passed and rep.worst_margin < 0
    # eps halves from 0.01 while it stays at or above 1e-6
    assert len(rep.attempts) == 14 and rep.attempts[-1]["eps"] == pytest.approx(0.01 / 2**13)
    assert sum("rectangle eps=" in m for m in caplog.messages) == 14
    assert 0 < rep.worst_s < 1


def test_fallback_stops_at_first_pass(preset_sym):
    rep = verify_with_fallback(preset_sym, 0.01)
    assert rep.passed and len(rep.attempts) == 1


def test_enclosing_s(preset_sym):
    fam = build_family(coexistence_equilibrium(preset_sym), 0.01)
    lo, hi = fam.low(0.3), fam.high(0.3)
    assert fam.enclosing_s([lo[0], hi[0]], [lo[1]]) == pytest.approx(0.3)
    assert fam.enclosing_s([fam.k[0]], [fam.k[1]]) == pytest.approx(1.0)
    assert fam.enclosing_s([1.5], [0.5]) < 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), s0=st.floats(0.0, 0.9))
def test_iterates_stay_nested(seed, s0):
    fam = build_family(coexistence_equilibrium(SYMMETRIC), 0.01)
    u, v = fam.sample_history(s0, 1, np.random.default_rng(seed))
    run = iterate_to_equilibrium(SYMMETRIC, fam, u, v, tol=1e-10, max_steps=2000)
    assert run.converged
    enc = np.asarray(run.enclosing)
    assert enc[0] >= s0 - 1e-12
    assert np.all(np.diff(enc) >= -1e-12)
    # m + 1 = 2 steps replace the whole window with strictly interior values
    assert enc[2] > enc[0] or enc[0] == pytest.approx(1.0)
