"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line and appends it
to the terminal summary before asserting.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import integrate

from coinvade.dynamics import (Grid, InitialCondition, StateHistory, auxiliary_map_theorem4,
                               estimate_speed, simulate, simulate_scalar, step)
from coinvade.kernel import KernelSpec, discretize
from coinvade.model import ModelParams, capacity_bounds, coexistence_equilibrium
from coinvade.profile import bounds_for_speed, check_limits, solve_profile, uniform_grid, verify_bounds
from coinvade.rectangle import build_family, iterate_to_equilibrium, verify_with_fallback
from coinvade.wavespeed import analyze, critical_speed, delta, lambda_of_c, scalar_spreading_speed

from .conftest import ACCEPTANCE_LINES

SQRT2 = math.sqrt(2.0)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_gaussian_speed_closed_form():
    start = time.perf_counter()
    worst = 0.0
    for r in (0.5, 1.0):
        for sigma in (0.5, 1.0, 2.0):
            c = critical_speed(r, KernelSpec.gaussian(sigma)).speed
            worst = max(worst, abs(c / (sigma * math.sqrt(2 * r)) - 1.0))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-6 and elapsed < 1.0, f"worst rel err {worst:.2e}, {elapsed:.3f} s")


def test_criterion_02_root_oracle():
    g = KernelSpec.gaussian(1.0)
    lam = lambda_of_c(1.0, g, 2.0)
    err = abs(lam - (2.0 - SQRT2))
    # independent quadrature of e^r * int e^{lam y} k(y) dy * e^{-lam c}
    mgf, _ = integrate.quad(lambda y: math.exp(lam * y - 0.5 * y * y) / math.sqrt(2 * math.pi),
                            -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)
    d = math.e * mgf * math.exp(-2.0 * lam)
    report(2, err <= 1e-9 and abs(d - 1.0) <= 1e-10,
           f"lambda err {err:.2e}, |Delta-1| {abs(d - 1):.2e}, own Delta {delta(lam, 2.0, 1.0, g):.12f}")


def test_criterion_03_spreading_speed(preset, gauss_pair):
    start = time.perf_counter()
    grid = Grid.from_spacing(-200.0, 200.0, 0.1)
    ic = InitialCondition(center=-190.0, half_width=2.0, X=0.5, Y=0.5)
    result = simulate(grid, preset, gauss_pair, ic, 150)
    elapsed = time.perf_counter() - start
    ratios = [estimate_speed(result.trace, 0.5, sp)[0] / SQRT2 for sp in ("X", "Y")]
    ok = all(abs(q - 1.0) <= 0.05 for q in ratios) and elapsed < 60.0
    report(3, ok, f"slope/c* = {ratios[0]:.4f}, {ratios[1]:.4f}; {elapsed:.1f} s")


@pytest.mark.parametrize("variant", ["preset", "symmetric"])
def test_criterion_04_profile_fixed_point(variant, preset, preset_sym, gauss_pair):
    params = preset if variant == "preset" else preset_sym
    eq = coexistence_equilibrium(params)
    if variant == "symmetric":
        assert eq.k1 == pytest.approx(1 / 1.3, rel=1e-12) and eq.k2 == pytest.approx(1 / 1.3, rel=1e-12)
    c = 1.2 * analyze(params, gauss_pair).c_star
    profile, rep, _ = solve_profile(c, params, gauss_pair)
    limits = check_limits(profile, params, 1e-4, 0.01 * min(eq.k1, eq.k2))
    gaps = limits["right_gaps"]
    ok = (rep.converged and rep.iterations <= 10_000 and rep.final_update < 1e-10
          and rep.residual <= 1e-6 and limits["left_tail_max"] < 1e-4
          and max(gaps) < 0.01 * min(eq.k1, eq.k2))
    report(4, ok, f"[{variant}] {rep.iterations} iters, update {rep.final_update:.1e}, "
                  f"residual {rep.residual:.1e}, left {limits['left_tail_max']:.1e}, "
                  f"right gaps {gaps[0]:.1e}/{gaps[1]:.1e} vs k=({eq.k1:.4f}, {eq.k2:.4f})")


def test_criterion_05_bound_inequalities(preset, gauss_pair):
    c = 1.2 * SQRT2
    t = uniform_grid(-60.0, 20.0, 0.05)
    bounds = bounds_for_speed(preset, gauss_pair, c)
    full = verify_bounds(bounds, preset, gauss_pair, c, t)
    probe = verify_bounds(bounds.scaled(0.5), preset, gauss_pair, c, t)
    n_full = sum(v["violations"] for v in full["checks"].values())
    n_probe = sum(v["violations"] for v in probe["checks"].values())
    report(5, full["pass"] and not probe["pass"],
           f"rho={bounds.rho:.5f}: {n_full} violations; rho/2 probe: {n_probe} violations")


def test_criterion_06_contracting_rectangle(preset_sym):
    good = verify_with_fallback(preset_sym, 0.01, 101)
    positive = all(min(row[k] for k in ("lower_1", "upper_1", "lower_2", "upper_2")) > 0
                   for row in good.margins)
    bad_params = ModelParams(1.0, 1.0, 1, (0.4,), (0.4,), (0.4, 0.4), (0.4, 0.4))
    bad = verify_with_fallback(bad_params, 0.01, 101)
    ok = good.passed and good.eps == 0.01 and positive and not bad.passed
    report(6, ok, f"eps=0.01 worst margin {good.worst_margin:.2e}; violating probe worst "
                  f"{bad.worst_margin:.3g} at s={bad.worst_s:.3f}")


def test_criterion_07_random_starts_converge(preset_sym):
    eq = coexistence_equilibrium(preset_sym)
    family = build_family(eq, 0.01, capacity_bounds(preset_sym))
    rng = np.random.default_rng(20260101)
    runs = [iterate_to_equilibrium(preset_sym, family, *family.sample_history(0.2, preset_sym.m, rng),
                                   tol=1e-8, max_steps=10_000) for _ in range(100)]
    ok = all(r.converged for r in runs)
    report(7, ok, f"{sum(r.converged for r in runs)}/100 converged, max {max(r.steps for r in runs)} steps")


@pytest.mark.parametrize("r1", [1.0, 2.0])
def test_criterion_08_invariant_region(r1):
    params = ModelParams(r1, 1.0, 1, (0.1,), (0.1,), (0.1, 0.05), (0.1, 0.05))
    cap = capacity_bounds(params)
    dx = 0.1
    dks = [discretize(KernelSpec.gaussian(1.0), dx), discretize(KernelSpec.laplace(1.0), dx)]
    x = Grid.from_spacing(-20.0, 20.0, dx).x
    rng = np.random.default_rng(int(r1 * 1000))
    slots = [(rng.uniform(0, cap.l1, x.size), rng.uniform(0, cap.l2, x.size))
             for _ in range(params.m + 1)]
    history = StateHistory(slots)
    violations, low, high = 0, math.inf, 0.0
    for n in range(1, 1001):
        X, Y = step(history, params, dks, "extend", n)
        history.push(X, Y)
        low = min(low, X.min(), Y.min())
        high = max(high, X.max() / cap.l1, Y.max() / cap.l2)
        violations += int(np.sum(X < 0) + np.sum(Y < 0) + np.sum(X > cap.l1 * (1 + 1e-12))
                          + np.sum(Y > cap.l2 * (1 + 1e-12)))
    report(8, violations == 0, f"[r1={r1:g}, l1={cap.l1:.5f}] {violations} violations, "
                               f"min {low:.3g}, max/l {high:.12f}")


def test_criterion_09_auxiliary_spreading():
    params = ModelParams(1.0, 1.0, 0, (), (), (0.3,), (0.3,))
    bmap = auxiliary_map_theorem4(params, 1)
    assert bmap.shift == pytest.approx(0.3, abs=1e-15)
    g = KernelSpec.gaussian(1.0)
    c0 = scalar_spreading_speed(bmap.b0, g)
    lam = np.linspace(1e-3, 10.0, 1_000_001)
    oracle = float(np.min((math.log(bmap.b0) + 0.5 * lam ** 2) / lam))
    dx = 0.1
    x = Grid.from_spacing(-250.0, 250.0, dx).x
    u = simulate_scalar(np.where(np.abs(x) <= 2.0, 0.5, 0.0), bmap, discretize(g, dx), 150,
                        boundary="zero")
    lowest = float(u[np.abs(x) <= 0.8 * c0 * 150].min())
    ok = abs(c0 - oracle) <= 1e-6 and abs(c0 - math.sqrt(1.4)) <= 1e-6 and lowest >= 0.9 * bmap.fixed_point
    report(9, ok, f"c0={c0:.8f} scan={oracle:.8f}; min {lowest:.5f} vs 0.9 u+ = "
                  f"{0.9 * bmap.fixed_point:.5f}")


def test_criterion_10_subcritical_probe(preset, gauss_pair):
    c = 0.8 * SQRT2
    profile, rep, _ = solve_profile(c, preset, gauss_pair, max_iter=2000)
    limits = check_limits(profile, preset, 1e-4)
    ok = rep.subcritical and not rep.valid and not limits["pass"] and not limits["left_pass"]
    report(10, ok, f"subcritical={rep.subcritical}, left tail max {limits['left_tail_max']:.3g}")
