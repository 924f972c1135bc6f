"""Contracting rectangles for the nondispersal delayed system.

The affine family ``r_i(s) = s k_i`` and ``t_i(s) = s k_i + (1 - s)(1 + eps)``
shrinks from ``[0, 1 + eps]^2`` at ``s = 0`` to the coexistence state at
``s = 1``.  The contraction condition asks that, whenever every current and
delayed density sits in the ``s``-box, the next density lands strictly
inside it.  Because the Ricker map is monotone in every argument except the
current density (where it is unimodal), the extrema over a box are attained
at known corners and can be evaluated exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import (CapacityBounds, Equilibrium, ModelParams, capacity_bounds,
                    coexistence_equilibrium, growth_map)

log = logging.getLogger(__name__)

DEFAULT_EPS = 0.01
DEFAULT_SAMPLES = 101
MIN_EPS = 1e-6
LIMIT_SAMPLES = (0.001, 0.999)


def _g(r: float, u0: float, own_lags, own_coef, cross, cross_coef) -> float:
    depress = u0 + math.fsum(a * u for a, u in zip(own_coef, own_lags))
    depress += math.fsum(b * v for b, v in zip(cross_coef, cross))
    return u0 * math.exp(r * (1.0 - depress))


def box_extrema(params: ModelParams, species: int, lows, highs, cross_lows, cross_highs
                ) -> tuple[float, float]:
    """Exact min and max of the one-step map of ``species`` over a box.

    All four sequences have ``m + 1`` entries indexed by lag: entry 0 is the
    current density and entry ``l`` the density ``l`` generations ago.  The
    map decreases in every argument except the current own density, where it
    rises up to ``1/r`` and falls beyond.  The maximum therefore takes the
    current density at ``clamp(1/r)`` and all others at their lows; the
    minimum takes all others at their highs and the smaller of the two
    current-density endpoints.
    """
    lo = np.asarray(lows, float)
    hi = np.asarray(highs, float)
    clo = np.asarray(cross_lows, float)
    chi = np.asarray(cross_highs, float)
    n = params.m + 1
    for name, arr in (("lows", lo), ("highs", hi), ("cross_lows", clo), ("cross_highs", chi)):
        if arr.shape != (n,):
            raise ValueError(f"{name} must have m+1={n} entries, got shape {arr.shape}")
    r = params.rate(species)
    own = params.own(species)
    cross = params.cross(species)

    peak = min(max(1.0 / r, lo[0]), hi[0])
    g_max = _g(r, float(peak), lo[1:], own, clo, cross)
    g_min = min(_g(r, lo[0], hi[1:], own, chi, cross), _g(r, hi[0], hi[1:], own, chi, cross))
    return float(g_min), float(g_max)


@dataclass(frozen=True)
class RectangleFamily:
    """The boxes ``[r(s), t(s)]`` around ``equilibrium`` with expansion ``eps``."""

    equilibrium: Equilibrium
    eps: float

    @property
    def k(self) -> tuple[float, float]:
        return self.equilibrium.k1, self.equilibrium.k2

    def low(self, s: float) -> tuple[float, float]:
        return s * self.equilibrium.k1, s * self.equilibrium.k2

    def high(self, s: float) -> tuple[float, float]:
        top = (1.0 - s) * (1.0 + self.eps)
        return s * self.equilibrium.k1 + top, s * self.equilibrium.k2 + top

    def enclosing_s(self, u_values, v_values) -> float:
        """Largest ``s`` whose box holds every entry of ``u_values`` and ``v_values``.

        Returns a negative number when the values are outside even the
        ``s = 0`` box.
        """
        best = 1.0
        for k, vals in zip(self.k, (u_values, v_values)):
            vals = np.asarray(vals, float)
            best = min(best, float(np.min(vals / k)),
                       float(np.min((1.0 + self.eps - vals) / (1.0 + self.eps - k))))
        return best

    def sample_history(self, s: float, m: int, rng: np.random.Generator):
        """Uniform random ``(u_hist, v_hist)`` inside the ``s``-box, oldest first."""
        (l1, l2), (h1, h2) = self.low(s), self.high(s)
        return rng.uniform(l1, h1, m + 1), rng.uniform(l2, h2, m + 1)


def build_family(equilibrium: Equilibrium, eps: float = DEFAULT_EPS,
                 capacity: CapacityBounds | None = None) -> RectangleFamily:
    """Affine rectangle family, checked against the structural conditions.

    Raises ``ValueError`` if ``eps`` is not positive, if the equilibrium does
    not lie strictly below ``1 + eps`` (so that the boxes shrink strictly),
    or if the ``s = 0`` box exceeds twice the capacity bounds.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    k1, k2 = equilibrium.k1, equilibrium.k2
    if not (0 < k1 < 1 + eps and 0 < k2 < 1 + eps):
        raise ValueError(f"equilibrium ({k1}, {k2}) must lie in (0, 1 + eps)")
    if capacity is not None and not (1 + eps <= 2 * capacity.l1 and 1 + eps <= 2 * capacity.l2):
        raise ValueError(
            f"t(0) = {1 + eps} exceeds twice the capacity bounds ({capacity.l1}, {capacity.l2})"
        )
    return RectangleFamily(equilibrium, float(eps))


def chebyshev_samples(n: int) -> np.ndarray:
    """``n`` Chebyshev points strictly inside ``(0, 1)``, ascending."""
    if n < 1:
        raise ValueError("need at least one sample")
    j = np.arange(n)
    return np.sort(0.5 * (1.0 - np.cos(np.pi * (j + 0.5) / n)))


@dataclass
class RectangleReport:
    passed: bool
    eps: float
    structural_ok: bool
    structural_notes: list[str]
    worst_s: float
    worst_margin: float
    worst_species: int
    margins: list[dict] = field(default_factory=list)
    attempts: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _structural(family: RectangleFamily, capacity: CapacityBounds | None) -> list[str]:
    # continuity and monotonicity are read off the affine forms
    notes = []
    for i, k in enumerate(family.k, start=1):
        if not k > 0:
            notes.append(f"r_{i} is not strictly increasing (k_{i} = {k})")
        if not 1.0 + family.eps - k > 0:
            notes.append(f"t_{i} is not strictly decreasing (k_{i} = {k})")
    if capacity is not None:
        for i, l in enumerate((capacity.l1, capacity.l2), start=1):
            if 1.0 + family.eps > 2 * l:
                notes.append(f"t_{i}(0) = {1 + family.eps} exceeds 2 l_{i} = {2 * l}")
    return notes


def margins_at(family: RectangleFamily, params: ModelParams, s: float) -> dict:
    """Lower and upper contraction margins of both species at one ``s``."""
    n = params.m + 1
    lows, highs = family.low(s), family.high(s)
    out = {"s": float(s)}
    for sp in (1, 2):
        o, c = sp - 1, 2 - sp
        g_min, g_max = box_extrema(params, sp, [lows[o]] * n, [highs[o]] * n,
                                   [lows[c]] * n, [highs[c]] * n)
        out[f"lower_{sp}"] = float(g_min - lows[o])
        out[f"upper_{sp}"] = float(highs[o] - g_max)
    return out


def verify_contracting(family: RectangleFamily, params: ModelParams,
                       s_samples: int = DEFAULT_SAMPLES) -> RectangleReport:
    """Check the contraction inequalities on sampled ``s`` in ``(0, 1)``.

    Samples are ``s_samples`` Chebyshev points plus ``0.001`` and ``0.999``.
    Each sample is exact thanks to :func:`box_extrema`; the report lists the
    four margins per sample and the worst one overall.
    """
    notes = _structural(family, capacity_bounds(params))
    grid = np.union1d(chebyshev_samples(s_samples), LIMIT_SAMPLES)
    rows = [margins_at(family, params, s) for s in grid]
    worst = (math.inf, math.nan, 0)
    for row in rows:
        for sp in (1, 2):
            m = min(row[f"lower_{sp}"], row[f"upper_{sp}"])
            if m < worst[0]:
                worst = (m, row["s"], sp)
    ok = bool(not notes and worst[0] > 0)
    return RectangleReport(ok, family.eps, not notes, notes, worst[1], worst[0], worst[2], rows)


def verify_with_fallback(params: ModelParams, eps: float = DEFAULT_EPS,
                         s_samples: int = DEFAULT_SAMPLES, min_eps: float = MIN_EPS
                         ) -> RectangleReport:
    """Verify the family at ``eps``, halving it on failure down to ``min_eps``.

    The returned report is the first passing one, or the last failure, with
    every attempt summarized in ``attempts``.
    """
    eq = coexistence_equilibrium(params)
    cap = capacity_bounds(params)
    attempts = []
    report = None
    while eps >= min_eps:
        family = build_family(eq, eps, cap)
        report = verify_contracting(family, params, s_samples)
        attempts.append({"eps": eps, "pass": report.passed, "worst_s": report.worst_s,
                         "worst_margin": report.worst_margin})
        log.info("rectangle eps=%.3g: %s (worst margin %.3g at s=%.4g)", eps,
                 "pass" if report.passed else "fail", report.worst_margin, report.worst_s)
        if report.passed:
            break
        eps /= 2
    if report is None:
        raise ValueError(f"eps {eps} is already below the floor {min_eps}")
    report.attempts = attempts
    return report


@dataclass
class ConvergenceRun:
    converged: bool
    steps: int
    final_error: float
    start_s: float
    enclosing: list[float]


def iterate_to_equilibrium(params: ModelParams, family: RectangleFamily, u_hist, v_hist,
                           tol: float = 1e-8, max_steps: int = 10_000) -> ConvergenceRun:
    """Iterate the nondispersal map until both densities are within ``tol`` of ``k``.

    The enclosing ``s`` of the sliding history window is recorded after every
    step so that callers can check the nesting of the boxes.
    """
    u = list(np.asarray(u_hist, float))
    v = list(np.asarray(v_hist, float))
    k1, k2 = family.k
    start = family.enclosing_s(u, v)
    enclosing = [start]
    err = max(abs(u[-1] - k1), abs(v[-1] - k2))
    for n in range(1, max_steps + 1):
        x, y = growth_map(params, u, v)
        u = u[1:] + [x]
        v = v[1:] + [y]
        enclosing.append(family.enclosing_s(u, v))
        err = max(abs(x - k1), abs(y - k2))
        if err < tol:
            return ConvergenceRun(True, n, err, start, enclosing)
    return ConvergenceRun(False, max_steps, err, start, enclosing)
