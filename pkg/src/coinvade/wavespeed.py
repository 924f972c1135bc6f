"""Minimal wave speed, decay rates and the constants of the upper/lower profiles.

For species ``i`` with growth rate ``r`` and kernel ``k`` the characteristic
function is ``Delta(lam, c) = exp(r) * M(lam) * exp(-lam c)`` with ``M`` the
moment generating function of ``k``.  Everything here works on
``log Delta``, which is convex in ``lam``.

Kernels are duck-typed: anything with ``log_mgf(lam)`` and ``lambda_cap()``
works (:class:`~coinvade.kernel.KernelSpec`,
:class:`~coinvade.kernel.DiscreteKernel`, :class:`GridWaveKernel`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .kernel import DiscreteKernel
from .model import ModelParams, capacity_bounds

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
GOLDEN_TOL = 1e-10
ROOT_RTOL = 1e-12
LAMBDA_START = 1e-3
ETA_MARGIN = 1e-6
# search ceiling for kernels whose MGF is finite everywhere; compactly
# supported kernels can have log Delta decreasing without bound
LAMBDA_CEIL = 1e6


class SubcriticalSpeedError(ValueError):
    pass


class WaveConstructionError(RuntimeError):
    """A step of the upper/lower construction failed where theory says it cannot."""


class GridWaveKernel:
    """Exponential response of the discretized wave operator.

    The grid operator convolves with a stencil and then evaluates at ``t - c``
    by linear interpolation.  Applied to ``exp(lam t)`` it returns
    ``exp(lam t) * M_h(lam) * E_h(lam, c)``, where ``M_h`` is the stencil MGF
    and ``E_h`` replaces ``exp(-lam c)``.  Using this in place of the
    continuous kernel makes the constructed bounds exact for the grid operator.
    """

    def __init__(self, dkernel: DiscreteKernel):
        self.dkernel = dkernel
        self.dx = dkernel.dx

    def log_mgf(self, lam: float) -> float:
        return self.dkernel.log_mgf(lam)

    def mgf(self, lam: float) -> float:
        return self.dkernel.mgf(lam)

    def lambda_cap(self) -> float:
        return math.inf

    def log_shift(self, lam: float, c: float) -> float:
        steps = c / self.dx
        k = math.floor(steps)
        theta = steps - k
        return -lam * k * self.dx + math.log((1.0 - theta) + theta * math.exp(-lam * self.dx))


def log_delta(lam: float, c: float, r: float, kernel) -> float:
    shift = kernel.log_shift(lam, c) if hasattr(kernel, "log_shift") else -lam * c
    return r + kernel.log_mgf(lam) + shift


def delta(lam: float, c: float, r: float, kernel) -> float:
    """``exp(r) * mgf(lam) * exp(-lam c)``; MGF divergence propagates."""
    return math.exp(log_delta(lam, c, r, kernel))


def golden_section(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns ``(argmin, min)``.

    ``tol`` is absolute below one and relative to the bracket above it, so
    the loop terminates at any magnitude.
    """
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol * max(1.0, abs(lo) + abs(hi)):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_PHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_PHI * (hi - lo)
            f2 = f(x2)
    x = 0.5 * (lo + hi)
    return x, f(x)


def _bracket(f, cap: float, start: float = LAMBDA_START) -> tuple[float, float, bool]:
    """Bracket the minimizer of ``f`` on ``(0, cap)`` by geometric steps.

    Returns ``(lo, hi, at_cap)``; ``at_cap`` means ``f`` kept decreasing up to
    the cap (or up to ``LAMBDA_CEIL`` when the cap is infinite).
    """
    cap = min(cap, LAMBDA_CEIL)
    x1 = min(start, 0.5 * cap)
    f1 = f(x1)
    x2 = min(2.0 * x1, cap)
    f2 = f(x2)
    if f2 > f1:
        # minimizer lies below the starting point: walk toward zero
        while True:
            x0 = 0.5 * x1
            if x0 < 1e-14:
                return 0.0, x2, False
            f0 = f(x0)
            if f0 > f1:
                return x0, x2, False
            x2, f2, x1, f1 = x1, f1, x0, f0
    while True:
        x3 = min(2.0 * x2, cap)
        if x3 <= x2:
            return x1, cap, True
        f3 = f(x3)
        if f3 > f2:
            return x1, x3, False
        x1, f1, x2, f2 = x2, f2, x3, f3


@dataclass(frozen=True)
class CriticalSpeed:
    speed: float
    lambda_hat: float
    boundary_minimum: bool = False


def critical_speed(r: float, kernel) -> CriticalSpeed:
    """Minimize ``(r + log M(lam)) / lam`` over ``lam > 0``.

    Geometric bracketing from ``lam = 1e-3`` followed by golden section to an
    interval width of ``1e-10``.  Searches stop short of the Laplace pole; a
    minimizer pressed against that cap is flagged.
    """
    if not r > 0:
        raise ValueError(f"growth exponent must be positive, got {r}")
    cap = kernel.lambda_cap()

    def quotient(lam):
        return (r + kernel.log_mgf(lam)) / lam

    lo, hi, at_cap = _bracket(quotient, cap)
    lam, val = golden_section(quotient, lo, hi)
    boundary = at_cap or (math.isfinite(cap) and cap - lam < 1e-6 * cap)
    if boundary:
        logger.warning("critical speed minimizer sits at the MGF cap lambda=%g", cap)
    return CriticalSpeed(val, lam, boundary)


def minimal_speed(params: ModelParams, kernels) -> tuple[float, float, float]:
    """``(c1*, c2*, c*)`` with ``c* = max(c1*, c2*)``."""
    c1 = critical_speed(params.r1, kernels[0]).speed
    c2 = critical_speed(params.r2, kernels[1]).speed
    return c1, c2, max(c1, c2)


def scalar_spreading_speed(b0: float, kernel) -> float:
    """Spreading speed ``inf_{lam>0} log(b0 M(lam)) / lam`` of a monotone scalar recursion."""
    if not b0 > 1:
        raise ValueError(f"linear growth factor must exceed 1, got {b0}")
    return critical_speed(math.log(b0), kernel).speed


def _min_log_delta(r: float, kernel, c: float) -> tuple[float, float]:
    f = lambda lam: log_delta(lam, c, r, kernel)  # noqa: E731
    lo, hi, _ = _bracket(f, kernel.lambda_cap())
    return golden_section(f, lo, hi)


def _bisect(f, lo: float, hi: float, rtol: float = ROOT_RTOL) -> float:
    """Root of ``f`` on ``[lo, hi]`` given a sign change; ``f(lo)`` sign is kept."""
    flo = f(lo)
    while hi - lo > rtol * max(abs(hi), abs(lo)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambda_of_c(r: float, kernel, c: float) -> float:
    """Smallest positive root of ``Delta(., c) = 1``.

    Raises :class:`SubcriticalSpeedError` when ``Delta(., c) > 1`` for every
    ``lam >= 0``.
    """
    lam_min, val = _min_log_delta(r, kernel, c)
    if val >= -1e-14:
        raise SubcriticalSpeedError(f"subcritical speed c={c}: min log Delta = {val:.3g} >= 0")
    f = lambda lam: log_delta(lam, c, r, kernel)  # noqa: E731
    root = _bisect(f, 1e-12, lam_min)
    probe = np.linspace(0.0, root, 66)[1:-1]
    if any(f(x) <= 0 for x in probe):
        raise WaveConstructionError(f"Delta <= 1 below the computed root {root}")
    return root


def upper_root(r: float, kernel, c: float) -> float:
    """Second root of ``Delta(., c) = 1``.

    Returns the kernel's ``lambda_cap`` if ``Delta`` stays below one up to
    it, and ``inf`` if it stays below one up to ``LAMBDA_CEIL`` (compactly
    supported kernels at speeds beyond their reach).
    """
    lam_min, val = _min_log_delta(r, kernel, c)
    if val >= -1e-14:
        raise SubcriticalSpeedError(f"subcritical speed c={c}")
    f = lambda lam: log_delta(lam, c, r, kernel)  # noqa: E731
    cap = kernel.lambda_cap()
    limit = min(cap, LAMBDA_CEIL)
    hi = min(2.0 * lam_min, limit)
    while f(hi) <= 0:
        if hi >= limit:
            return cap
        hi = min(2.0 * hi, limit)
    return _bisect(f, lam_min, hi)


def select_eta(lam1: float, lam2: float, c: float, params: ModelParams, kernels) -> float:
    """Midpoint of the feasible interval for the lower-solution exponent.

    Feasible ``eta`` in ``(1, 2)`` satisfy ``eta*lam_i < lam1 + lam2`` and
    ``Delta_i(eta*lam_i, c) < 1`` for both species; the latter holds up to
    ``upper_root_i / lam_i``.
    """
    mu1 = upper_root(params.r1, kernels[0], c)
    mu2 = upper_root(params.r2, kernels[1], c)
    hi = min(2.0, (lam1 + lam2) / lam1, (lam1 + lam2) / lam2, mu1 / lam1, mu2 / lam2)
    if hi - 1.0 < 2 * ETA_MARGIN:
        raise WaveConstructionError(f"empty feasible interval for eta: (1, {hi})")
    eta = 0.5 * (1.0 + hi)
    ok = (
        eta * lam1 < lam1 + lam2
        and eta * lam2 < lam1 + lam2
        and log_delta(eta * lam1, c, params.r1, kernels[0]) < 0
        and log_delta(eta * lam2, c, params.r2, kernels[1]) < 0
    )
    if not ok or hi - eta < ETA_MARGIN:
        raise WaveConstructionError(f"eta={eta} fails its constraints")
    return eta


def remainder_constant(r: float, u_max: float, v_max: float, w_max: float, n: int = 30) -> float:
    """Constant ``L`` with ``|u e^{r(1-u-v-w)} - u e^r| <= L e^r (u^2 + uv + uw)`` on a box.

    ``L = r`` works for every nonnegative ``(u, v, w)`` because
    ``1 - e^{-rs} <= rs``; the inequality is still checked on an ``n^3`` grid.
    """
    L = float(r)
    u, v, w = np.meshgrid(
        np.linspace(0, u_max, n), np.linspace(0, v_max, n), np.linspace(0, w_max, n),
        indexing="ij",
    )
    lhs = np.abs(u * np.exp(r * (1 - u - v - w)) - u * math.exp(r))
    rhs = L * math.exp(r) * (u * u + u * v + u * w)
    bad = lhs > rhs * (1 + 1e-12) + 1e-300
    if np.any(bad):
        raise WaveConstructionError(f"remainder bound L={L} violated at {int(bad.sum())} grid points")
    return L


def rho_terms(species: int, lam1: float, lam2: float, eta: float, c: float,
              params: ModelParams, kernel, L: float) -> tuple[float, float, float]:
    """``(own quadratic term, cross term, 1 - Delta(eta lam))`` for one species."""
    r = params.rate(species)
    lam = lam1 if species == 1 else lam2
    own = L * (1.0 + math.fsum(params.own(species))) * delta(2 * lam, c, r, kernel)
    cross = L * math.fsum(params.cross(species)) * delta(lam1 + lam2, c, r, kernel)
    den = 1.0 - delta(eta * lam, c, r, kernel)
    return own, cross, den


def rho_bound(lam1: float, lam2: float, eta: float, c: float, params: ModelParams,
              kernels, L: tuple[float, float] | None = None) -> float:
    """Smallest lower-solution coefficient the Gamma-invariance argument allows, plus one."""
    L = L or (params.r1, params.r2)
    best = 0.0
    for sp in (1, 2):
        own, cross, den = rho_terms(sp, lam1, lam2, eta, c, params, kernels[sp - 1], L[sp - 1])
        if den <= 0:
            raise WaveConstructionError(f"species {sp}: 1 - Delta(eta lam) = {den} <= 0")
        best = max(best, (own + cross) / den)
    return 1.0 + best


@dataclass(frozen=True)
class BoundPair:
    """Closed-form upper and lower wave profiles."""

    lam1: float
    lam2: float
    eta: float
    rho: float
    l1: float
    l2: float

    @staticmethod
    def _exp(x):
        return np.exp(np.minimum(x, 700.0))

    def phi_upper(self, t):
        return np.minimum(self._exp(self.lam1 * np.asarray(t, dtype=float)), self.l1)

    def psi_upper(self, t):
        return np.minimum(self._exp(self.lam2 * np.asarray(t, dtype=float)), self.l2)

    def _lower(self, lam, t):
        t = np.asarray(t, dtype=float)
        # written as e^{lam t}(1 - rho e^{(eta-1) lam t}) to avoid overflow
        inner = 1.0 - self.rho * self._exp((self.eta - 1.0) * lam * t)
        return np.where(t < self.crossing(lam), self._exp(lam * t) * np.maximum(inner, 0.0), 0.0)

    def phi_lower(self, t):
        return self._lower(self.lam1, t)

    def psi_lower(self, t):
        return self._lower(self.lam2, t)

    def crossing(self, lam: float) -> float:
        """Point where ``e^{lam t} = rho e^{eta lam t}``; the lower profile is positive left of it."""
        return -math.log(self.rho) / ((self.eta - 1.0) * lam)

    def upper(self, t):
        return self.phi_upper(t), self.psi_upper(t)

    def lower(self, t):
        return self.phi_lower(t), self.psi_lower(t)

    def scaled(self, rho_factor: float) -> "BoundPair":
        return BoundPair(self.lam1, self.lam2, self.eta, self.rho * rho_factor, self.l1, self.l2)


@dataclass(frozen=True)
class WaveAnalysis:
    c1_star: float
    c2_star: float
    c_star: float
    lambda_hat1: float
    lambda_hat2: float
    c: float | None = None
    lambda1: float | None = None
    lambda2: float | None = None
    gamma_window1: tuple[float, float] | None = None
    gamma_window2: tuple[float, float] | None = None
    eta: float | None = None
    L1: float | None = None
    L2: float | None = None
    rho: float | None = None
    subcritical: bool = False
    boundary_minimum: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def _gamma_window(lam: float, mu: float) -> tuple[float, float]:
    gamma = min(2.0, mu / lam)
    if mu / lam <= 2.0:
        gamma = 1.0 + (gamma - 1.0) * (1.0 - 1e-8)
    return lam, gamma * lam


def analyze(params: ModelParams, kernels, c: float | None = None) -> WaveAnalysis:
    """Critical speeds and, for a supercritical ``c``, every constructive constant."""
    cs1 = critical_speed(params.r1, kernels[0])
    cs2 = critical_speed(params.r2, kernels[1])
    base = dict(
        c1_star=cs1.speed,
        c2_star=cs2.speed,
        c_star=max(cs1.speed, cs2.speed),
        lambda_hat1=cs1.lambda_hat,
        lambda_hat2=cs2.lambda_hat,
        boundary_minimum=cs1.boundary_minimum or cs2.boundary_minimum,
    )
    if c is None:
        return WaveAnalysis(**base)
    try:
        lam1 = lambda_of_c(params.r1, kernels[0], c)
        lam2 = lambda_of_c(params.r2, kernels[1], c)
    except SubcriticalSpeedError as exc:
        return WaveAnalysis(**base, c=c, subcritical=True, note=str(exc))
    mu1 = upper_root(params.r1, kernels[0], c)
    mu2 = upper_root(params.r2, kernels[1], c)
    eta = select_eta(lam1, lam2, c, params, kernels)
    cap = capacity_bounds(params)
    L1 = remainder_constant(params.r1, cap.l1, (1 + params.sum_a) * cap.l1, params.sum_b * cap.l2)
    L2 = remainder_constant(params.r2, cap.l2, (1 + params.sum_e) * cap.l2, params.sum_f * cap.l1)
    rho = rho_bound(lam1, lam2, eta, c, params, kernels, (L1, L2))
    return WaveAnalysis(
        **base,
        c=c,
        lambda1=lam1,
        lambda2=lam2,
        gamma_window1=_gamma_window(lam1, mu1),
        gamma_window2=_gamma_window(lam2, mu2),
        eta=eta,
        L1=L1,
        L2=L2,
        rho=rho,
    )


def build_bound_pair(analysis: WaveAnalysis, capacity) -> BoundPair:
    if analysis.subcritical or analysis.lambda1 is None:
        raise SubcriticalSpeedError("bounds only exist for a supercritical speed")
    return BoundPair(
        analysis.lambda1, analysis.lambda2, analysis.eta, analysis.rho, capacity.l1, capacity.l2
    )
