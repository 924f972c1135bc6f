"""Time stepping of the spatial delayed competition system and front tracking.

One generation applies the pointwise Ricker growth (with the delayed
competition terms) and then disperses each species with its kernel.  The
auxiliary monotone scalar maps used as comparison recursions are also here,
together with a scalar stepper for them.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .kernel import DiscreteKernel, convolve, discretize
from .model import (EquilibriumError, ModelParams, capacity_bounds, coexistence_equilibrium,
                    growth_exponents)

logger = logging.getLogger(__name__)


class BlowUpError(FloatingPointError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"numerical blow-up at step {step}: {detail}")
        self.step = step


class DomainGuardError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 64:
            raise ValueError(f"grid needs at least 64 points, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, dx: float) -> "Grid":
        n = int(round((x_max - x_min) / dx)) + 1
        grid = cls(x_min, x_max, n)
        if not math.isclose(grid.dx, dx, rel_tol=1e-9):
            raise ValueError(f"dx={dx} does not divide [{x_min}, {x_max}]")
        return grid

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)


class StateHistory:
    """Ring buffer of the last ``m + 1`` field pairs; index 0 is the oldest."""

    def __init__(self, slots):
        self._slots = deque((np.asarray(X, float), np.asarray(Y, float)) for X, Y in slots)
        self.depth = len(self._slots)

    @classmethod
    def constant(cls, X0, Y0, m: int) -> "StateHistory":
        X0 = np.asarray(X0, float)
        Y0 = np.asarray(Y0, float)
        return cls([(X0.copy(), Y0.copy()) for _ in range(m + 1)])

    def push(self, X, Y) -> None:
        self._slots.popleft()
        self._slots.append((X, Y))

    @property
    def newest(self) -> tuple[np.ndarray, np.ndarray]:
        return self._slots[-1]

    def __getitem__(self, i):
        return self._slots[i]

    def __len__(self):
        return len(self._slots)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.stack([s[0] for s in self._slots]), np.stack([s[1] for s in self._slots]))


def integrands(params: ModelParams, X_hist, Y_hist) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise growth ``u * exp(exponent)`` for stacked histories (oldest first)."""
    ex1, ex2 = growth_exponents(params, X_hist, Y_hist)
    return X_hist[-1] * np.exp(ex1), Y_hist[-1] * np.exp(ex2)


def step(history: StateHistory, params: ModelParams, dkernels, boundary: str = "extend",
         step_index: int = 0, method: str = "direct") -> tuple[np.ndarray, np.ndarray]:
    """Advance one generation.

    ``boundary="extend"`` continues each pre-dispersal integrand by its own
    edge values; ``"zero"`` pads with zeros.  Direct summation is the default
    because it keeps exact zeros ahead of a front, where FFT round-off would
    otherwise be amplified by the growth factor every generation.
    """
    if len(history) != params.m + 1:
        raise ValueError(f"history holds {len(history)} slots, need m+1={params.m + 1}")
    Xh, Yh = history.stacked()
    F1, F2 = integrands(params, Xh, Yh)
    out = []
    for F, dk in zip((F1, F2), dkernels):
        if boundary == "extend":
            lv, rv = F[0], F[-1]
        elif boundary == "zero":
            lv = rv = 0.0
        else:
            raise ValueError(f"unknown boundary policy {boundary!r}")
        out.append(convolve(F, dk, lv, rv, method))
    X, Y = out
    for name, arr in (("X", X), ("Y", Y)):
        if not np.all(np.isfinite(arr)):
            raise BlowUpError(step_index, f"non-finite values in {name}")
        if arr.min() < 0:
            raise BlowUpError(step_index, f"negative value {arr.min():.3g} in {name}")
    return X, Y


def front_position(x, field, threshold: float) -> float:
    """Rightmost downward crossing of ``threshold``, linearly interpolated.

    Returns ``nan`` when the field never reaches the threshold.
    """
    f = np.asarray(field)
    above = np.flatnonzero(f >= threshold)
    if above.size == 0:
        return math.nan
    i = above[-1]
    if i == f.size - 1:
        return float(x[-1])
    f0, f1 = f[i], f[i + 1]
    return float(x[i] + (f0 - threshold) / (f0 - f1) * (x[i + 1] - x[i]))


@dataclass
class FrontTrace:
    threshold: tuple[float, float]
    n: list[int] = field(default_factory=list)
    front_x_X: list[float] = field(default_factory=list)
    front_x_Y: list[float] = field(default_factory=list)

    def record(self, n: int, fx: float, fy: float) -> None:
        self.n.append(n)
        self.front_x_X.append(fx)
        self.front_x_Y.append(fy)

    def to_csv(self, path) -> None:
        fmt = lambda v: "" if math.isnan(v) else repr(v)  # noqa: E731
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "front_x_X", "front_x_Y"])
            for n, a, b in zip(self.n, self.front_x_X, self.front_x_Y):
                w.writerow([n, fmt(a), fmt(b)])


def estimate_speed(trace: FrontTrace, window_fraction: float = 0.5,
                   species: str = "X") -> tuple[float, float]:
    """Least-squares slope of front position against step over the trailing window.

    Returns ``(slope, stderr)``.  Unreached (``nan``) positions are skipped.
    """
    n = np.asarray(trace.n, float)
    pos = np.asarray(trace.front_x_X if species == "X" else trace.front_x_Y, float)
    if n.size == 0:
        raise ValueError("empty front trace")
    start = n.max() - window_fraction * (n.max() - n.min())
    keep = (n >= start) & np.isfinite(pos)
    if keep.sum() < 10:
        raise ValueError(f"only {int(keep.sum())} usable front positions; need at least 10")
    fit = stats.linregress(n[keep], pos[keep])
    return float(fit.slope), float(fit.stderr)


@dataclass(frozen=True)
class InitialCondition:
    """Box-shaped initial densities ``X0``/``Y0`` on ``|x - center| <= half_width``."""

    center: float = 0.0
    half_width: float = 1.0
    X: float = 0.1
    Y: float = 0.1

    def fields(self, x) -> tuple[np.ndarray, np.ndarray]:
        inside = np.abs(np.asarray(x) - self.center) <= self.half_width
        return np.where(inside, self.X, 0.0), np.where(inside, self.Y, 0.0)


@dataclass
class SimulationResult:
    history: StateHistory
    trace: FrontTrace
    snapshots: list[tuple[int, np.ndarray, np.ndarray]]
    grid: Grid


def default_thresholds(params: ModelParams) -> tuple[float, float]:
    """Half of the coexistence state, else half of the auxiliary fixed points."""
    try:
        eq = coexistence_equilibrium(params)
        return 0.5 * eq.k1, 0.5 * eq.k2
    except EquilibriumError:
        return (
            0.5 * auxiliary_map_theorem4(params, 1).fixed_point,
            0.5 * auxiliary_map_theorem4(params, 2).fixed_point,
        )


def simulate(grid: Grid, params: ModelParams, kernels, initial, steps: int,
             boundary: str = "extend", threshold: tuple[float, float] | None = None,
             snapshot_every: int | None = None, guard_radii: float | None = 10.0,
             mass_tol: float = 1e-10) -> SimulationResult:
    """Run ``steps`` generations from a constant prehistory.

    ``initial`` is an :class:`InitialCondition` or a pair of arrays on the
    grid; every history slot starts from it.  Front positions are recorded
    after every step (and for the initial state).  With ``guard_radii`` set,
    the run aborts with :class:`DomainGuardError` once a front comes within
    that many kernel radii of the right boundary.
    """
    params.validate()
    dkernels = [k if isinstance(k, DiscreteKernel) else discretize(k, grid.dx, mass_tol)
                for k in kernels]
    for dk in dkernels:
        if not math.isclose(dk.dx, grid.dx, rel_tol=1e-9):
            raise ValueError(f"kernel spacing {dk.dx} does not match grid spacing {grid.dx}")
    x = grid.x
    if isinstance(initial, InitialCondition):
        X0, Y0 = initial.fields(x)
    else:
        X0, Y0 = (np.asarray(a, float) for a in initial)
    if X0.shape != x.shape or Y0.shape != x.shape:
        raise ValueError("initial fields do not match the grid")
    if np.any(X0 < 0) or np.any(Y0 < 0):
        raise ValueError("initial densities must be nonnegative")

    thr = threshold or default_thresholds(params)
    history = StateHistory.constant(X0, Y0, params.m)
    trace = FrontTrace(tuple(thr))
    trace.record(0, front_position(x, X0, thr[0]), front_position(x, Y0, thr[1]))
    every = snapshot_every or max(1, math.ceil(steps / 50))
    snapshots = [(0, X0.copy(), Y0.copy())]
    guard_x = None
    if guard_radii is not None:
        guard_x = grid.x_max - guard_radii * max(dk.radius for dk in dkernels) * grid.dx

    for n in range(1, steps + 1):
        X, Y = step(history, params, dkernels, boundary, n)
        history.push(X, Y)
        fx, fy = front_position(x, X, thr[0]), front_position(x, Y, thr[1])
        trace.record(n, fx, fy)
        if guard_x is not None and max(np.nan_to_num(fx, nan=-np.inf),
                                       np.nan_to_num(fy, nan=-np.inf)) > guard_x:
            raise DomainGuardError(
                f"front reached x={max(fx, fy):.4g} at step {n}, within {guard_radii} kernel "
                f"radii of the right boundary {grid.x_max}; enlarge the domain"
            )
        if n % every == 0 or n == steps:
            snapshots.append((n, X.copy(), Y.copy()))
    return SimulationResult(history, trace, snapshots, grid)


def write_snapshots(path, grid: Grid, snapshots) -> None:
    x = grid.x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "x", "X", "Y"])
        for n, X, Y in snapshots:
            for row in zip(x, X, Y):
                w.writerow([n, *map(repr, map(float, row))])


@dataclass(frozen=True)
class AuxiliaryScalarMap:
    """Monotone scalar comparison map ``b(u) = min_{v in [u, cap]} g(v)``.

    ``g(v) = v exp(r (1 - shift - slope v))`` is increasing then decreasing,
    so the minimum over ``[u, cap]`` sits at an endpoint.
    """

    tag: str
    r: float
    shift: float
    slope: float
    cap: float
    fixed_point: float

    def g(self, v):
        v = np.asarray(v, float)
        return v * np.exp(self.r * (1.0 - self.shift - self.slope * v))

    def __call__(self, u):
        u = np.asarray(u, float)
        return np.minimum(self.g(u), self.g(self.cap))

    @property
    def b0(self) -> float:
        """Linear growth factor ``lim_{u->0} b(u)/u``."""
        return math.exp(self.r * (1.0 - self.shift))


def _fixed_point(bmap, cap: float) -> float:
    lo, hi = 0.0, cap
    # b(u) > u on (0, u+), b(u) < u beyond
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if float(bmap(mid)) > mid:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _make_map(tag: str, r: float, shift: float, slope: float, cap: float) -> AuxiliaryScalarMap:
    if r * (1.0 - shift) <= 0:
        raise ValueError(f"no positive fixed point: linear growth factor exp({r * (1 - shift):.4g}) <= 1")
    proto = AuxiliaryScalarMap(tag, r, shift, slope, cap, math.nan)
    u_plus = _fixed_point(proto, cap)
    return AuxiliaryScalarMap(tag, r, shift, slope, cap, u_plus)


def auxiliary_map_theorem4(params: ModelParams, species: int = 1) -> AuxiliaryScalarMap:
    """Comparison map with the competition frozen at its worst case over the capacity box.

    For species 1 the depression is ``A = sum(a) l1 + sum(b) l2`` and the map
    is defined on ``[0, l1 + 1]``.  Raises ``ValueError`` when ``A >= 1``.
    """
    cap = capacity_bounds(params)
    if species == 1:
        A = params.sum_a * cap.l1 + params.sum_b * cap.l2
        r, l = params.r1, cap.l1
    else:
        A = params.sum_e * cap.l2 + params.sum_f * cap.l1
        r, l = params.r2, cap.l2
    if A >= 1:
        raise ValueError(f"(up) violated for species {species}: A = {A:.6g} >= 1")
    return _make_map("lower_theorem4", r, A, 1.0, l + 1.0)


def auxiliary_map_theorem5(r: float, eps: float, M: float, cap: float | None = None) -> AuxiliaryScalarMap:
    """Comparison map ``min_{v in [u, cap]} v exp(r (1 - eps - M v))``; ``cap`` defaults to ``e^{r-1}/r``."""
    if cap is None:
        cap = math.exp(r - 1.0) / r
    if not 0 <= eps < 1:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    return _make_map("lower_theorem5", r, eps, M, cap)


def scalar_step(u, bmap, dkernel: DiscreteKernel, boundary: str = "extend") -> np.ndarray:
    F = bmap(u)
    if boundary == "zero":
        return convolve(F, dkernel, 0.0, 0.0, "direct")
    return convolve(F, dkernel, method="direct")


def simulate_scalar(u0, bmap, dkernel: DiscreteKernel, steps: int,
                    boundary: str = "extend") -> np.ndarray:
    """Iterate ``u <- k * b(u)`` and return the final field."""
    u = np.asarray(u0, float)
    for _ in range(steps):
        u = scalar_step(u, bmap, dkernel, boundary)
    return u


def kernel_pair(kernels, dx: float, mass_tol: float = 1e-10) -> list[DiscreteKernel]:
    return [k if isinstance(k, DiscreteKernel) else discretize(k, dx, mass_tol) for k in kernels]

