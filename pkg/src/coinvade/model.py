"""Model parameters, the nondispersal growth map and its equilibria.

The delayed Ricker competition map advances the pair ``(X_n, Y_n)`` using
the current densities and ``m`` past generations::

    X_{n+1} = X_n exp(r1 (1 - X_n - sum_{i>=1} a_i X_{n-i} - sum_{i>=0} b_i Y_{n-i}))
    Y_{n+1} = Y_n exp(r2 (1 - Y_n - sum_{i>=1} e_i Y_{n-i} - sum_{i>=0} f_i X_{n-i}))

Histories are always passed oldest first, so ``hist[-1]`` is the current
density and ``hist[-1 - i]`` is the density ``i`` generations ago.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

DET_THRESHOLD = 1e-12
POSITIVITY_THRESHOLD = 1e-12


class EquilibriumError(ValueError):
    """No admissible coexistence equilibrium; ``solution`` holds the raw solve."""

    def __init__(self, message: str, solution: tuple[float, float] | None):
        super().__init__(message)
        self.solution = solution


def _as_tuple(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class ModelParams:
    """Growth rates, history depth and competition coefficients.

    ``a`` and ``e`` hold the own-species delayed coefficients (lags 1..m),
    ``b`` and ``f`` the cross-species coefficients (lags 0..m).  Lengths are
    checked on construction; signs are not, so that inadmissible parameter
    sets can still be reported on by :func:`check_admissibility`.
    """

    r1: float
    r2: float
    m: int = 0
    a: tuple[float, ...] = field(default=())
    e: tuple[float, ...] = field(default=())
    b: tuple[float, ...] = field(default=(0.0,))
    f: tuple[float, ...] = field(default=(0.0,))

    def __post_init__(self):
        object.__setattr__(self, "r1", float(self.r1))
        object.__setattr__(self, "r2", float(self.r2))
        for name in ("a", "e", "b", "f"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"history depth m must be a nonnegative integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        m = self.m
        if len(self.a) != m or len(self.e) != m:
            raise ValueError(f"a and e must have length m={m}, got {len(self.a)} and {len(self.e)}")
        if len(self.b) != m + 1 or len(self.f) != m + 1:
            raise ValueError(
                f"b and f must have length m+1={m + 1}, got {len(self.b)} and {len(self.f)}"
            )

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        a = data.get("a", [])
        m = data.get("m", len(a))
        return cls(
            r1=data["r1"],
            r2=data["r2"],
            m=m,
            a=a,
            e=data.get("e", [0.0] * m),
            b=data.get("b", [0.0] * (m + 1)),
            f=data.get("f", [0.0] * (m + 1)),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("a", "e", "b", "f"):
            d[name] = list(d[name])
        return d

    def validate(self) -> None:
        """Raise ``ValueError`` unless the coefficient sign conditions hold."""
        if not (self.r1 > 0 and self.r2 > 0):
            raise ValueError(f"growth rates must be positive, got r1={self.r1}, r2={self.r2}")
        for name in ("a", "e", "b", "f"):
            if any(v < 0 for v in getattr(self, name)):
                raise ValueError(f"coefficients {name} must be nonnegative: {getattr(self, name)}")

    # per-species views used throughout the package
    def rate(self, species: int) -> float:
        return self.r1 if species == 1 else self.r2

    def own(self, species: int) -> tuple[float, ...]:
        return self.a if species == 1 else self.e

    def cross(self, species: int) -> tuple[float, ...]:
        return self.b if species == 1 else self.f

    @property
    def sum_a(self) -> float:
        return math.fsum(self.a)

    @property
    def sum_b(self) -> float:
        return math.fsum(self.b)

    @property
    def sum_e(self) -> float:
        return math.fsum(self.e)

    @property
    def sum_f(self) -> float:
        return math.fsum(self.f)

    def swapped(self) -> "ModelParams":
        """The same system with the roles of X and Y exchanged."""
        return ModelParams(self.r2, self.r1, self.m, self.e, self.a, self.f, self.b)


@dataclass(frozen=True)
class CapacityBounds:
    l1: float
    l2: float


@dataclass(frozen=True)
class Equilibrium:
    k1: float
    k2: float


@dataclass(frozen=True)
class AdmissibilityReport:
    a1_a2_kernel_ok: bool
    coeff_ok: bool
    a5_ok: bool
    up_ok: bool
    equilibrium_solvable: bool
    # 1 - sum(a) - sum(b) and 1 - sum(e) - sum(f)
    lower_bound1: float
    lower_bound2: float
    kernel_notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_notes"] = list(self.kernel_notes)
        return d


def capacity(r: float) -> float:
    """Upper bound of ``u exp(r (1 - u))`` on the invariant interval."""
    if r <= 1.0:
        return 1.0
    return math.exp(r - 1.0) / r


def capacity_bounds(params: ModelParams) -> CapacityBounds:
    return CapacityBounds(capacity(params.r1), capacity(params.r2))


def _check_history(hist, m: int, name: str) -> np.ndarray:
    arr = np.asarray(hist, dtype=float)
    if arr.shape != (m + 1,):
        raise ValueError(f"{name} must have length m+1={m + 1}, got shape {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite and nonnegative: {arr}")
    return arr


def growth_exponents(params: ModelParams, u_hist, v_hist):
    """Return the two Ricker exponents for histories ordered oldest first.

    Works on scalars or on stacked spatial fields: the first axis indexes the
    history slot, any trailing axes are carried along.
    """
    u = np.asarray(u_hist, dtype=float)
    v = np.asarray(v_hist, dtype=float)
    m = params.m
    # lag-ordered views: index i is i generations ago
    u_lag = u[::-1]
    v_lag = v[::-1]
    own1 = sum(params.a[i - 1] * u_lag[i] for i in range(1, m + 1)) if m else 0.0
    own2 = sum(params.e[i - 1] * v_lag[i] for i in range(1, m + 1)) if m else 0.0
    cross1 = sum(params.b[i] * v_lag[i] for i in range(m + 1))
    cross2 = sum(params.f[i] * u_lag[i] for i in range(m + 1))
    ex1 = params.r1 * (1.0 - u_lag[0] - own1 - cross1)
    ex2 = params.r2 * (1.0 - v_lag[0] - own2 - cross2)
    return ex1, ex2


def growth_map(params: ModelParams, u_hist, v_hist) -> tuple[float, float]:
    """One step of the nondispersal delayed system.

    Parameters
    ----------
    params : ModelParams
    u_hist, v_hist : sequence of float
        The last ``m + 1`` densities of X and Y, oldest first.

    Returns
    -------
    (X_next, Y_next)
    """
    u = _check_history(u_hist, params.m, "u_hist")
    v = _check_history(v_hist, params.m, "v_hist")
    ex1, ex2 = growth_exponents(params, u, v)
    return float(u[-1] * math.exp(ex1)), float(v[-1] * math.exp(ex2))


def coexistence_equilibrium(params: ModelParams) -> Equilibrium:
    """Solve the 2x2 linear system for the positive constant state.

    The system ``k1 (1 + sum a) + k2 sum b = 1``, ``k2 (1 + sum e) + k1 sum f = 1``
    is solved in closed form.  A determinant at or below ``DET_THRESHOLD``
    (singular, or the strong-competition sign pattern) or a component below
    ``POSITIVITY_THRESHOLD`` raises :class:`EquilibriumError`.
    """
    p, q = 1.0 + params.sum_a, params.sum_b
    s, w = params.sum_f, 1.0 + params.sum_e
    det = p * w - q * s
    if abs(det) <= DET_THRESHOLD:
        raise EquilibriumError("no admissible coexistence equilibrium: singular system", None)
    k1 = (w - q) / det
    k2 = (p - s) / det
    if det <= DET_THRESHOLD:
        raise EquilibriumError(
            f"no admissible coexistence equilibrium: determinant {det:.6g} is negative",
            (k1, k2),
        )
    if k1 < POSITIVITY_THRESHOLD or k2 < POSITIVITY_THRESHOLD:
        raise EquilibriumError(
            f"no admissible coexistence equilibrium: solution ({k1:.6g}, {k2:.6g}) is not positive",
            (k1, k2),
        )
    return Equilibrium(k1, k2)


def check_admissibility(params: ModelParams, kernels=None) -> AdmissibilityReport:
    """Evaluate every standing assumption on the parameters and kernels.

    Never raises; each flag is computed from its defining inequality.
    """
    notes: list[str] = []
    kernel_ok = True
    for idx, kern in enumerate(kernels or ()):
        ok, why = kern.admissible()
        if not ok:
            kernel_ok = False
            notes.append(f"kernel {idx + 1}: {why}")

    coeff_ok = params.r1 > 0 and params.r2 > 0 and all(
        v >= 0 for name in ("a", "e", "b", "f") for v in getattr(params, name)
    )
    lb1 = 1.0 - params.sum_a - params.sum_b
    lb2 = 1.0 - params.sum_e - params.sum_f
    a5_ok = coeff_ok and 0 < params.r1 <= 1 and 0 < params.r2 <= 1 and lb1 > 0 and lb2 > 0

    up_ok = False
    if params.r1 > 0 and params.r2 > 0:
        cap = capacity_bounds(params)
        up_ok = (
            coeff_ok
            and params.sum_a * cap.l1 + params.sum_b * cap.l2 < 1
            and params.sum_e * cap.l2 + params.sum_f * cap.l1 < 1
        )

    try:
        coexistence_equilibrium(params)
        solvable = True
    except EquilibriumError:
        solvable = False

    return AdmissibilityReport(
        a1_a2_kernel_ok=kernel_ok,
        coeff_ok=coeff_ok,
        a5_ok=a5_ok,
        up_ok=up_ok,
        equilibrium_solvable=solvable,
        lower_bound1=lb1,
        lower_bound2=lb2,
        kernel_notes=tuple(notes),
    )
