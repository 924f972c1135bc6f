"""Dispersal kernels: analytic families, grid discretization and convolution.

Four families are supported: ``gaussian`` (length scale ``sigma``),
``laplace`` (decay rate ``beta``, density ``beta/2 exp(-beta |y|)``),
``uniform`` (half-width ``h``) and ``tabulated`` (explicit symmetric
offsets and weights).  The Laplace family only has a finite moment
generating function on ``|lambda| < beta``; callers that search over
``lambda`` use :meth:`KernelSpec.lambda_cap` to stay inside that domain.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import erfc

FAMILIES = ("gaussian", "laplace", "uniform", "tabulated")
LAPLACE_CAP = 1.0 - 1e-9
# below this many stencil taps direct summation beats the FFT
DIRECT_RADIUS = 24
TABULATED_ALIGN_TOL = 1e-9


class MGFDivergentError(ValueError):
    pass


class GridTooCoarseError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """An even, mass-one dispersal density.

    Use the ``gaussian``/``laplace``/``uniform``/``tabulated`` constructors
    rather than calling this directly.
    """

    family: str
    scale: float = 1.0
    offsets: tuple[float, ...] = field(default=(), repr=False)
    weights: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "tabulated":
            if len(self.offsets) != len(self.weights) or not self.offsets:
                raise ValueError("tabulated kernel needs equal-length, nonempty offsets and weights")
        elif not self.scale > 0:
            raise ValueError(f"{self.family} kernel parameter must be positive, got {self.scale}")

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls("gaussian", float(sigma))

    @classmethod
    def laplace(cls, beta: float) -> "KernelSpec":
        return cls("laplace", float(beta))

    @classmethod
    def uniform(cls, h: float) -> "KernelSpec":
        return cls("uniform", float(h))

    @classmethod
    def tabulated(cls, offsets, weights) -> "KernelSpec":
        return cls("tabulated", 1.0, tuple(map(float, offsets)), tuple(map(float, weights)))

    @classmethod
    def from_csv(cls, path) -> "KernelSpec":
        """Load a two-column ``offset,weight`` table (an optional header is skipped)."""
        offsets, weights = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    o, w = float(row[0]), float(row[1])
                except ValueError:
                    if offsets:
                        raise
                    continue
                offsets.append(o)
                weights.append(w)
        return cls.tabulated(offsets, weights)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "KernelSpec":
        family = data["family"]
        if family == "gaussian":
            return cls.gaussian(data["sigma"])
        if family == "laplace":
            return cls.laplace(data["beta"])
        if family == "uniform":
            return cls.uniform(data["h"])
        if family == "tabulated":
            if "csv" in data:
                path = Path(data["csv"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                return cls.from_csv(path)
            return cls.tabulated(data["offsets"], data["weights"])
        raise ValueError(f"unknown kernel family {family!r}")

    def to_dict(self) -> dict:
        key = {"gaussian": "sigma", "laplace": "beta", "uniform": "h"}
        if self.family == "tabulated":
            return {"family": "tabulated", "offsets": list(self.offsets), "weights": list(self.weights)}
        return {"family": self.family, key[self.family]: self.scale}

    def admissible(self) -> tuple[bool, str]:
        """Check mass one, evenness, nonnegativity and a finite MGF everywhere."""
        if self.family == "laplace":
            return False, f"laplace MGF diverges for |lambda| >= {self.scale}"
        if self.family != "tabulated":
            return True, ""
        o = np.asarray(self.offsets)
        w = np.asarray(self.weights)
        if np.any(w < 0):
            return False, "negative weights"
        if abs(w.sum() - 1.0) > 1e-10:
            return False, f"weights sum to {w.sum():.12g}, not 1"
        order = np.argsort(o)
        if not (np.allclose(o[order], -o[order][::-1]) and np.allclose(w[order], w[order][::-1])):
            return False, "table is not symmetric"
        return True, ""

    def lambda_cap(self) -> float:
        """Largest admissible ``lambda`` for searches (``inf`` unless Laplace)."""
        return self.scale * LAPLACE_CAP if self.family == "laplace" else math.inf

    def pdf(self, y):
        y = np.abs(np.asarray(y, dtype=float))
        s = self.scale
        if self.family == "gaussian":
            return np.exp(-0.5 * (y / s) ** 2) / (s * math.sqrt(2 * math.pi))
        if self.family == "laplace":
            return 0.5 * s * np.exp(-s * y)
        if self.family == "uniform":
            inside = np.where(y < s, 1.0 / (2 * s), 0.0)
            # average of the one-sided limits at the jump
            return np.where(y == s, 1.0 / (4 * s), inside)
        raise ValueError("tabulated kernels have no density; use discretize")

    def tail_mass(self, x: float) -> float:
        """Mass outside ``[-x, x]``."""
        s = self.scale
        if self.family == "gaussian":
            return float(erfc(x / (s * math.sqrt(2))))
        if self.family == "laplace":
            return math.exp(-s * x)
        if self.family == "uniform":
            return max(0.0, 1.0 - x / s)
        w = np.asarray(self.weights)
        return float(w[np.abs(np.asarray(self.offsets)) > x].sum())

    def mgf(self, lam: float) -> float:
        """Moment generating function ``int exp(lam y) k(y) dy`` in closed form."""
        lam = float(lam)
        s = self.scale
        if self.family == "gaussian":
            return math.exp(0.5 * (s * lam) ** 2)
        if self.family == "laplace":
            if abs(lam) >= s:
                raise MGFDivergentError(f"laplace MGF diverges at lambda={lam} (beta={s})")
            return s * s / (s * s - lam * lam)
        if self.family == "uniform":
            x = lam * s
            if abs(x) < 1e-8:
                return 1.0 + x * x / 6.0
            return math.sinh(x) / x
        o = np.asarray(self.offsets)
        w = np.asarray(self.weights)
        return float(np.dot(w, np.exp(lam * o)))

    def log_mgf(self, lam: float) -> float:
        lam = float(lam)
        if self.family == "gaussian":
            return 0.5 * (self.scale * lam) ** 2
        if self.family == "uniform":
            x = abs(lam) * self.scale
            if x > 30:
                # log(sinh x / x) without overflow
                return x - math.log(2 * x) + math.log1p(-math.exp(-2 * x))
        return math.log(self.mgf(lam))


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Symmetric grid stencil ``weights[j + radius]`` at offsets ``j * dx``."""

    dx: float
    weights: np.ndarray
    family: str = "tabulated"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size % 2 != 1:
            raise ValueError("stencil must be a 1-D array of odd length")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def radius(self) -> int:
        return self.weights.size // 2

    @property
    def offsets(self) -> np.ndarray:
        return self.dx * np.arange(-self.radius, self.radius + 1)

    def mgf(self, lam: float) -> float:
        return float(np.dot(self.weights, np.exp(lam * self.offsets)))

    def log_mgf(self, lam: float) -> float:
        x = lam * self.offsets
        top = x.max()
        return float(top + math.log(np.dot(self.weights, np.exp(x - top))))

    def lambda_cap(self) -> float:
        return math.inf

    def to_spec(self) -> KernelSpec:
        keep = self.weights > 0
        return KernelSpec.tabulated(self.offsets[keep], self.weights[keep])


def discretize(kernel: KernelSpec, dx: float, mass_tol: float = 1e-10) -> DiscreteKernel:
    """Midpoint-rule stencil truncated where the omitted mass drops below ``mass_tol``.

    One half of the stencil is computed and mirrored, then the weights are
    renormalized to sum to one.
    """
    if not dx > 0:
        raise ValueError(f"dx must be positive, got {dx}")
    if not 0 < mass_tol < 1e-3:
        raise ValueError(f"mass_tol must lie in (0, 1e-3), got {mass_tol}")

    if kernel.family == "tabulated":
        idx = np.asarray(kernel.offsets) / dx
        j = np.rint(idx)
        if np.any(np.abs(idx - j) > TABULATED_ALIGN_TOL):
            raise ValueError(f"tabulated offsets are not multiples of dx={dx}")
        j = j.astype(int)
        radius = int(np.abs(j).max())
        half = np.zeros(radius + 1)
        for jj, w in zip(j, kernel.weights):
            if jj >= 0:
                half[jj] += w
    else:
        radius = 0
        # cells [-(R+1/2) dx, (R+1/2) dx] must carry all but mass_tol
        while kernel.tail_mass((radius + 0.5) * dx) >= mass_tol:
            radius += 1
            if radius > 10**7:
                raise ValueError("kernel tail too heavy to truncate")
        half = kernel.pdf(dx * np.arange(radius + 1)) * dx

    weights = np.concatenate([half[:0:-1], half])
    if np.count_nonzero(weights > 0) < 5:
        raise GridTooCoarseError(
            f"grid too coarse: only {np.count_nonzero(weights > 0)} points carry mass at dx={dx}"
        )
    return DiscreteKernel(dx, weights / weights.sum(), kernel.family)


def convolve(field, dkernel: DiscreteKernel, left: float | None = None,
             right: float | None = None, method: str = "auto") -> np.ndarray:
    """Linear convolution of a grid field with constant extension beyond its ends.

    ``out[i] = sum_j w_j * f_ext[i - j]`` where ``f_ext`` equals ``left`` to the
    left of the grid and ``right`` to the right (defaulting to the edge
    values).  The output has the same length as ``field``.

    ``method`` is ``"direct"``, ``"fft"`` or ``"auto"``.
    """
    f = np.asarray(field, dtype=float)
    R = dkernel.radius
    if f.ndim != 1 or f.size < R:
        raise ValueError(f"field of length {f.size} is shorter than the kernel radius {R}")
    lv = f[0] if left is None else float(left)
    rv = f[-1] if right is None else float(right)
    padded = np.concatenate([np.full(R, lv), f, np.full(R, rv)])
    if method == "auto":
        method = "direct" if R <= DIRECT_RADIUS else "fft"
    if method == "direct":
        return np.convolve(padded, dkernel.weights, mode="valid")
    if method != "fft":
        raise ValueError(f"unknown convolution method {method!r}")
    out = fftconvolve(padded, dkernel.weights, mode="valid")
    if lv >= 0 and rv >= 0 and f.min() >= 0:
        # round-off can leave tiny negatives where the field vanishes
        np.maximum(out, 0.0, out=out)
    return out
