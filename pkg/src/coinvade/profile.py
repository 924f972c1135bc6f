"""Wave profiles as fixed points of the traveling-wave operator.

In the wave coordinate ``t = x + c n`` a profile pair ``(phi, psi)`` must
reproduce itself after one generation followed by a shift of ``c``::

    P1(phi, psi)(t) = int F1(y) k1(t - c - y) dy
    F1(y) = phi(y) exp(r1 (1 - phi(y) - sum a_i phi(y - c i) - sum b_i psi(y - c i)))

and symmetrically for ``P2``.  On the grid the convolution uses the
discrete stencil and the non-grid shifts use linear interpolation, with
constant extension by the edge values at both ends.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .kernel import DiscreteKernel, convolve, discretize
from .model import (
    EquilibriumError,
    ModelParams,
    capacity_bounds,
    check_admissibility,
    coexistence_equilibrium,
)
from .wavespeed import (
    BoundPair,
    GridWaveKernel,
    SubcriticalSpeedError,
    analyze,
    build_bound_pair,
    delta,
)

logger = logging.getLogger(__name__)

GAMMA_TOL = 1e-9


@dataclass
class Profile:
    t: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    c: float

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def with_fields(self, phi, psi) -> "Profile":
        return Profile(self.t, np.asarray(phi, float), np.asarray(psi, float), self.c)

    def to_csv(self, path, bounds: BoundPair | None = None) -> None:
        cols = [self.t, self.phi, self.psi]
        header = ["t", "phi", "psi"]
        if bounds is not None:
            cols += [bounds.phi_upper(self.t), bounds.phi_lower(self.t),
                     bounds.psi_upper(self.t), bounds.psi_lower(self.t)]
            header += ["phi_upper", "phi_lower", "psi_upper", "psi_lower"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])


def uniform_grid(t_min: float, t_max: float, dt: float) -> np.ndarray:
    n = int(round((t_max - t_min) / dt)) + 1
    return t_min + dt * np.arange(n)


class _Shifter:
    """Evaluate ``f(t - s)`` on a uniform grid by linear interpolation with edge extension."""

    def __init__(self, n: int, dt: float, s: float):
        cells = s / dt
        k = math.floor(cells)
        self.theta = cells - k
        j = np.arange(n)
        self.i0 = np.clip(j - k, 0, n - 1)
        self.i1 = np.clip(j - k - 1, 0, n - 1)

    def __call__(self, f):
        return (1.0 - self.theta) * f[self.i0] + self.theta * f[self.i1]


class WaveOperator:
    """The grid wave operator for fixed parameters, kernels, speed and grid.

    Convolution defaults to direct summation: it keeps relative accuracy in
    the exponentially small left tail, where FFT round-off would seed
    perturbations that travel into the front.
    """

    def __init__(self, t, params: ModelParams, dkernels, c: float, method: str = "direct"):
        self.t = np.asarray(t, float)
        n = self.t.size
        dt = float(self.t[1] - self.t[0])
        self.params = params
        self.dkernels = list(dkernels)
        self.c = float(c)
        self.method = method
        for dk in self.dkernels:
            if not math.isclose(dk.dx, dt, rel_tol=1e-9):
                raise ValueError(f"kernel spacing {dk.dx} does not match profile spacing {dt}")
        R = max(dk.radius for dk in self.dkernels)
        need = R + math.ceil((params.m + 1) * c / dt) + 1
        if n <= 2 * need:
            raise ValueError(
                f"profile grid of {n} points too short for kernel radius {R} plus shift {(params.m + 1) * c}"
            )
        self.margin = R
        self.delays = [_Shifter(n, dt, c * i) for i in range(1, params.m + 1)]
        self.advance = _Shifter(n, dt, c)

    def integrands(self, phi, psi, phi_own=None, psi_own=None, phi_lag=None, psi_lag=None):
        """Pre-dispersal integrands.

        The ``*_own`` arrays replace the current density in the growth factor
        ``u exp(r(1-u-...))``; the ``*_lag`` arrays replace the delayed and
        cross-species arguments.  Both default to ``phi``/``psi``.
        """
        p = self.params
        phi_own = phi if phi_own is None else phi_own
        psi_own = psi if psi_own is None else psi_own
        phi_lag = phi if phi_lag is None else phi_lag
        psi_lag = psi if psi_lag is None else psi_lag
        lag_phi = [phi_lag] + [s(phi_lag) for s in self.delays]
        lag_psi = [psi_lag] + [s(psi_lag) for s in self.delays]
        w1 = sum(p.a[i - 1] * lag_phi[i] for i in range(1, p.m + 1)) + sum(
            p.b[i] * lag_psi[i] for i in range(p.m + 1))
        w2 = sum(p.e[i - 1] * lag_psi[i] for i in range(1, p.m + 1)) + sum(
            p.f[i] * lag_phi[i] for i in range(p.m + 1))
        F1 = phi_own * np.exp(p.r1 * (1.0 - phi_own - w1))
        F2 = psi_own * np.exp(p.r2 * (1.0 - psi_own - w2))
        return F1, F2

    def disperse(self, F, species: int) -> np.ndarray:
        return self.advance(convolve(F, self.dkernels[species - 1], method=self.method))

    def __call__(self, phi, psi) -> tuple[np.ndarray, np.ndarray]:
        F1, F2 = self.integrands(phi, psi)
        return self.disperse(F1, 1), self.disperse(F2, 2)


def wave_operator(profile: Profile, params: ModelParams, dkernels, c: float | None = None) -> Profile:
    """Apply the wave operator once and return the image profile."""
    c = profile.c if c is None else c
    P1, P2 = WaveOperator(profile.t, params, dkernels, c)(profile.phi, profile.psi)
    return Profile(profile.t, P1, P2, c)


def residual(profile: Profile, params: ModelParams, dkernels, c: float | None = None) -> float:
    """Sup of ``|P(Phi) - Phi|`` over the grid minus one kernel radius at each end."""
    c = profile.c if c is None else c
    op = WaveOperator(profile.t, params, dkernels, c)
    P1, P2 = op(profile.phi, profile.psi)
    sl = slice(op.margin, profile.t.size - op.margin)
    return float(max(np.abs(P1 - profile.phi)[sl].max(), np.abs(P2 - profile.psi)[sl].max()))


def decay_norm(phi, psi, t, mu: float) -> float:
    """``sup_t max(|phi|, |psi|) exp(-mu |t|)``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    t = np.asarray(t, float)
    amp = np.maximum(np.abs(phi), np.abs(psi))
    return float(np.max(amp * np.exp(-mu * np.abs(t))))


def check_gamma_membership(profile: Profile, bounds: BoundPair, tol: float = GAMMA_TOL) -> dict:
    """Count grid points where a profile leaves the band between lower and upper profiles."""
    t = profile.t
    lo1, hi1 = bounds.phi_lower(t), bounds.phi_upper(t)
    lo2, hi2 = bounds.psi_lower(t), bounds.psi_upper(t)
    below1 = profile.phi < lo1 - tol
    above1 = profile.phi > hi1 + tol
    below2 = profile.psi < lo2 - tol
    above2 = profile.psi > hi2 + tol
    total = int(below1.sum() + above1.sum() + below2.sum() + above2.sum())
    return {
        "violations": total,
        "phi_below": int(below1.sum()),
        "phi_above": int(above1.sum()),
        "psi_below": int(below2.sum()),
        "psi_above": int(above2.sum()),
        "pass": total == 0,
    }


def _tail_slices(n: int, fraction: float = 0.1) -> tuple[slice, slice]:
    k = max(1, int(round(fraction * n)))
    return slice(0, k), slice(n - k, n)


def check_limits(profile: Profile, params: ModelParams, tol: float = 1e-3,
                 right_tol: float | None = None) -> dict:
    """Left limit zero; right limit at the coexistence state, or positive only.

    Under the small-competition conditions with ``r <= 1`` the right end must
    sit within ``right_tol`` of ``(k1, k2)``.  Otherwise only positivity of
    the rightmost tenth of the grid is required.
    """
    right_tol = tol if right_tol is None else right_tol
    left, right = _tail_slices(profile.t.size)
    left_max = float(max(profile.phi[left].max(), profile.psi[left].max()))
    report = {"left_tail_max": left_max, "left_pass": left_max < tol}
    adm = check_admissibility(params)
    if adm.a5_ok:
        eq = coexistence_equilibrium(params)
        gaps = (abs(float(profile.phi[-1]) - eq.k1), abs(float(profile.psi[-1]) - eq.k2))
        report.update(mode="equilibrium", k=(eq.k1, eq.k2), right_gaps=gaps,
                      right_pass=max(gaps) < right_tol)
    else:
        low = float(min(profile.phi[right].min(), profile.psi[right].min()))
        report.update(mode="positivity", right_min=low, right_pass=low > 0)
    report["pass"] = bool(report["left_pass"] and report["right_pass"])
    return report


@dataclass
class ProfileSolveReport:
    iterations: int
    converged: bool
    final_update: float
    residual: float
    left_tail_max: float
    right_gaps: tuple[float, float] | None
    gamma_violations: int
    clamp_active: bool
    subcritical: bool
    damping: float
    status: str
    valid: bool
    history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("history")
        return d


def solve_profile(c: float, params: ModelParams, kernels, t_min: float = -60.0,
                  t_max: float = 30.0, dt: float = 0.05, tol: float = 1e-10,
                  max_iter: int = 10_000, theta: float = 1.0, clamp: bool = True,
                  mass_tol: float = 1e-10) -> tuple[Profile, ProfileSolveReport, BoundPair | None]:
    """Damped fixed-point iteration of the wave operator from the upper profile.

    Iterates ``Phi <- (1 - theta) Phi + theta P(Phi)`` until the sup-norm
    update drops below ``tol``.  For a supercritical ``c`` the bounds are built
    for the grid operator itself and, with ``clamp``, every iterate is
    projected into the band between them.  Subcritical speeds run unclamped
    from a front decaying at the critical rate and are always reported as
    invalid.  Never raises on non-convergence.

    Returns ``(profile, report, bounds)``; ``bounds`` is ``None`` when
    subcritical.
    """
    params.validate()
    t = uniform_grid(t_min, t_max, dt)
    dks = [k if isinstance(k, DiscreteKernel) else discretize(k, dt, mass_tol) for k in kernels]
    cont = analyze(params, kernels)
    cap = capacity_bounds(params)
    subcritical = c <= cont.c_star
    note = ""
    bounds = None
    if not subcritical:
        grid_analysis = analyze(params, [GridWaveKernel(dk) for dk in dks], c)
        if grid_analysis.subcritical:
            subcritical = True
            note = " (for the discretized operator)"
        else:
            bounds = build_bound_pair(grid_analysis, cap)
    if subcritical:
        logger.warning("speed c=%g is not above c*=%g%s; running as a probe", c, cont.c_star, note)

    op = WaveOperator(t, params, dks, c)
    if bounds is not None:
        phi, psi = bounds.upper(t)
        lo1, lo2 = bounds.lower(t)
        hi1, hi2 = bounds.upper(t)
    else:
        phi = np.minimum(np.exp(np.minimum(cont.lambda_hat1 * t, 700)), cap.l1)
        psi = np.minimum(np.exp(np.minimum(cont.lambda_hat2 * t, 700)), cap.l2)
        clamp = False

    damping = float(theta)
    updates: list[float] = []
    rises = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        P1, P2 = op(phi, psi)
        if clamp:
            P1 = np.clip(P1, lo1, hi1)
            P2 = np.clip(P2, lo2, hi2)
        new_phi = (1.0 - damping) * phi + damping * P1
        new_psi = (1.0 - damping) * psi + damping * P2
        upd = float(max(np.abs(new_phi - phi).max(), np.abs(new_psi - psi).max()))
        phi, psi = new_phi, new_psi
        if not math.isfinite(upd):
            break
        rises = rises + 1 if updates and upd > updates[-1] else 0
        updates.append(upd)
        if rises >= 10 and damping > 1.0 / 64:
            damping *= 0.5
            rises = 0
            logger.info("oscillation detected at iteration %d; damping -> %g", it, damping)
        if upd < tol:
            converged = True
            break

    profile = Profile(t, phi, psi, c)
    P1, P2 = op(phi, psi)
    clamp_active = False
    gamma_violations = 0
    if bounds is not None:
        clamp_active = bool(
            np.any(P1 < lo1 - 1e-12) or np.any(P1 > hi1 + 1e-12)
            or np.any(P2 < lo2 - 1e-12) or np.any(P2 > hi2 + 1e-12)
        )
        gamma_violations = check_gamma_membership(profile, bounds)["violations"]
    res = residual(profile, params, dks, c)
    left, _ = _tail_slices(t.size)
    left_max = float(max(phi[left].max(), psi[left].max()))
    try:
        eq = coexistence_equilibrium(params)
        gaps = (abs(float(phi[-1]) - eq.k1), abs(float(psi[-1]) - eq.k2))
    except EquilibriumError:
        gaps = None

    if subcritical:
        status = "subcritical" + note + ("; converged" if converged else "; not converged")
    else:
        status = "converged" if converged else "not converged"
    report = ProfileSolveReport(
        iterations=it,
        converged=converged,
        final_update=updates[-1] if updates else math.nan,
        residual=res,
        left_tail_max=left_max,
        right_gaps=gaps,
        gamma_violations=gamma_violations,
        clamp_active=clamp_active,
        subcritical=subcritical,
        damping=damping,
        status=status,
        valid=converged and not subcritical,
        history=updates,
    )
    return profile, report, bounds


def _quadrature_allowance(dt: float, scale) -> np.ndarray:
    return 10.0 * dt * dt * np.asarray(scale)


def verify_bounds(bounds: BoundPair, params: ModelParams, kernels, c: float, t,
                  mass_tol: float = 1e-10) -> dict:
    """Pointwise check of the upper and lower inequalities behind Gamma-invariance.

    Upper: ``P1(phi_up, psi_low) <= phi_up``, the kernel-level chain
    ``int phi_up e^{r1(1 - phi_up)} k1 <= phi_up``, and the species-2 mirror.
    Lower (operator): the image of the pointwise worst case over the band is
    at least ``phi_low``.  Lower (closed form): for every grid ``t < 0`` the
    four-term exponential bound is at least ``e^{lam t} - rho e^{eta lam t}``.
    Operator checks allow ``10 dt^2`` times the upper profile for grid error
    and skip the cells within one kernel radius plus the largest shift of
    either end, where the constant extension is not the true profile.
    """
    t = np.asarray(t, float)
    dt = float(t[1] - t[0])
    dks = [k if isinstance(k, DiscreteKernel) else discretize(k, dt, mass_tol) for k in kernels]
    op = WaveOperator(t, params, dks, c)
    phi_u, psi_u = bounds.upper(t)
    phi_l, psi_l = bounds.lower(t)
    q1 = _quadrature_allowance(dt, phi_u)
    q2 = _quadrature_allowance(dt, psi_u)
    checks: dict[str, dict] = {}
    # constant extension pollutes one kernel radius plus the largest shift
    edge = op.margin + int(math.ceil((params.m + 1) * abs(c) / dt))
    interior = np.zeros(t.size, bool)
    interior[edge:t.size - edge] = True

    def record(name, excess, mask=interior):
        excess = np.where(mask, excess, -np.inf)
        bad = excess > 0
        worst = int(np.argmax(excess))
        checks[name] = {
            "violations": int(bad.sum()),
            "worst_t": float(t[worst]),
            "worst_excess": float(excess[worst]),
        }

    # upper: the extreme pairs for the nonincreasing cross dependence
    F1, _ = op.integrands(phi_u, psi_l)
    _, F2 = op.integrands(phi_l, psi_u)
    record("upper_phi", op.disperse(F1, 1) - phi_u - q1)
    record("upper_psi", op.disperse(F2, 2) - psi_u - q2)
    K1 = op.disperse(phi_u * np.exp(params.r1 * (1.0 - phi_u)), 1)
    K2 = op.disperse(psi_u * np.exp(params.r2 * (1.0 - psi_u)), 2)
    record("kernel_chain_phi", K1 - phi_u - q1)
    record("kernel_chain_psi", K2 - psi_u - q2)

    # lower: growth factor minimized over [low, up] (endpoints; unimodal) with
    # all delayed and cross arguments at their upper profiles
    a1, a2 = op.integrands(phi_l, psi_l, phi_lag=phi_u, psi_lag=psi_u)
    b1, b2 = op.integrands(phi_u, psi_u)
    L1 = op.disperse(np.minimum(a1, b1), 1)
    L2 = op.disperse(np.minimum(a2, b2), 2)
    record("lower_phi", phi_l - L1 - q1)
    record("lower_psi", psi_l - L2 - q2)

    # closed-form chain on t < 0, divided through by e^{eta lam t}
    neg = t < 0
    tn = t[neg]
    terms = {}
    for sp, kern in ((1, kernels[0]), (2, kernels[1])):
        r = params.rate(sp)
        lam = bounds.lam1 if sp == 1 else bounds.lam2
        L = r
        own = L * (1.0 + math.fsum(params.own(sp))) * delta(2 * lam, c, r, kern)
        cross = L * math.fsum(params.cross(sp)) * delta(bounds.lam1 + bounds.lam2, c, r, kern)
        d_eta = delta(bounds.eta * lam, c, r, kern)
        terms[sp] = {"delta_lambda": delta(lam, c, r, kern), "delta_eta_lambda": d_eta,
                     "own_quadratic": own, "cross": cross}
        margin = (bounds.rho * (1.0 - d_eta)
                  - own * np.exp((2.0 - bounds.eta) * lam * tn)
                  - cross * np.exp((bounds.lam1 + bounds.lam2 - bounds.eta * lam) * tn))
        excess = np.full(t.size, -np.inf)
        excess[neg] = -margin - 1e-12
        record(f"lower_chain_{'phi' if sp == 1 else 'psi'}", excess, neg)

    ok = all(v["violations"] == 0 for v in checks.values())
    return {"pass": ok, "checks": checks, "chain_terms": terms, "rho": bounds.rho,
            "eta": bounds.eta, "lambda": (bounds.lam1, bounds.lam2), "dt": dt,
            "allowance": "10*dt^2 * upper profile"}


def bounds_for_speed(params: ModelParams, kernels, c: float) -> BoundPair:
    """Bounds for the continuous kernels at speed ``c``."""
    analysis = analyze(params, kernels, c)
    if analysis.subcritical:
        raise SubcriticalSpeedError(analysis.note)
    return build_bound_pair(analysis, capacity_bounds(params))

