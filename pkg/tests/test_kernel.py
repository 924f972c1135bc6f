from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from coinvade.kernel import (DiscreteKernel, GridTooCoarseError, KernelSpec, MGFDivergentError,
                             convolve, discretize)

FAMILIES = [KernelSpec.gaussian(0.7), KernelSpec.laplace(2.0), KernelSpec.uniform(1.5)]


def _quad_mgf(k: KernelSpec, lam: float) -> float:
    lim = 40 * k.scale if k.family == "gaussian" else (k.scale if k.family == "uniform" else 60 / k.scale)
    val, _ = integrate.quad(lambda y: math.exp(lam * y) * float(k.pdf(y)), -lim, lim,
                            limit=400, points=[0.0])
    return val


@pytest.mark.parametrize("kern", FAMILIES, ids=lambda k: k.family)
def test_density_has_unit_mass(kern):
    assert _quad_mgf(kern, 0.0) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("kern", FAMILIES, ids=lambda k: k.family)
@pytest.mark.parametrize("lam", [0.3, 1.2])
def test_mgf_matches_quadrature(kern, lam):
    assert kern.mgf(lam) == pytest.approx(_quad_mgf(kern, lam), rel=1e-8)
    assert kern.log_mgf(lam) == pytest.approx(math.log(kern.mgf(lam)), rel=1e-12)


def test_laplace_mgf_domain():
    k = KernelSpec.laplace(1.0)
    with pytest.raises(MGFDivergentError):
        k.mgf(1.0)
    assert k.lambda_cap() == pytest.approx(1.0 - 1e-9)
    assert math.isinf(KernelSpec.gaussian(1).lambda_cap())
    assert not k.admissible()[0]


def test_uniform_log_mgf_does_not_overflow():
    k = KernelSpec.uniform(1.0)
    assert k.log_mgf(2000.0) == pytest.approx(2000 - math.log(4000), rel=1e-12)
    assert k.log_mgf(20.0) == pytest.approx(math.log(math.sinh(20) / 20), rel=1e-12)


def test_tail_mass_closed_forms():
    assert KernelSpec.gaussian(1).tail_mass(1.959963984540054) == pytest.approx(0.05, rel=1e-9)
    assert KernelSpec.laplace(2).tail_mass(1.0) == pytest.approx(math.exp(-2))
    assert KernelSpec.uniform(2).tail_mass(0.5) == pytest.approx(0.75)


def test_constructor_validation():
    with pytest.raises(ValueError, match="unknown"):
        KernelSpec("cauchy")
    with pytest.raises(ValueError, match="positive"):
        KernelSpec.gaussian(0.0)
    with pytest.raises(ValueError, match="equal-length"):
        KernelSpec.tabulated([0.0, 1.0], [1.0])


def test_tabulated_admissibility():
    ok = KernelSpec.tabulated([-1, 0, 1], [0.25, 0.5, 0.25])
    assert ok.admissible() == (True, "")
    assert not KernelSpec.tabulated([-1, 0, 1], [0.2, 0.5, 0.3]).admissible()[0]
    assert "sum" in KernelSpec.tabulated([-1, 0, 1], [0.2, 0.5, 0.2]).admissible()[1]
    assert "negative" in KernelSpec.tabulated([-1, 0, 1], [-0.1, 1.2, -0.1]).admissible()[1]
    assert ok.mgf(1.0) == pytest.approx(0.5 + 0.5 * math.cosh(1.0))


def test_csv_and_dict_round_trip(tmp_path):
    path = tmp_path / "k.csv"
    path.write_text("offset,weight\n-0.5,0.25\n0,0.5\n0.5,0.25\n")
    k = KernelSpec.from_csv(path)
    assert k.offsets == (-0.5, 0.0, 0.5) and k.weights == (0.25, 0.5, 0.25)
    assert KernelSpec.from_dict({"family": "tabulated", "csv": "k.csv"}, tmp_path) == k
    for spec in FAMILIES + [k]:
        assert KernelSpec.from_dict(spec.to_dict()) == spec


def test_uniform_midpoint_weights():
    # half-width 1 on dx 0.5: the cells at +-h carry half the interior value
    dk = discretize(KernelSpec.uniform(1.0), 0.5)
    np.testing.assert_allclose(dk.weights, [0.125, 0.25, 0.25, 0.25, 0.125], rtol=1e-14)


def test_discretize_truncation_and_symmetry():
    dk = discretize(KernelSpec.gaussian(1.0), 0.1, mass_tol=1e-10)
    assert dk.weights.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(dk.weights, dk.weights[::-1])
    # smallest R with erfc((R + 1/2) dx / sqrt 2) < 1e-10, from the inverse
    x = special.erfcinv(1e-10) * math.sqrt(2)
    assert dk.radius == math.ceil(x / 0.1 - 0.5) == 65
    assert not dk.weights.flags.writeable
    assert dk.mgf(1.0) == pytest.approx(math.exp(0.5), rel=1e-3)


def test_discretize_rejects_coarse_grids_and_misaligned_tables():
    with pytest.raises(GridTooCoarseError):
        discretize(KernelSpec.uniform(1.0), 0.9)
    with pytest.raises(ValueError, match="multiples"):
        discretize(KernelSpec.tabulated([-0.3, 0, 0.3], [0.25, 0.5, 0.25]), 0.2)
    with pytest.raises(ValueError):
        discretize(KernelSpec.gaussian(1.0), -0.1)


def test_tabulated_discretization_keeps_weights():
    k = KernelSpec.tabulated([-0.4, -0.2, 0, 0.2, 0.4], [0.1, 0.2, 0.4, 0.2, 0.1])
    dk = discretize(k, 0.2)
    np.testing.assert_allclose(dk.weights, [0.1, 0.2, 0.4, 0.2, 0.1])
    assert dk.to_spec() == KernelSpec.tabulated(dk.offsets, dk.weights)


def test_discrete_log_mgf_is_stable():
    dk = discretize(KernelSpec.gaussian(1.0), 0.1)
    assert math.isfinite(dk.log_mgf(500.0))
    assert dk.log_mgf(0.7) == pytest.approx(math.log(dk.mgf(0.7)), rel=1e-13)


def test_convolve_matches_explicit_sum():
    rng = np.random.default_rng(3)
    dk = DiscreteKernel(0.1, rng.uniform(0, 1, 11))
    f = rng.uniform(0, 1, 40)
    out = convolve(f, dk, left=0.2, right=0.7, method="direct")
    ext = lambda i: 0.2 if i < 0 else (0.7 if i >= f.size else f[i])  # noqa: E731
    R = dk.radius
    ref = [sum(dk.weights[j + R] * ext(i - j) for j in range(-R, R + 1)) for i in range(f.size)]
    np.testing.assert_allclose(out, ref, rtol=1e-13)


def test_fft_and_direct_agree_and_constants_are_preserved():
    dk = discretize(KernelSpec.gaussian(3.0), 0.1)
    f = np.random.default_rng(4).uniform(0, 1, 2000)
    np.testing.assert_allclose(convolve(f, dk, method="fft"), convolve(f, dk, method="direct"),
                               atol=1e-13)
    np.testing.assert_allclose(convolve(np.full(500, 0.3), dk), 0.3, rtol=1e-13)
    with pytest.raises(ValueError, match="shorter"):
        convolve(np.ones(10), dk)
    with pytest.raises(ValueError, match="method"):
        convolve(f, dk, method="spectral")


@settings(max_examples=50, deadline=None)
@given(sigma=st.floats(0.2, 3.0), dx=st.floats(0.02, 0.2))
def test_discretized_gaussian_is_a_probability_stencil(sigma, dx):
    dk = discretize(KernelSpec.gaussian(sigma), dx)
    assert dk.weights.min() >= 0
    assert dk.weights.sum() == pytest.approx(1.0, abs=1e-12)
    # sampling a smooth density is spectrally accurate in its moments
    assert np.dot(dk.weights, dk.offsets**2) == pytest.approx(sigma**2, rel=1e-6)
