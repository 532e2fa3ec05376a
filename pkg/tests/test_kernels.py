import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nestgp.errors import DomainError
from nestgp.kernels import (
    KernelSpec,
    NoiseSpec,
    apply_noise,
    build_corr_matrix,
    cross_corr,
    matern_corr,
    pairwise_sqe_corr,
    sqe_corr,
)
from nestgp.numerics import cholesky, make_rng

pos = st.floats(0.05, 50)
coord = st.floats(-20, 20)


def test_sqe_examples():
    assert sqe_corr(3.0, 3.0, 0.7, 2.0) == 1.0
    assert sqe_corr(0, 1, 1, 1) == pytest.approx(math.exp(-0.5), abs=1e-12)


@given(coord, coord, pos, pos)
def test_sqe_symmetry(a, b, l1, l2):
    assert sqe_corr(a, b, l1, l2) == sqe_corr(b, a, l2, l1)


@given(st.floats(0.01, 10), st.floats(0.01, 10), pos)
def test_sqe_monotone_in_distance_and_scale(d1, d2, ell):
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    assert sqe_corr(0, lo, ell, ell) > sqe_corr(0, hi, ell, ell)
    assert sqe_corr(0, lo, ell, ell) < sqe_corr(0, lo, ell * 1.5, ell * 1.5)


@pytest.mark.parametrize("ell", [0.0, -1.0])
def test_sqe_domain(ell):
    with pytest.raises(DomainError):
        sqe_corr(0, 1, ell, 1.0)


def test_matern_examples():
    assert matern_corr(2.0, 2.0, 1.0, 1.5) == 1.0
    assert matern_corr(0, 2, 1, 0.5) == pytest.approx(math.exp(-2), rel=1e-10)
    assert matern_corr(0, 1, 1, 1.5) == pytest.approx((1 + math.sqrt(3)) * math.exp(-math.sqrt(3)),
                                                      rel=1e-10)


@pytest.mark.parametrize("r", np.geomspace(1e-3, 10, 30))
def test_matern_half_integer_closed_forms(r):
    s3, s5 = math.sqrt(3) * r, math.sqrt(5) * r
    assert matern_corr(0, r, 1, 0.5) == pytest.approx(math.exp(-r), rel=1e-8)
    assert matern_corr(0, r, 1, 1.5) == pytest.approx((1 + s3) * math.exp(-s3), rel=1e-8)
    assert matern_corr(0, r, 1, 2.5) == pytest.approx((1 + s5 + s5**2 / 3) * math.exp(-s5),
                                                      rel=1e-8)


def test_matern_tiny_distance_is_one():
    assert matern_corr(0, 1e-14, 1.0, 2.0) == 1.0


@pytest.mark.parametrize("ell, nu", [(0, 1), (1, 0), (-1, 1)])
def test_matern_domain(ell, nu):
    with pytest.raises(DomainError):
        matern_corr(0, 1, ell, nu)


@given(st.floats(0.01, 30), pos, st.floats(0.2, 6))
@settings(max_examples=100)
def test_matern_in_unit_interval(d, ell, nu):
    v = matern_corr(0, d, ell, nu)
    assert 0 <= v < 1


def test_pairwise_examples():
    assert pairwise_sqe_corr(1.0, 1.0, 3.0) == 1.0
    assert pairwise_sqe_corr(0, 1, 1) == pytest.approx(math.exp(-1), abs=1e-12)
    with pytest.raises(DomainError):
        pairwise_sqe_corr(0, 1, 0)


def test_kernel_spec_validation():
    with pytest.raises(DomainError):
        KernelSpec("rbf")
    with pytest.raises(DomainError):
        KernelSpec("sqe", ell=0)
    with pytest.raises(DomainError):
        KernelSpec("matern", ell=1)
    with pytest.raises(DomainError):
        KernelSpec("pairwise-sqe")
    assert KernelSpec.from_thetas("matern", (2.0, 1.5)) == KernelSpec("matern-looking", 2.0, 1.5)


def test_build_corr_matrix_small_cases():
    assert np.array_equal(build_corr_matrix([4.2], KernelSpec("sqe")), [[1.0]])
    x = [0.0, 1.0, 2.0]
    m = build_corr_matrix(x, KernelSpec("sqe", ell=1.0))
    expected = [[sqe_corr(a, b, 1.0, 1.0) for b in x] for a in x]
    assert np.allclose(m, expected, rtol=0, atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_build_corr_matrix_is_psd(seed):
    x = make_rng(seed).uniform(0, 10, 5)
    for spec in (KernelSpec("sqe", ell=1.3), KernelSpec("matern", ell=1.3, nu=2.0)):
        m = build_corr_matrix(x, spec)
        assert np.array_equal(m, m.T) and np.all(np.diag(m) == 1)
        assert cholesky(m, max_jitter=1e-8).jitter <= 1e-8


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-100, 100))
@settings(max_examples=100)
def test_translation_invariance(x, c):
    x = np.array(x)
    for spec in (KernelSpec("sqe", ell=2.0), KernelSpec("matern", ell=2.0, nu=1.5)):
        a = build_corr_matrix(x, spec)
        b = build_corr_matrix(x + c, spec)
        assert np.allclose(a, b, rtol=0, atol=1e-9)


def test_build_corr_matrix_rejects_nonfinite():
    with pytest.raises(DomainError):
        build_corr_matrix([0.0, np.nan], KernelSpec("sqe"))


def test_cross_corr_shape():
    k = cross_corr([0, 1, 2], [0.5, 1.5], KernelSpec("sqe", ell=1.0))
    assert k.shape == (3, 2)


def test_apply_noise():
    m = np.eye(2)
    assert apply_noise(m, NoiseSpec(0.0, 4.0)) is m
    assert np.allclose(apply_noise(m, NoiseSpec(0.01, 4.0)), np.diag([1.0025, 1.0025]))
    r = build_corr_matrix([0, 1, 3], KernelSpec("sqe", ell=1))
    assert np.all(np.diag(apply_noise(r, NoiseSpec(0.1, 2.0))) > np.diag(r))
    with pytest.raises(DomainError):
        NoiseSpec(-1.0)
