"""Bessel evaluation, J1 zeros and the discrete eigenbasis.

Oracles: mpmath (arbitrary precision, independent of scipy) for J0/J1 and
their zeros, scipy.special.jv for bulk checks.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import jv, jn_zeros

from shmf import bessel_core as bc
from shmf.errors import DomainError


@pytest.mark.parametrize("order", [0, 1])
@pytest.mark.parametrize("y", [0.0, 1e-6, 0.3, 2.5, 4.999, 5.0, 7.7, 13.1, 24.99, 25.0, 40.0, 300.0, 9.9e5])
def test_bessel_matches_mpmath(order, y):
    # oracle: mpmath.besselj at 30 digits
    want = float(mpmath.besselj(order, mpmath.mpf(y)))
    assert bc.eval_bessel(order, y) == pytest.approx(want, abs=1e-13, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=50.0, allow_nan=False))
def test_bessel_matches_scipy_property(y):
    for order in (0, 1):
        assert abs(bc.eval_bessel(order, y) - jv(order, y)) < 1e-12


def test_bessel_array_shape_preserved():
    y = np.linspace(0, 60, 24).reshape(4, 6)
    out = bc.bessel_j(1, y)
    assert out.shape == (4, 6)
    np.testing.assert_allclose(out, jv(1, y), atol=1e-12)


@pytest.mark.parametrize("bad", [-1.0, math.nan, math.inf, 2e6])
def test_bessel_rejects_bad_argument(bad):
    with pytest.raises(DomainError):
        bc.bessel_j(0, bad)


def test_bessel_rejects_other_orders():
    with pytest.raises(DomainError):
        bc.bessel_j(2, 1.0)


def test_j1_prime_against_recurrence():
    # oracle: J1' = (J0 - J2)/2 from scipy
    y = np.array([0.0, 1e-9, 0.5, 3.0, 17.0, 80.0])
    want = 0.5 * (jv(0, y) - jv(2, y))
    np.testing.assert_allclose(bc.bessel_j1_prime(y), want, atol=1e-12)


def test_first_zeros_against_mpmath():
    zs = bc.compute_zeros(10)
    for k, z in enumerate(zs, start=1):
        # oracle: mpmath.besseljzero at 30 digits
        assert z == pytest.approx(float(mpmath.besseljzero(1, k)), abs=1e-12)


def test_many_zeros_against_scipy():
    zs = bc.compute_zeros(1000)
    np.testing.assert_allclose(zs, jn_zeros(1, 1000), rtol=1e-12)
    assert np.all(np.diff(zs) > 0)


def test_zero_gaps_approach_pi():
    # interlacing: consecutive zeros of J1 are eventually pi apart
    zs = bc.compute_zeros(400)
    assert abs(zs[-1] - zs[-2] - math.pi) < 1e-4


def test_mcmahon_is_close():
    k = np.arange(1, 50)
    assert np.max(np.abs(bc.mcmahon_guess(k) - jn_zeros(1, 49))) < 1e-3


def test_gauss_legendre_unit_integrates_polynomials():
    r, w = bc.gauss_legendre_unit(20)
    assert np.all((r > 0) & (r < 1))
    for p in range(0, 39):
        assert np.dot(w, r**p) == pytest.approx(1.0 / (p + 1), rel=1e-13)


@pytest.mark.parametrize("n", [1, 8, 32, 128])
def test_basis_is_orthonormal(n):
    b = bc.build_basis(n)
    assert np.max(np.abs(b.gram() - np.eye(n))) < 1e-10


def test_norm_consts_closed_form(basis64):
    want = math.sqrt(2.0) / np.abs(jv(0, basis64.zeros))
    np.testing.assert_allclose(basis64.norm_consts, want, rtol=1e-12)


def test_eigen_relation_on_grid(basis32):
    # A e_k = -x_k^2 e_k; check with scipy's J1 derivatives at off-grid points
    r = np.linspace(0.05, 0.95, 9)
    x = basis32.zeros[:5]
    c = basis32.norm_consts[:5]
    y = np.outer(r, x)
    e = c * jv(1, y)
    e1 = c * x * 0.5 * (jv(0, y) - jv(2, y))
    e2 = c * x * x * 0.25 * (jv(-1, y) - 2 * jv(1, y) + jv(3, y))
    Ae = e2 + e1 / r[:, None] - e / (r[:, None] ** 2)
    np.testing.assert_allclose(Ae, -(x**2) * e, atol=1e-9)


def test_eval_at_matches_eval_matrix(basis32):
    np.testing.assert_allclose(basis32.eval_at(basis32.quad_nodes), basis32.eval_matrix, atol=1e-13)
    np.testing.assert_allclose(basis32.deriv_at(basis32.quad_nodes), basis32.deriv_matrix, atol=1e-11)


def test_build_basis_rejects_small_quadrature():
    with pytest.raises(DomainError):
        bc.build_basis(16, 20)
    with pytest.raises(DomainError):
        bc.build_basis(0)


def test_cache_round_trip(tmp_path):
    b1 = bc.build_basis(24, cache_dir=tmp_path)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    zeros, norms = bc.read_cache(files[0])
    np.testing.assert_array_equal(zeros, b1.zeros)
    b2 = bc.build_basis(24, cache_dir=tmp_path)
    np.testing.assert_array_equal(b2.zeros, b1.zeros)


def test_corrupt_cache_is_ignored(tmp_path):
    bc.build_basis(12, cache_dir=tmp_path)
    f = next(tmp_path.iterdir())
    f.write_bytes(b"garbage")
    assert bc.read_cache(f) is None
    b = bc.build_basis(12, cache_dir=tmp_path)
    np.testing.assert_allclose(b.zeros, jn_zeros(1, 12), rtol=1e-12)


def test_norm_consts_grow_linearly(basis128):
    # c_k^2 = 2 / J0(x_k)^2 ~ pi x_k ~ pi^2 k: the ratio c_k^2 / k stays bounded and settles
    ratio = basis128.norm_consts**2 / np.arange(1, 129)
    assert np.all(ratio < 13.0)
    assert ratio[-1] == pytest.approx(math.pi**2, rel=1e-2)
