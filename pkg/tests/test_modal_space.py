"""Modal fields, diagonal operators and norms."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from shmf import modal_space as ms
from shmf.blowup_lab import chi, chi_prime
from shmf.errors import DomainError, UsageError


def test_unit_vector_norms(basis32):
    # |e_k|_beta = x_k^beta directly from the definition
    for k in (1, 5, 32):
        e = ms.ModalField.unit(basis32, k)
        assert ms.norm_beta(e, 1.7) == pytest.approx(basis32.zeros[k - 1] ** 1.7, rel=1e-14)


def test_field_is_immutable_and_checked(basis32, basis64):
    f = ms.ModalField.zeros(basis32)
    with pytest.raises(ValueError):
        f.coeffs[0] = 1.0
    with pytest.raises(UsageError):
        ms.ModalField(np.zeros(3), basis32)
    with pytest.raises(UsageError):
        f + ms.ModalField.zeros(basis64)


def test_linear_algebra(basis32):
    a = ms.ModalField.unit(basis32, 1)
    b = ms.ModalField.unit(basis32, 2)
    c = 2.0 * a - b + (-a)
    np.testing.assert_array_equal(c.coeffs[:3], [1.0, -1.0, 0.0])


def test_chi_round_trip(basis128):
    # oracle: chi in closed form at off-grid points
    f = ms.project(lambda r: chi(1.0, r), basis128)
    r = np.linspace(0.0, 1.0, 41)
    assert np.max(np.abs(ms.evaluate(f, r) - chi(1.0, r))) < 1e-6
    assert np.max(np.abs(ms.evaluate_derivative(f, r[1:-1]) - chi_prime(1.0, r[1:-1]))) < 1e-3


def test_gradient_at_origin_of_chi(basis128):
    # chi_k'(0) = 2k
    f = ms.project(lambda r: chi(3.0, r), basis128)
    assert ms.gradient_at_origin(f) == pytest.approx(6.0, rel=1e-4)


def test_analyze_synthesize_inverse(basis64):
    rng = np.random.default_rng(1)
    f = ms.ModalField(rng.standard_normal(64), basis64)
    g = ms.analyze(ms.synthesize(f), basis64)
    np.testing.assert_allclose(g.coeffs, f.coeffs, atol=1e-11)
    with pytest.raises(UsageError):
        ms.analyze(np.zeros(5), basis64)


def test_semigroup_and_fractional_powers(basis32):
    e = ms.ModalField.unit(basis32, 3)
    x = basis32.zeros[2]
    assert ms.semigroup(e, 0.01).coeffs[2] == pytest.approx(math.exp(-x * x * 0.01))
    assert ms.apply_fractional(e, 0.5).coeffs[2] == pytest.approx(x)
    assert ms.semigroup(e, 0.0) is e
    with pytest.raises(DomainError):
        ms.semigroup(e, -1.0)


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.05, 1.95), t=st.floats(1e-4, 1.0), beta=st.floats(0.0, 3.0),
       seed=st.integers(0, 2**32 - 1))
def test_smoothing_bound(basis64, alpha, t, beta, seed):
    # sup_x x^(2a) e^(-x^2 t) = (a/e)^a t^-a, so the bound holds for every field
    rng = np.random.default_rng(seed)
    f = ms.ModalField(rng.standard_normal(64) * basis64.zeros ** (-beta - 1), basis64)
    lhs = ms.norm_beta(ms.apply_fractional(ms.semigroup(f, t), alpha), beta)
    rhs = ms.smoothing_constant(alpha, t) * ms.norm_beta(f, beta)
    assert lhs <= rhs * (1 + 1e-12)


def test_smoothing_bound_is_sharp(basis64):
    # equality is approached at the mode with x_k^2 closest to alpha/t
    alpha, t = 0.75, 1e-3
    k = int(np.argmin(np.abs(basis64.zeros**2 - alpha / t)))
    e = ms.ModalField.unit(basis64, k + 1)
    ratio = ms.norm_beta(ms.apply_fractional(ms.semigroup(e, t), alpha), 1.0) / ms.norm_beta(e, 1.0)
    assert ratio / ms.smoothing_constant(alpha, t) > 0.99


def test_trajectory_norm(basis32):
    snaps = [ms.ModalField.unit(basis32, k) for k in (1, 2, 3)]
    assert ms.trajectory_norm(snaps, 1.0) == pytest.approx(basis32.zeros[2])
    assert ms.trajectory_norm([], 1.0) == 0.0


def test_h2_seminorm_of_chi(basis128):
    # oracle: scipy quad on the closed-form derivatives of chi_1
    f = ms.project(lambda r: chi(1.0, r), basis128)

    def dens(r):
        h, hr, hrr = chi(1.0, r), chi_prime(1.0, r), -18 * r + 20 * r**3
        return (hrr**2 + (hr / r - h / r**2) ** 2) * r

    want, _ = quad(dens, 0.0, 1.0, limit=200)
    assert ms.h2_seminorm_sq(f) == pytest.approx(want, rel=1e-3)
