"""The corotational nonlinearity b(r, h) = (2h - sin 2h) / (2 r^2) and energies."""
from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from shmf import dynamics as dy
from shmf.blowup_lab import chi, chi_prime
from shmf.modal_space import ModalField, project


@settings(max_examples=300, deadline=None)
@given(st.floats(-20.0, 20.0, allow_nan=False))
def test_two_x_minus_sin_matches_mpmath(h):
    # oracle: mpmath with enough digits to absorb the cancellation (~3 log10(1/h))
    dps = 40 + int(3 * abs(math.log10(abs(h)))) if h else 40
    with mpmath.workdps(dps):
        want = float(2 * mpmath.mpf(h) - mpmath.sin(2 * mpmath.mpf(h)))
    got = float(dy.two_x_minus_sin(np.array(h)))
    assert got == pytest.approx(want, rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("h", [1e-8, 1e-5, 1e-3, 0.1, 0.49, 0.51])
def test_small_h_leading_term(h):
    # 2h - sin 2h = (4/3) h^3 - (4/15) h^5 + ...
    got = float(dy.two_x_minus_sin(np.array(h)))
    assert got == pytest.approx(4 / 3 * h**3 - 4 / 15 * h**5, rel=1e-2 * h**2 + 1e-14)


@settings(max_examples=100, deadline=None)
@given(r=st.floats(1e-3, 1.0), h=st.floats(-5, 5))
def test_b_is_odd_in_h(r, h):
    a = dy.b_kernel(np.array(r), np.array(h))
    b = dy.b_kernel(np.array(r), np.array(-h))
    assert float(a) == -float(b)


def test_b_monotone_in_h():
    # d/dh (2h - sin 2h) = 2 - 2cos 2h >= 0
    h = np.linspace(-6, 6, 2001)
    assert np.all(np.diff(dy.b_kernel(np.full_like(h, 0.3), h)) >= 0)


def test_eval_b_dyadic_convergence():
    # |b(chi_1)|_H converges as the basis is refined; successive gaps shrink
    from shmf.bessel_core import build_basis

    vals = []
    for n in (16, 32, 64, 128):
        b = build_basis(n)
        vals.append(dy.eval_b(project(lambda r: chi(1.0, r), b)).norm_h())
    gaps = np.abs(np.diff(vals))
    assert gaps[-1] < gaps[0]
    # oracle: scipy quad of the closed-form integrand
    want = math.sqrt(quad(lambda r: (dy.b_kernel(np.array(r), chi(1.0, r))) ** 2 * r, 0, 1)[0])
    assert vals[-1] == pytest.approx(want, rel=1e-4)


def test_corotational_energy_of_chi(basis128):
    f = project(lambda r: chi(0.7, r), basis128)
    # oracle: scipy quad
    want = math.pi * quad(lambda r: (chi_prime(0.7, r) ** 2 + math.sin(chi(0.7, r)) ** 2 / r**2) * r,
                          0, 1, limit=200)[0]
    assert dy.corotational_energy(f) == pytest.approx(want, rel=1e-5)


def test_energy_small_angle_limit(basis64):
    f = project(lambda r: 1e-4 * chi(1.0, r), basis64)
    assert dy.corotational_energy(f) == pytest.approx(dy.linearized_energy(f), rel=1e-7)
    # sin^2 h <= h^2 so the full energy never exceeds the linearized one
    g = project(lambda r: chi(3.0, r), basis64)
    assert dy.corotational_energy(g) <= dy.linearized_energy(g)


def test_growth_and_lipschitz_ratios(basis64):
    rng = np.random.default_rng(3)
    u = dy._random_direction(basis64, 1.5, rng)
    assert math.sqrt(np.sum(basis64.zeros**3 * u * u)) == pytest.approx(1.0)
    g1 = dy.growth_ratio(basis64, 1e-3 * u, 1.5)
    g2 = dy.growth_ratio(basis64, 2e-3 * u, 1.5)
    # the cubic leading term makes the ratio scale-invariant for small fields
    assert g1 == pytest.approx(g2, rel=1e-5)
    cg, cl = dy.estimate_growth_constants(basis64, 1.5, n_samples=5)
    assert 0 < cg < 1 and 0 < cl < 1


def test_shifted_evaluation(basis32):
    f = ModalField.unit(basis32, 1)
    z = np.zeros(basis32.n_quad)
    np.testing.assert_array_equal(dy.eval_b_shifted(f, z).grid_values, dy.eval_b(f).grid_values)
