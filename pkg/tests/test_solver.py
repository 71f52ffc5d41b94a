"""Exponential Euler driver, blow-up predicate and the Picard slab iteration."""
from __future__ import annotations

import math
from collections import deque

import numpy as np
import pytest

from shmf import solver as sv
from shmf.blowup_lab import chi
from shmf.errors import ContractionError, DomainError, ValidationError
from shmf.modal_space import ModalField, project, semigroup
from shmf.noise import ZeroPath


def small_cfg(**kw):
    base = dict(n_modes=32, t_end=0.05, dt_init=1e-4, dt_min=1e-6)
    base.update(kw)
    return sv.SolverConfig(**base)


def test_config_validation():
    with pytest.raises(ValidationError):
        sv.SolverConfig(dt_min=1e-3, dt_init=1e-4).validate()
    with pytest.raises(ValidationError):
        sv.SolverConfig(scheme="rk4").validate()


def test_phi1():
    w = np.array([0.0, -1e-12, -1.0, -700.0])
    np.testing.assert_allclose(sv.phi1(w), [1.0, 1.0, 1 - math.exp(-1), 1 / 700], rtol=1e-12)


def test_linear_flow_is_exact(basis32):
    # with b switched off the scheme reproduces S(t) h0 to rounding
    h0 = project(lambda r: chi(1.0, r), basis32)
    tr = sv.run(h0, small_cfg(), nonlinear=False)
    assert tr.status == sv.COMPLETED
    np.testing.assert_allclose(tr.final_h.coeffs, semigroup(h0, 0.05).coeffs, atol=1e-13)


def test_zero_stays_zero(basis32):
    tr = sv.run(ModalField.zeros(basis32), small_cfg())
    assert tr.status == sv.COMPLETED
    assert not np.any(tr.final_h.coeffs)
    assert tr.times[-1] == pytest.approx(0.05)


def test_first_order_convergence(basis32):
    # fixed steps: halving dt roughly halves the error against a fine reference
    h0 = project(lambda r: chi(1.5, r), basis32)
    ref = sv.run(h0, small_cfg(adaptive=False, dt_init=2.5e-6, dt_min=1e-7)).final_h.coeffs
    errs = []
    for dt in (4e-4, 2e-4, 1e-4):
        c = sv.run(h0, small_cfg(adaptive=False, dt_init=dt, dt_min=1e-7)).final_h.coeffs
        errs.append(np.max(np.abs(c - ref)))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(1.7 < r < 2.3 for r in ratios), ratios


def test_energy_decreases_without_noise(basis64):
    h0 = project(lambda r: chi(1.0, r), basis64)
    tr = sv.run(h0, small_cfg(n_modes=64, t_end=0.1))
    e = np.array(tr.energies)
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_output_times_are_hit(basis32):
    h0 = project(lambda r: chi(1.0, r), basis32)
    tr = sv.run(h0, small_cfg(output_times=(0.0, 0.0123, 0.04)))
    assert sorted(tr.output_grids) == [0.0, 0.0123, 0.04]
    assert 0.0123 in tr.times


def test_csv_format(basis32):
    tr = sv.run(ModalField.zeros(basis32), small_cfg(t_end=1e-3))
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,norm_beta,grad0,energy,status"
    assert lines[-1].endswith(",completed")


def _state(basis, dt, norms):
    return sv.SolverState(time=0.0, v=np.zeros(basis.n_modes), basis=basis, path=ZeroPath(basis),
                          dt=dt, recent_norms=deque(norms, maxlen=6))


def test_detect_blowup_needs_all_three_conditions(basis32):
    cfg = small_cfg(dt_min=1e-5, blowup_grad_threshold=100.0)
    up = [1, 2, 3, 4, 5, 6]
    assert sv.detect_blowup(_state(basis32, 1e-6, up), cfg, grad0=200.0) == sv.BLOWN_UP
    assert sv.detect_blowup(_state(basis32, 1e-6, up), cfg, grad0=50.0) == sv.RUNNING
    assert sv.detect_blowup(_state(basis32, 1e-4, up), cfg, grad0=200.0) == sv.RUNNING
    assert sv.detect_blowup(_state(basis32, 1e-6, [1, 2, 3, 3, 5, 6]), cfg, grad0=200.0) == sv.RUNNING
    assert sv.detect_blowup(_state(basis32, 1e-6, up[:5]), cfg, grad0=200.0) == sv.RUNNING


def test_step_expo_euler_single(basis32):
    st = _state(basis32, 1e-3, [])
    st.v = np.array(project(lambda r: chi(1.0, r), basis32).coeffs)
    out = sv.step_expo_euler(st, nonlinear=False)
    np.testing.assert_allclose(out.v, np.exp(-basis32.zeros**2 * 1e-3) * st.v)
    assert out.time == pytest.approx(1e-3) and out.n_steps == 1
    out.status = sv.COMPLETED
    with pytest.raises(DomainError):
        sv.step_expo_euler(out)


def test_chebyshev_and_lagrange():
    nodes = sv.chebyshev_lobatto(2.0, 8)
    assert nodes[0] == 0.0 and nodes[-1] == pytest.approx(2.0)
    x = np.linspace(0, 2, 13)
    L = sv.lagrange_matrix(nodes, x)
    np.testing.assert_allclose(L @ nodes**3, x**3, atol=1e-12)
    np.testing.assert_allclose(L.sum(axis=1), 1.0, atol=1e-13)


def test_duhamel_weights_against_closed_form():
    # oracle: int_0^t e^{-a(t-s)} ds = (1 - e^{-a t}) / a, and the Lagrange
    # weights sum to the integral of the constant 1
    nodes = sv.chebyshev_lobatto(0.1, 16)
    rates = np.array([0.0, 1.0, 50.0, 1e4, 1e6])
    W = sv.duhamel_weights(rates, nodes)
    t = nodes[-1]
    want = np.array([t] + [-math.expm1(-a * t) / a for a in rates[1:]])
    np.testing.assert_allclose(W[:, -1, :].sum(axis=1), want, rtol=1e-10)


def test_picard_linear_converges_at_once(basis32):
    v0 = np.array(project(lambda r: chi(1.0, r), basis32).coeffs)
    rep = sv.picard_slab(basis32, v0, 0.01, 1.5, nonlinear=False)
    # the first sweep lands on S(t) v0; the second confirms it with a zero update
    assert rep.sweeps == 2 and rep.diffs[-1] == 0.0
    np.testing.assert_allclose(rep.v_nodes[-1], np.exp(-basis32.zeros**2 * 0.01) * v0, atol=1e-14)


def test_picard_contracts_for_small_data(basis32):
    v0 = np.array(project(lambda r: chi(1.0, r), basis32).coeffs)
    rep = sv.picard_slab(basis32, v0, 0.01, 1.5)
    assert rep.max_ratio < 0.5
    with pytest.raises(DomainError):
        sv.picard_slab(basis32, v0, 0.0, 1.5)


def test_picard_failure_is_reported(basis32):
    v0 = np.array(project(lambda r: chi(1.0, r), basis32).coeffs)
    with pytest.raises(ContractionError):
        sv.picard_slab(basis32, v0, 0.01, 1.5, max_sweeps=1, tol=1e-30)


def test_slab_length_recipe():
    c = sv.GrowthConstants(1.5, 0.04, 0.02)
    a = 0.75
    c1 = 4 * 0.04 * (a / math.e) ** a / (1 - a)
    c2 = 2 * 0.02 * (a / math.e) ** a / (1 - a)
    assert c.c1() == pytest.approx(c1) and c.c2() == pytest.approx(c2)
    R = 3.0
    want = min(1 / (4 * c1 * R**3), 1 / (8 * c2 * R**2)) ** (1 / (1 - a))
    assert sv.slab_length(2.0, 1.0, c) == pytest.approx(want)
    with pytest.raises(DomainError):
        sv.slab_length(1.0, 1.0, sv.GrowthConstants(2.5, 0.04, 0.02))


def test_step_picard_agrees_with_expo_euler(basis32):
    h0 = project(lambda r: chi(1.0, r), basis32)
    st = sv.initial_state(h0, small_cfg(), ZeroPath(basis32))
    out = sv.step_picard(st, small_cfg(), sv.GrowthConstants(1.5, 0.04, 0.02))
    ref = sv.run(h0, small_cfg(t_end=out.time, rtol=1e-8, atol=1e-10, dt_min=1e-9))
    assert np.max(np.abs(out.v - ref.final_h.coeffs)) < 1e-4
