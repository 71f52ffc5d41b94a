"""Time integration of the translated equation dv/dt = A v + b(r, v + z).

The production path is the exponential Euler scheme with step-doubling error
control; :func:`step_picard` iterates the mild-solution map on a short slab
and serves as an independent check.  The solution is always reconstructed as
``h = v + z`` where ``z`` is supplied by a noise path object exposing
``coeffs_at(t)``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .bessel_core import EigenBasis, gauss_legendre_unit
from .dynamics import b_kernel, energy_from_grid
from .errors import ContractionError, DomainError, ValidationError
from .modal_space import ModalField, norm_beta_coeffs
from .noise import NoisePath, ZeroPath

logger = logging.getLogger(__name__)

RUNNING = "running"
BLOWN_UP = "blown_up"
COMPLETED = "completed"
STALLED = "stalled"


@dataclass(frozen=True)
class SolverConfig:
    n_modes: int = 128
    n_quad: int | None = None
    beta: float = 2.5
    dt_init: float = 1.0e-4
    dt_min: float = 1.0e-5
    dt_max: float = 1.0e-2
    dt_floor: float = 1.0e-13
    safety: float = 0.8
    rtol: float = 1.0e-4
    atol: float = 1.0e-6
    blowup_grad_threshold: float = 1.0e3
    blowup_norm_threshold: float = 1.0e8
    t_end: float = 1.0
    scheme: str = "expo_euler"
    adaptive: bool = True
    noise_clock_dt: float = 1.0e-3
    snapshot_every: int = 1
    max_steps: int = 2_000_000
    extra_betas: tuple[float, ...] = ()
    output_times: tuple[float, ...] = ()

    def validate(self) -> "SolverConfig":
        if not 0.0 < self.dt_min < self.dt_init:
            raise ValidationError("need 0 < dt_min < dt_init")
        if not self.dt_floor < self.dt_min:
            raise ValidationError("need dt_floor < dt_min")
        if self.blowup_grad_threshold <= 0 or self.blowup_norm_threshold <= 0:
            raise ValidationError("blow-up thresholds must be positive")
        if self.scheme not in ("expo_euler", "picard_verify"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.t_end <= 0:
            raise ValidationError("t_end must be positive")
        if self.snapshot_every < 1:
            raise ValidationError("snapshot_every must be >= 1")
        return self


@dataclass
class SolverState:
    """Mutable integrator state; ``h = v + z`` is reconstructed on demand."""

    time: float
    v: np.ndarray
    basis: EigenBasis = field(repr=False)
    path: object = field(repr=False)
    dt: float = 1.0e-4
    status: str = RUNNING
    message: str = ""
    n_steps: int = 0
    n_rejected: int = 0
    recent_norms: deque = field(default_factory=lambda: deque(maxlen=6))
    last_picard: "PicardReport | None" = None

    @property
    def ou(self):
        return self.path.state_at(self.time)

    @property
    def v_field(self) -> ModalField:
        return ModalField(self.v, self.basis, self.time)

    def z_coeffs(self) -> np.ndarray:
        return self.path.coeffs_at(self.time)

    def h_coeffs(self) -> np.ndarray:
        return self.v + self.z_coeffs()

    def h_field(self) -> ModalField:
        return ModalField(self.h_coeffs(), self.basis, self.time)


@dataclass
class Trajectory:
    """Snapshot series of one run plus its terminal status."""

    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    grads: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    extra_norms: dict = field(default_factory=dict)
    status: str = RUNNING
    tau_numeric: float = math.nan
    message: str = ""
    n_steps: int = 0
    n_rejected: int = 0
    final_h: ModalField | None = None
    output_grids: dict = field(default_factory=dict)
    output_fields: dict = field(default_factory=dict)
    seed: int = 0
    path_index: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "norm_beta", "grad0", "energy", "status"])
        for row in zip(self.times, self.norms, self.grads, self.energies, self.statuses):
            w.writerow([fmt(row[0]), fmt(row[1]), fmt(row[2]), fmt(row[3]), row[4]])
        return buf.getvalue()

    def as_arrays(self):
        return (np.asarray(self.times), np.asarray(self.norms),
                np.asarray(self.grads), np.asarray(self.energies))


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def phi1(w: np.ndarray) -> np.ndarray:
    """(e^w - 1)/w with phi1(0) = 1, via expm1."""
    w = np.asarray(w, dtype=float)
    safe = np.where(w == 0.0, 1.0, w)
    return np.where(w == 0.0, 1.0, np.expm1(safe) / safe)


def b_coeffs(basis: EigenBasis, h_coeffs: np.ndarray, nonlinear: bool = True) -> np.ndarray:
    """Modal coefficients of b(., h) by pseudo-spectral evaluation on the grid."""
    if not nonlinear:
        return np.zeros_like(h_coeffs)
    grid = basis.eval_matrix @ h_coeffs
    vals = b_kernel(basis.quad_nodes, grid)
    return (basis.quad_weights * vals) @ basis.eval_matrix


def expo_euler_update(basis: EigenBasis, v: np.ndarray, bk: np.ndarray, dt: float) -> np.ndarray:
    lam = basis.zeros**2
    return np.exp(-lam * dt) * v + dt * phi1(-lam * dt) * bk


def step_expo_euler(state: SolverState, cfg: SolverConfig | None = None,
                    nonlinear: bool = True) -> SolverState:
    """One exponential Euler step of size ``state.dt`` (no error control).

    v_k <- exp(-x_k^2 dt) v_k + dt phi1(-x_k^2 dt) b_k(v + z at t).
    """
    if state.status != RUNNING:
        raise DomainError(f"cannot step a {state.status} state")
    basis = state.basis
    bk = b_coeffs(basis, state.h_coeffs(), nonlinear)
    v_new = expo_euler_update(basis, state.v, bk, state.dt)
    out = replace(state, v=v_new, time=state.time + state.dt, n_steps=state.n_steps + 1,
                  recent_norms=deque(state.recent_norms, maxlen=6))
    if not np.all(np.isfinite(v_new)):
        out.status = STALLED
        out.message = f"non-finite coefficients at t={out.time:.6g}"
    return out


# ---------------------------------------------------------------------------
# blow-up predicate
# ---------------------------------------------------------------------------

def detect_blowup(state: SolverState, cfg: SolverConfig, grad0: float | None = None) -> str:
    """blown_up iff grad at origin >= G, dt <= dt_min and |h|_beta grew over 5 steps."""
    if state.status != RUNNING:
        return state.status
    if grad0 is None:
        b = state.basis
        grad0 = 0.5 * float(np.dot(state.h_coeffs(), b.norm_consts * b.zeros))
    norms = list(state.recent_norms)
    growing = len(norms) >= 6 and all(b > a for a, b in zip(norms[:-1], norms[1:]))
    if grad0 >= cfg.blowup_grad_threshold and state.dt <= cfg.dt_min and growing:
        return BLOWN_UP
    return RUNNING


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

class _Diagnostics:
    def __init__(self, basis: EigenBasis, cfg: SolverConfig):
        self.basis = basis
        self.cfg = cfg
        self.grad_w = 0.5 * basis.norm_consts * basis.zeros

    def compute(self, h: np.ndarray) -> tuple[float, float, float]:
        b = self.basis
        norm = norm_beta_coeffs(h, b.zeros, self.cfg.beta)
        grad0 = float(np.dot(h, self.grad_w))
        energy = energy_from_grid(b, b.eval_matrix @ h, b.deriv_matrix @ h)
        return norm, grad0, energy


def initial_state(h0: ModalField, cfg: SolverConfig, path) -> SolverState:
    z0 = path.coeffs_at(0.0)
    return SolverState(time=0.0, v=np.array(h0.coeffs) - z0, basis=h0.basis, path=path,
                       dt=cfg.dt_init)


def run(h0: ModalField, cfg: SolverConfig, spectrum=None, seed: int = 0, path_index: int = 0,
        path=None, nonlinear: bool = True) -> Trajectory:
    """Integrate from ``h0`` until ``t_end``, blow-up or stall.

    The noise enters through ``path`` (anything with ``coeffs_at``); when it
    is omitted a :class:`NoisePath` is built from ``spectrum``/``seed``/
    ``path_index``, or a zero path if ``spectrum`` is None.
    """
    cfg.validate()
    basis = h0.basis
    if path is None:
        if spectrum is None or spectrum.is_silent:
            path = ZeroPath(basis)
        else:
            path = NoisePath(spectrum, basis, seed, path_index, cfg.noise_clock_dt)
    state = initial_state(h0, cfg, path)
    traj = Trajectory(seed=seed, path_index=path_index)
    for beta in cfg.extra_betas:
        traj.extra_norms[beta] = []
    diag = _Diagnostics(basis, cfg)
    lam = basis.zeros**2
    outputs = sorted(t for t in cfg.output_times if 0.0 <= t <= cfg.t_end)
    out_idx = 0

    def record(h: np.ndarray, status: str, force: bool = False):
        norm, grad0, energy = diag.compute(h)
        state.recent_norms.append(norm)
        if force or state.n_steps % cfg.snapshot_every == 0:
            traj.times.append(state.time)
            traj.norms.append(norm)
            traj.grads.append(grad0)
            traj.energies.append(energy)
            traj.statuses.append(status)
            for beta in cfg.extra_betas:
                traj.extra_norms[beta].append(norm_beta_coeffs(h, basis.zeros, beta))
        return norm, grad0

    def store_output(h: np.ndarray):
        traj.output_grids[state.time] = basis.eval_matrix @ h
        traj.output_fields[state.time] = ModalField(h, basis, state.time)

    h = state.h_coeffs()
    record(h, RUNNING, force=True)
    if outputs and outputs[0] == 0.0:
        store_output(h)
        out_idx = 1

    dt = cfg.dt_init
    while True:
        if state.time >= cfg.t_end - 1e-14 * max(1.0, cfg.t_end):
            state.status = COMPLETED
            break
        if state.n_steps >= cfg.max_steps:
            state.status = STALLED
            state.message = f"step budget {cfg.max_steps} exhausted at t={state.time:.6g}"
            break
        dt = min(dt, cfg.dt_max, cfg.t_end - state.time)
        target = None
        if out_idx < len(outputs) and state.time + dt >= outputs[out_idx] - 1e-15:
            target = outputs[out_idx]
            dt = target - state.time
        t = state.time
        bk0 = b_coeffs(basis, state.v + path.coeffs_at(t), nonlinear)
        if cfg.adaptive:
            v_full = expo_euler_update(basis, state.v, bk0, dt)
            v_half = expo_euler_update(basis, state.v, bk0, 0.5 * dt)
            bk1 = b_coeffs(basis, v_half + path.coeffs_at(t + 0.5 * dt), nonlinear)
            v_new = expo_euler_update(basis, v_half, bk1, 0.5 * dt)
            diff = basis.eval_matrix @ (v_new - v_full)
            scale = cfg.atol + cfg.rtol * float(np.max(np.abs(basis.eval_matrix @ v_new)))
            err = float(np.max(np.abs(diff))) / scale
            if not math.isfinite(err):
                err = math.inf
            if err > 1.0:
                state.n_rejected += 1
                dt = dt * max(0.25, cfg.safety * err ** -0.5) if math.isfinite(err) else 0.25 * dt
                state.dt = dt
                if dt < cfg.dt_floor:
                    state.status = STALLED
                    state.message = f"step size fell below dt_floor at t={t:.6g}"
                    break
                continue
            factor = 2.0 if err == 0.0 else min(2.0, max(0.25, cfg.safety * err ** -0.5))
        else:
            v_new = np.exp(-lam * dt) * state.v + dt * phi1(-lam * dt) * bk0
            factor = 1.0
        if not np.all(np.isfinite(v_new)):
            state.status = STALLED
            state.message = f"non-finite coefficients at t={t:.6g}"
            break
        state.v = v_new
        state.time = target if target is not None else t + dt
        state.dt = dt
        state.n_steps += 1
        h = state.h_coeffs()
        norm, grad0 = record(h, RUNNING)
        if target is not None:
            store_output(h)
            out_idx += 1
        status = detect_blowup(state, cfg, grad0)
        if status == BLOWN_UP or norm >= cfg.blowup_norm_threshold and state.dt <= cfg.dt_min:
            state.status = BLOWN_UP
            traj.tau_numeric = state.time
            break
        dt = dt * factor if target is None or factor < 1.0 else max(dt * factor, state.dt)

    h = state.h_coeffs() if np.all(np.isfinite(state.v)) else state.v
    if traj.statuses:
        # mark the final snapshot with the terminal status
        if traj.times and traj.times[-1] == state.time:
            traj.statuses[-1] = state.status
        elif np.all(np.isfinite(h)):
            norm, grad0, energy = diag.compute(h)
            traj.times.append(state.time)
            traj.norms.append(norm)
            traj.grads.append(grad0)
            traj.energies.append(energy)
            traj.statuses.append(state.status)
            for beta in cfg.extra_betas:
                traj.extra_norms[beta].append(norm_beta_coeffs(h, basis.zeros, beta))
    traj.status = state.status
    traj.message = state.message
    traj.n_steps = state.n_steps
    traj.n_rejected = state.n_rejected
    traj.final_h = ModalField(h, basis, state.time) if np.all(np.isfinite(h)) else None
    if state.status == STALLED:
        logger.warning("run stalled: %s", state.message)
    return traj


# ---------------------------------------------------------------------------
# Picard verification path
# ---------------------------------------------------------------------------

# beyond exp(-_DECAY_CUT) the Duhamel kernel is below double precision
_DECAY_CUT = 50.0


def chebyshev_lobatto(t_end: float, n: int) -> np.ndarray:
    """n + 1 Chebyshev-Lobatto points on [0, t_end], increasing, first = 0."""
    j = np.arange(n + 1)
    return 0.5 * t_end * (1.0 - np.cos(np.pi * j / n))


def lagrange_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """L[..., j] = l_j(x) for the Lagrange basis on ``nodes`` (barycentric form)."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / np.prod(diff, axis=1)
    d = x[..., None] - nodes
    exact = d == 0.0
    d = np.where(exact, 1.0, d)
    terms = bw / d
    out = terms / np.sum(terms, axis=-1, keepdims=True)
    hit = np.any(exact, axis=-1)
    if np.any(hit):
        out = np.where(hit[..., None], exact.astype(float), out)
    return out


def duhamel_weights(rates: np.ndarray, nodes: np.ndarray, t_eval: np.ndarray | None = None,
                    n_gl: int = 64) -> np.ndarray:
    """W[k, i, j] = int_0^{t_i} exp(-a_k (t_i - s)) l_j(s) ds.

    The integrand is smooth; for large a_k t_i only the window
    u = t_i - s < 50 / a_k contributes, so a fixed Gauss-Legendre rule on
    [0, min(t_i, 50/a_k)] is accurate for every mode.
    """
    rates = np.asarray(rates, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    t_eval = nodes if t_eval is None else np.asarray(t_eval, dtype=float)
    gx, gw = gauss_legendre_unit(n_gl)
    W = np.zeros((rates.size, t_eval.size, nodes.size))
    for i, ti in enumerate(t_eval):
        if ti <= 0.0:
            continue
        span = np.minimum(ti, _DECAY_CUT / np.maximum(rates, 1e-300))
        u = span[:, None] * gx[None, :]
        w = span[:, None] * gw[None, :] * np.exp(-rates[:, None] * u)
        L = lagrange_matrix(nodes, ti - u)
        W[:, i, :] = np.einsum("kq,kqj->kj", w, L)
    return W


@dataclass(frozen=True)
class GrowthConstants:
    """Empirical constants of |b(v)|_H <= c' |v|^3 and the Lipschitz bound, at one beta."""

    beta: float
    c_growth: float
    c_lipschitz: float

    def c1(self) -> float:
        a = self.beta / 2.0
        return 4.0 * self.c_growth * (a / math.e) ** a / (1.0 - a)

    def c2(self) -> float:
        a = self.beta / 2.0
        return 2.0 * self.c_lipschitz * (a / math.e) ** a / (1.0 - a)


def slab_length(h0_norm: float, z_norm: float, consts: GrowthConstants) -> float:
    """T* = min(1/(4 c1 R^3), 1/(8 c2 R^2))^(1/(1 - beta/2)), R = max(|h0|, |z|) + 1."""
    if not 0.0 < consts.beta < 2.0:
        raise DomainError(f"slab recipe needs beta in (0, 2), got {consts.beta}")
    R = max(h0_norm, z_norm) + 1.0
    base = min(1.0 / (4.0 * consts.c1() * R**3), 1.0 / (8.0 * consts.c2() * R**2))
    return base ** (1.0 / (1.0 - consts.beta / 2.0))


@dataclass
class PicardReport:
    slab: float
    sweeps: int
    ratios: list
    diffs: list
    nodes: np.ndarray = field(repr=False)
    v_nodes: np.ndarray = field(repr=False)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)


def picard_slab(basis: EigenBasis, v0: np.ndarray, slab: float, beta: float, path=None,
                n_nodes: int = 16, tol: float = 1.0e-10, max_sweeps: int = 50,
                nonlinear: bool = True) -> PicardReport:
    """Fixed point of v(t) = S(t) v0 + int_0^t S(t-s) b(v(s) + z(s)) ds on [0, slab].

    v is collocated at Chebyshev-Lobatto times; b(t) is represented by its
    interpolant through those times and the Duhamel integral is done per
    mode exactly for that interpolant.  Sweeps stop once the sup over nodes
    of |v_new - v_old|_beta is below ``tol``.
    """
    if slab <= 0.0:
        raise DomainError("slab length must be positive")
    nodes = chebyshev_lobatto(slab, n_nodes)
    rates = basis.zeros**2
    W = duhamel_weights(rates, nodes)
    free = np.exp(-np.outer(nodes, rates)) * v0  # (n_t, K)
    zs = np.array([path.coeffs_at(t) for t in nodes]) if path is not None else np.zeros_like(free)
    v = np.repeat(np.asarray(v0, dtype=float)[None, :], nodes.size, axis=0)
    diffs: list = []
    ratios: list = []
    for sweep in range(1, max_sweeps + 1):
        if nonlinear:
            bk = np.array([b_coeffs(basis, v[i] + zs[i]) for i in range(nodes.size)])
        else:
            bk = np.zeros_like(v)
        v_new = free + np.einsum("kij,jk->ik", W, bk)
        d = max(norm_beta_coeffs(v_new[i] - v[i], basis.zeros, beta) for i in range(nodes.size))
        if diffs and diffs[-1] > 0.0:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        v = v_new
        if not np.all(np.isfinite(v)):
            raise ContractionError(f"Picard iterates became non-finite at sweep {sweep}")
        if d < tol:
            return PicardReport(slab, sweep, ratios, diffs, nodes, v)
    raise ContractionError(
        f"no contraction within {max_sweeps} sweeps (last difference {diffs[-1]:.3e}); "
        "halve the slab and retry")


def step_picard(state: SolverState, cfg: SolverConfig, consts: GrowthConstants,
                nonlinear: bool = True) -> SolverState:
    """Advance by one slab of recipe length T* using the Picard iteration."""
    if state.status != RUNNING:
        raise DomainError(f"cannot step a {state.status} state")
    basis = state.basis
    h_norm = norm_beta_coeffs(state.h_coeffs(), basis.zeros, consts.beta)
    z_norm = state.path.sup_norm(state.time + 1.0, consts.beta) if state.path is not None else 0.0
    slab = slab_length(h_norm, z_norm, consts)

    class _Shifted:
        def coeffs_at(_self, s):
            return state.path.coeffs_at(state.time + s)

    rep = picard_slab(basis, state.v, slab, consts.beta, _Shifted(), nonlinear=nonlinear)
    out = replace(state, v=rep.v_nodes[-1].copy(), time=state.time + slab,
                  n_steps=state.n_steps + 1, dt=slab,
                  recent_norms=deque(state.recent_norms, maxlen=6), last_picard=rep)
    return out
