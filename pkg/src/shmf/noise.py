"""Trace-class Wiener noise and exact Ornstein-Uhlenbeck stochastic convolution.

Each mode of ``Z(t) = int_0^t S(t-s) dw(s)`` is a scalar OU process
``dZ_k = -x_k^2 Z_k dt + sigma_k dB_k`` whose Gaussian transition is sampled
exactly.  Randomness comes from a Philox counter-based generator keyed by
``(seed, path_index)`` with the step index in the counter, so any draw can be
regenerated without replaying the stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel_core import EigenBasis
from .errors import DomainError, ValidationError
from .modal_space import ModalField, norm_beta_coeffs


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Diagonal covariance square root: phi e_k = sigmas[k] e_k."""

    sigmas: np.ndarray
    beta_target: float
    amplitude: float
    exponent: float = math.nan
    kind: str = "power_law"

    @property
    def is_silent(self) -> bool:
        return not np.any(self.sigmas)


def make_spectrum(kind: str, amplitude: float, exponent: float, basis: EigenBasis,
                  beta_target: float) -> NoiseSpectrum:
    """sigma_k = amplitude * x_k^-exponent, validated against the trace-class condition."""
    if kind != "power_law":
        raise ValidationError(f"unknown spectrum kind {kind!r}; only 'power_law' is available")
    if not amplitude > 0.0:
        raise ValidationError(
            "amplitude must be positive: a zero spectrum is degenerate (ker phi* != {0})")
    if not exponent > beta_target + 0.5:
        raise ValidationError(
            f"exponent {exponent} must exceed beta_target + 1/2 = {beta_target + 0.5} so that "
            "sum_k x_k^(2 beta) sigma_k^2 converges (phi Hilbert-Schmidt into V_beta)")
    sig = amplitude * basis.zeros ** (-float(exponent))
    sig.setflags(write=False)
    return NoiseSpectrum(sig, float(beta_target), float(amplitude), float(exponent), kind)


def silent_spectrum(basis: EigenBasis, beta_target: float = 2.5) -> NoiseSpectrum:
    """sigma = 0: the deterministic limit (degenerate, so unsuitable for blow-up probability runs)."""
    sig = np.zeros(basis.n_modes)
    sig.setflags(write=False)
    return NoiseSpectrum(sig, beta_target, 0.0, math.nan, "zero")


def tail_check(spectrum: NoiseSpectrum, basis: EigenBasis, tail_from: float = 0.25):
    """Fit sigma_k x_k^beta ~ C k^-(1/2 + delta) on the upper part of the spectrum.

    Returns ``(C, delta)``; the Hilbert-Schmidt condition is consistent with the
    truncated spectrum when ``delta > 0`` and ``sigma_k > 0`` for every k.
    """
    k = np.arange(1, basis.n_modes + 1, dtype=float)
    lo = max(1, int(tail_from * basis.n_modes))
    vals = spectrum.sigmas * basis.zeros**spectrum.beta_target
    if np.any(vals[lo - 1:] <= 0.0):
        return 0.0, -math.inf
    slope, intercept = np.polyfit(np.log(k[lo - 1:]), np.log(vals[lo - 1:]), 1)
    return math.exp(intercept), -slope - 0.5


def hilbert_schmidt_norm(spectrum: NoiseSpectrum, basis: EigenBasis, beta: float) -> float:
    """(sum_k x_k^(2 beta) sigma_k^2)^(1/2) over the truncated spectrum."""
    return norm_beta_coeffs(spectrum.sigmas, basis.zeros, beta)


# ---------------------------------------------------------------------------
# counter-based normals
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def normal_block(seed: int, path_index: int, step: int, n: int) -> np.ndarray:
    """n standard normals determined by (seed, path_index, step) alone.

    Mode k takes position k of the block, so refining N -> 2N keeps the
    first N draws.
    """
    key = np.array([seed & _MASK64, path_index & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, step & _MASK64, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return gen.standard_normal(n)


@dataclass(frozen=True, eq=False)
class OUState:
    z_coeffs: np.ndarray
    time: float
    seed: int
    path_index: int
    step: int = 0

    @classmethod
    def start(cls, basis: EigenBasis, seed: int, path_index: int) -> "OUState":
        return cls(np.zeros(basis.n_modes), 0.0, int(seed), int(path_index), 0)


def ou_transition(dt: float, zeros: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decay factors exp(-x^2 dt) and unit-sigma std devs sqrt((1-exp(-2x^2 dt))/(2x^2))."""
    lam = zeros**2
    decay = np.exp(-lam * dt)
    std = np.sqrt(-np.expm1(-2.0 * lam * dt) / (2.0 * lam))
    return decay, std


def ou_step(state: OUState, dt: float, spectrum: NoiseSpectrum, zeros: np.ndarray) -> OUState:
    """Exact OU transition of every mode over ``dt``."""
    if not dt > 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    decay, std = ou_transition(dt, zeros)
    z = decay * state.z_coeffs
    if not spectrum.is_silent:
        xi = normal_block(state.seed, state.path_index, state.step, zeros.size)
        z = z + xi * spectrum.sigmas * std
    return OUState(z, state.time + dt, state.seed, state.path_index, state.step + 1)


def ou_variance(sigma: np.ndarray, zeros: np.ndarray, t: float) -> np.ndarray:
    """Var Z_k(t) = sigma_k^2 (1 - exp(-2 x_k^2 t)) / (2 x_k^2), Z(0) = 0."""
    lam = zeros**2
    return sigma**2 * -np.expm1(-2.0 * lam * t) / (2.0 * lam)


def wiener_increment(dt: float, spectrum: NoiseSpectrum, rng: np.random.Generator,
                     basis: EigenBasis) -> ModalField:
    """Increment of w_phi over dt: coefficients sigma_k sqrt(dt) xi_k."""
    if not dt > 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    if spectrum.is_silent:
        return ModalField.zeros(basis)
    xi = rng.standard_normal(basis.n_modes)
    return ModalField(spectrum.sigmas * math.sqrt(dt) * xi, basis)


# ---------------------------------------------------------------------------
# noise paths seen by the solver
# ---------------------------------------------------------------------------

class NoisePath:
    """OU path sampled exactly on the clock ``n * clock_dt`` and linear in between.

    The clock is fixed by the configuration, not by the solver's adaptive
    steps, so two solutions driven by the same ``(seed, path_index)`` see the
    identical path whatever step sizes they choose.
    """

    def __init__(self, spectrum: NoiseSpectrum, basis: EigenBasis, seed: int,
                 path_index: int, clock_dt: float = 1.0e-3):
        if not clock_dt > 0.0:
            raise DomainError("clock_dt must be positive")
        self.spectrum = spectrum
        self.basis = basis
        self.clock_dt = float(clock_dt)
        self.silent = spectrum.is_silent
        self._zero = np.zeros(basis.n_modes)
        self._states = [OUState.start(basis, seed, path_index)]
        self._decay, self._std = ou_transition(self.clock_dt, basis.zeros)

    def _extend(self, n: int) -> None:
        while len(self._states) <= n:
            s = self._states[-1]
            z = self._decay * s.z_coeffs
            xi = normal_block(s.seed, s.path_index, s.step, self.basis.n_modes)
            z = z + xi * self.spectrum.sigmas * self._std
            self._states.append(OUState(z, (s.step + 1) * self.clock_dt, s.seed,
                                        s.path_index, s.step + 1))

    def state_at(self, t: float) -> OUState:
        """Last clock state at or before t."""
        if self.silent:
            return self._states[0]
        n = int(math.floor(t / self.clock_dt + 1e-12))
        self._extend(n)
        return self._states[n]

    def coeffs_at(self, t: float) -> np.ndarray:
        if self.silent or t <= 0.0:
            return self._zero
        s = t / self.clock_dt
        n = int(math.floor(s))
        frac = s - n
        self._extend(n + 1)
        if frac < 1e-12:
            return self._states[n].z_coeffs
        return (1.0 - frac) * self._states[n].z_coeffs + frac * self._states[n + 1].z_coeffs

    def sup_norm(self, t_end: float, beta: float) -> float:
        """max over clock nodes in [0, t_end] of |Z|_beta."""
        if self.silent:
            return 0.0
        n = int(math.ceil(t_end / self.clock_dt))
        self._extend(n)
        return max(norm_beta_coeffs(s.z_coeffs, self.basis.zeros, beta)
                   for s in self._states[: n + 1])


class FrozenPath:
    """A prescribed path z(t) given by modal coefficients on a time grid."""

    def __init__(self, times, coeffs, basis: EigenBasis):
        self.times = np.asarray(times, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (self.times.size, basis.n_modes):
            raise DomainError("coeffs must have shape (len(times), n_modes)")
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("times must be strictly increasing")
        self.basis = basis
        self.silent = False

    def coeffs_at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            return self.coeffs[0]
        if i >= self.times.size - 1:
            return self.coeffs[-1]
        t0, t1 = self.times[i], self.times[i + 1]
        frac = (t - t0) / (t1 - t0)
        return (1.0 - frac) * self.coeffs[i] + frac * self.coeffs[i + 1]

    def state_at(self, t: float):
        return None

    def sup_norm(self, t_end: float, beta: float) -> float:
        m = self.times <= t_end
        return max(norm_beta_coeffs(c, self.basis.zeros, beta) for c in self.coeffs[m])


class ZeroPath(FrozenPath):
    def __init__(self, basis: EigenBasis):
        self.basis = basis
        self.silent = True
        self._zero = np.zeros(basis.n_modes)

    def coeffs_at(self, t: float) -> np.ndarray:
        return self._zero

    def sup_norm(self, t_end: float, beta: float) -> float:
        return 0.0
