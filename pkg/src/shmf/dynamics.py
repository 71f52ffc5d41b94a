"""The colatitude nonlinearity b(r, h) = (2h - sin 2h) / (2 r^2) and energy diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel_core import EigenBasis
from .errors import UsageError
from .modal_space import ModalField, grid_derivative, synthesize

# below this |h| the series branch of 2h - sin 2h is used; the direct
# formula loses ~6*eps/(2h)^2 relative accuracy, which is < 1e-15 here
TAYLOR_CUTOFF = 0.5
_N_TERMS = 12


def two_x_minus_sin(h: np.ndarray) -> np.ndarray:
    """2h - sin(2h) without cancellation for small |h|.

    With u = 2h: u - sin u = sum_{n>=1} (-1)^(n+1) u^(2n+1) / (2n+1)!,
    summed by Horner's rule in u^2.
    """
    h = np.asarray(h, dtype=float)
    u = 2.0 * h
    small = np.abs(h) < TAYLOR_CUTOFF
    u2 = u * u
    acc = np.ones_like(u)
    for n in range(_N_TERMS, 1, -1):
        # term ratio between orders 2n+1 and 2n-1
        acc = 1.0 - u2 / ((2 * n) * (2 * n + 1)) * acc
    series = (u * u2 / 6.0) * acc
    direct = u - np.sin(u)
    return np.where(small, series, direct)


def sin_sq_over_r2(h: np.ndarray, r: np.ndarray) -> np.ndarray:
    """sin(h)^2 / r^2; sin is accurate for small h so no special branch is needed."""
    s = np.sin(h)
    return (s * s) / (r * r)


def b_kernel(r: np.ndarray, h: np.ndarray) -> np.ndarray:
    return two_x_minus_sin(h) / (2.0 * r * r)


@dataclass(frozen=True, eq=False)
class NonlinearityEval:
    grid_values: np.ndarray
    source_field: ModalField = field(repr=False)

    def norm_h(self) -> float:
        """|b|_H computed on the quadrature grid."""
        w = self.source_field.basis.quad_weights
        return math.sqrt(float(np.dot(w, self.grid_values**2)))


def eval_b(field: ModalField) -> NonlinearityEval:
    b = field.basis
    return NonlinearityEval(b_kernel(b.quad_nodes, synthesize(field)), field)


def eval_b_shifted(field: ModalField, shift_grid) -> NonlinearityEval:
    """b(r, v(r) + z(r)) with v modal and z given on the grid."""
    b = field.basis
    z = np.asarray(shift_grid, dtype=float)
    if z.shape != (b.n_quad,):
        raise UsageError(f"shift grid has shape {z.shape}, expected ({b.n_quad},)")
    return NonlinearityEval(b_kernel(b.quad_nodes, synthesize(field) + z), field)


def b_norm_h(basis: EigenBasis, grid_h: np.ndarray) -> float:
    """|b(., h)|_H for h given on the grid."""
    vals = b_kernel(basis.quad_nodes, grid_h)
    return math.sqrt(float(np.dot(basis.quad_weights, vals**2)))


def corotational_energy(field: ModalField) -> float:
    """E = pi * int [(h_r)^2 + sin^2 h / r^2] r dr (Dirichlet energy of u_h / 2)."""
    b = field.basis
    return energy_from_grid(b, synthesize(field), grid_derivative(field))


def energy_from_grid(basis: EigenBasis, h: np.ndarray, hr: np.ndarray) -> float:
    dens = hr * hr + sin_sq_over_r2(h, basis.quad_nodes)
    return math.pi * float(np.dot(basis.quad_weights, dens))


def linearized_energy(field: ModalField) -> float:
    """Small-angle limit pi * int [(h_r)^2 + h^2/r^2] r dr."""
    b = field.basis
    h = synthesize(field)
    hr = grid_derivative(field)
    return math.pi * float(np.dot(b.quad_weights, hr * hr + (h / b.quad_nodes) ** 2))


def _random_direction(basis: EigenBasis, beta: float, rng: np.random.Generator) -> np.ndarray:
    # coefficients decaying one power faster than the V_beta weight keeps |v|_beta finite
    c = rng.standard_normal(basis.n_modes) * basis.zeros ** (-beta - 1.0)
    return c / math.sqrt(float(np.sum(basis.zeros ** (2 * beta) * c * c)))


def growth_ratio(basis: EigenBasis, coeffs: np.ndarray, beta: float) -> float:
    """|b(., v)|_H / |v|_beta^3."""
    nb = float(np.sqrt(np.sum(basis.zeros ** (2 * beta) * coeffs**2)))
    return b_norm_h(basis, basis.eval_matrix @ coeffs) / nb**3


def lipschitz_ratio(basis: EigenBasis, u: np.ndarray, v: np.ndarray, beta: float) -> float:
    """|b(u) - b(v)|_H / (|u - v|_beta (|u|_beta^2 + |v|_beta^2))."""
    w = basis.zeros ** (2 * beta)
    nd = math.sqrt(float(np.sum(w * (u - v) ** 2)))
    den = nd * (float(np.sum(w * u * u)) + float(np.sum(w * v * v)))
    r = basis.quad_nodes
    diff = b_kernel(r, basis.eval_matrix @ u) - b_kernel(r, basis.eval_matrix @ v)
    return math.sqrt(float(np.dot(basis.quad_weights, diff * diff))) / den


def estimate_growth_constants(basis: EigenBasis, beta: float, n_samples: int = 100,
                              seed: int = 0, scales=(1e-3, 1e-2, 1e-1, 1.0)):
    """Empirical c', c'' as maxima of the growth and Lipschitz ratios over random fields.

    These are lower estimates of the true suprema; callers that size time
    slabs from them should check contraction directly.
    """
    rng = np.random.default_rng(seed)
    c_growth = 0.0
    c_lip = 0.0
    for _ in range(n_samples):
        d1 = _random_direction(basis, beta, rng)
        d2 = _random_direction(basis, beta, rng)
        for s in scales:
            c_growth = max(c_growth, growth_ratio(basis, s * d1, beta))
            c_lip = max(c_lip, lipschitz_ratio(basis, s * d1, s * d2, beta))
    return c_growth, c_lip
