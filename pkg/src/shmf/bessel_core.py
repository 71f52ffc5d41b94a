"""Bessel functions J0/J1, zeros of J1 and the Fourier-Bessel eigenbasis.

The eigenfunctions of ``A = d2/dr2 + (1/r) d/dr - 1/r^2`` on the unit interval
with Dirichlet conditions are ``e_k(r) = c_k J1(x_k r)`` where ``x_k`` is the
k-th positive zero of J1, with eigenvalue ``-x_k**2``.  Everything downstream
works on a Gauss-Legendre grid of ``(0, 1)`` whose weights already contain the
radial measure ``r dr``.
"""
from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import roots_legendre

from .errors import AccuracyError, BracketingError, DomainError

logger = logging.getLogger(__name__)

Y_MAX = 1.0e6
_SERIES_MAX = 5.0
_MILLER_MAX = 25.0
_MILLER_START = 80

CACHE_MAGIC = b"SHMFBZ01"
CACHE_VERSION = "v1"
CACHE_ENV = "SHMF_CACHE_DIR"


# ---------------------------------------------------------------------------
# J0 / J1 evaluation
# ---------------------------------------------------------------------------

def _series(order: int, y: np.ndarray) -> np.ndarray:
    # ascending series; terms stay O(10) for y < 5
    half = 0.5 * y
    q = -(half * half)
    term = np.ones_like(y) if order == 0 else half.copy()
    total = term.copy()
    for m in range(1, 60):
        term = term * q / (m * (m + order))
        total += term
    return total


def _miller(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Backward recurrence normalised by J0 + 2 * sum J_2k = 1."""
    j_next = np.zeros_like(y)
    j_curr = np.full_like(y, 1.0e-30)
    norm = np.zeros_like(y)
    j0 = j1 = None
    for n in range(_MILLER_START, 0, -1):
        j_prev = (2.0 * n / y) * j_curr - j_next
        j_next, j_curr = j_curr, j_prev
        # j_curr now holds J_{n-1}
        if (n - 1) % 2 == 0 and n - 1 > 0:
            norm += 2.0 * j_curr
        if n == 2:
            j1 = j_curr.copy()
        big = np.abs(j_curr) > 1.0e250
        if np.any(big):
            scale = np.where(big, 1.0e-250, 1.0)
            j_curr *= scale
            j_next *= scale
            norm *= scale
            if j1 is not None:
                j1 *= scale
    j0 = j_curr
    norm += j0
    return j0 / norm, j1 / norm


def _hankel(order: int, y: np.ndarray) -> np.ndarray:
    mu = 4.0 * order * order
    inv8y = 1.0 / (8.0 * y)
    p = np.ones_like(y)
    q = np.zeros_like(y)
    term = np.ones_like(y)
    last = np.full_like(y, np.inf)
    active = np.ones(y.shape, dtype=bool)
    for k in range(1, 60):
        term = term * (mu - (2 * k - 1) ** 2) * inv8y / k
        mag = np.abs(term)
        active &= (mag < last) & (mag > 1.0e-18)
        if not active.any():
            break
        contrib = np.where(active, term, 0.0)
        # a_k / y^k enters P (even k) or Q (odd k) with alternating signs
        if k % 2 == 0:
            p += contrib * (1 if (k // 2) % 2 == 0 else -1)
        else:
            q += contrib * (1 if ((k - 1) // 2) % 2 == 0 else -1)
        last = np.where(active, mag, last)
    phase = (0.5 * order + 0.25) * math.pi
    # cos(y - phase) expanded so numpy's exact reduction of y is kept
    c = np.cos(y) * math.cos(phase) + np.sin(y) * math.sin(phase)
    s = np.sin(y) * math.cos(phase) - np.cos(y) * math.sin(phase)
    return np.sqrt(2.0 / (math.pi * y)) * (p * c - q * s)


def bessel_j(order: int, y) -> np.ndarray | float:
    """J0 or J1 at nonnegative ``y`` (scalar or array).

    Absolute error is about 1e-13 up to y = 50 and the large-argument branch
    keeps relative accuracy of the oscillation envelope beyond that.
    """
    if order not in (0, 1):
        raise DomainError(f"only orders 0 and 1 are supported, got {order}")
    arr = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > Y_MAX):
        raise DomainError(f"argument must lie in [0, {Y_MAX:g}]")
    flat = arr.ravel()
    out = np.empty_like(flat)
    small = flat < _SERIES_MAX
    mid = (~small) & (flat < _MILLER_MAX)
    large = flat >= _MILLER_MAX
    if small.any():
        out[small] = _series(order, flat[small])
    if mid.any():
        j0, j1 = _miller(flat[mid])
        out[mid] = j0 if order == 0 else j1
    if large.any():
        out[large] = _hankel(order, flat[large])
    out = out.reshape(arr.shape)
    if out.ndim == 0:
        return float(out)
    return out


def eval_bessel(order: int, y: float) -> float:
    """Scalar convenience wrapper around :func:`bessel_j`."""
    return float(bessel_j(order, y))


def bessel_j1_prime(y) -> np.ndarray | float:
    """J1'(y) = J0(y) - J1(y)/y, with J1'(0) = 1/2."""
    arr = np.asarray(y, dtype=float)
    j0 = np.asarray(bessel_j(0, arr))
    j1 = np.asarray(bessel_j(1, arr))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(arr > 1.0e-8, j0 - j1 / np.where(arr > 0, arr, 1.0), 0.5 - 0.1875 * arr * arr)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Zeros of J1
# ---------------------------------------------------------------------------

def mcmahon_guess(k: np.ndarray) -> np.ndarray:
    """McMahon's asymptotic expansion for the k-th zero of J1."""
    b = (np.asarray(k, dtype=float) + 0.25) * math.pi
    mu = 4.0
    return (b - (mu - 1.0) / (8.0 * b)
            - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * (8.0 * b) ** 3))


def compute_zeros(n: int, tol: float = 1.0e-12) -> np.ndarray:
    """First ``n`` positive zeros of J1, ascending.

    Each zero is bracketed in ``(k pi, (k + 1/2) pi)`` and refined by Newton
    iterations that fall back to bisection whenever a step leaves the bracket.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    if n > 100_000:
        raise DomainError("at most 1e5 zeros are supported")
    k = np.arange(1, n + 1, dtype=float)
    lo = k * math.pi
    hi = (k + 0.5) * math.pi
    f_lo = bessel_j(1, lo)
    f_hi = bessel_j(1, hi)
    if np.any(np.sign(f_lo) == np.sign(f_hi)):
        bad = int(np.argmax(np.sign(f_lo) == np.sign(f_hi))) + 1
        raise BracketingError(f"J1 has no sign change in the bracket of zero {bad}")
    x = np.clip(mcmahon_guess(k), lo, hi)
    for _ in range(100):
        f = bessel_j(1, x)
        fp = bessel_j(0, x) - f / x
        step = f / fp
        cand = x - step
        # shrink the bracket with the sign of f
        same_lo = np.sign(f) == np.sign(f_lo)
        lo = np.where(same_lo, x, lo)
        hi = np.where(same_lo, hi, x)
        outside = (cand <= lo) | (cand >= hi) | ~np.isfinite(cand)
        x_new = np.where(outside, 0.5 * (lo + hi), cand)
        converged = np.abs(x_new - x) <= 4.0 * np.spacing(x)
        x = x_new
        if converged.all():
            break
    resid = np.abs(bessel_j(1, x))
    if np.any(resid > tol):
        worst = int(np.argmax(resid))
        raise AccuracyError(f"zero {worst + 1} only reached |J1| = {resid[worst]:.3e}")
    if np.any(np.diff(x) <= 0.0):
        raise BracketingError("zeros are not strictly increasing")
    return x


# ---------------------------------------------------------------------------
# Eigenbasis
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Truncated Fourier-Bessel basis together with its quadrature grid.

    ``eval_matrix[j, k] = c_k J1(x_k r_j)`` and
    ``deriv_matrix[j, k] = c_k x_k J1'(x_k r_j)``; ``quad_weights`` integrate
    against ``r dr`` on (0, 1).
    """

    n_modes: int
    n_quad: int
    zeros: np.ndarray
    norm_consts: np.ndarray
    quad_nodes: np.ndarray
    quad_weights: np.ndarray
    eval_matrix: np.ndarray
    deriv_matrix: np.ndarray

    @property
    def key(self) -> tuple[int, int]:
        return (self.n_modes, self.n_quad)

    @property
    def eigenvalues(self) -> np.ndarray:
        return -self.zeros**2

    def gram(self) -> np.ndarray:
        E = self.eval_matrix
        return E.T @ (self.quad_weights[:, None] * E)

    def eval_at(self, r) -> np.ndarray:
        """Basis values c_k J1(x_k r) at arbitrary points, shape (len(r), N)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return self.norm_consts[None, :] * np.asarray(bessel_j(1, np.outer(r, self.zeros)))

    def deriv_at(self, r) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        y = np.outer(r, self.zeros)
        return (self.norm_consts * self.zeros)[None, :] * np.asarray(bessel_j1_prime(y))


def gauss_legendre_unit(n_quad: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on (0, 1) with plain (unweighted) weights."""
    t, w = roots_legendre(n_quad)
    return 0.5 * (t + 1.0), 0.5 * w


def _cache_path(cache_dir: Path, n_modes: int, n_quad: int) -> Path:
    return cache_dir / f"basis_{n_modes}_{n_quad}_{CACHE_VERSION}.bin"


def write_cache(path: Path, zeros: np.ndarray, norm_consts: np.ndarray) -> None:
    """Binary layout: 8-byte magic, uint64 count, then zeros and norms as <f8."""
    payload = CACHE_MAGIC + struct.pack("<Q", zeros.size)
    payload += np.asarray(zeros, dtype="<f8").tobytes()
    payload += np.asarray(norm_consts, dtype="<f8").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def read_cache(path: Path) -> tuple[np.ndarray, np.ndarray] | None:
    data = path.read_bytes()
    if len(data) < 16 or data[:8] != CACHE_MAGIC:
        logger.warning("ignoring cache file with bad header: %s", path)
        return None
    (n,) = struct.unpack("<Q", data[8:16])
    if len(data) != 16 + 16 * n:
        logger.warning("ignoring truncated cache file: %s", path)
        return None
    body = np.frombuffer(data[16:], dtype="<f8")
    return body[:n].astype(float), body[n:].astype(float)


def default_n_quad(n_modes: int) -> int:
    # 2N alone under-resolves the normalisation integrals for N <~ 32
    return 2 * n_modes + 32


def build_basis(n_modes: int, n_quad: int | None = None, *,
                cache_dir: str | os.PathLike | None = None,
                gram_tol: float = 1.0e-8) -> EigenBasis:
    """Construct the N-mode eigenbasis on an M-point Gauss-Legendre grid.

    ``n_quad`` defaults to ``2 * n_modes + 32``.  Normalisation constants come from
    quadrature and are cross-checked against ``sqrt(2) / |J0(x_k)|``; the Gram
    matrix must be the identity to ``gram_tol`` or :class:`AccuracyError` is
    raised.  Zeros and norms are cached when ``cache_dir`` (or the
    ``SHMF_CACHE_DIR`` environment variable) is set.
    """
    if n_modes < 1:
        raise DomainError("n_modes must be positive")
    if n_quad is None:
        n_quad = default_n_quad(n_modes)
    if n_quad < 2 * n_modes:
        raise DomainError(f"n_quad={n_quad} must be at least 2*n_modes={2 * n_modes}")

    if cache_dir is None and os.environ.get(CACHE_ENV):
        cache_dir = os.environ[CACHE_ENV]
    cached = None
    path = None
    if cache_dir is not None:
        path = _cache_path(Path(cache_dir), n_modes, n_quad)
        if path.exists():
            cached = read_cache(path)

    r, w_plain = gauss_legendre_unit(n_quad)
    w = w_plain * r
    if cached is not None:
        zeros, _ = cached
    else:
        zeros = compute_zeros(n_modes)

    raw = np.asarray(bessel_j(1, np.outer(r, zeros)))
    norms_sq = w @ (raw * raw)
    c = 1.0 / np.sqrt(norms_sq)
    closed = math.sqrt(2.0) / np.abs(np.asarray(bessel_j(0, zeros)))
    rel = np.max(np.abs(c - closed) / closed)
    if rel > 1.0e-8:
        raise AccuracyError(
            f"quadrature normalisation disagrees with closed form (rel {rel:.2e}); "
            f"increase n_quad")
    if cached is not None and not np.allclose(cached[1], c, rtol=1e-12, atol=0.0):
        logger.warning("cached normalisations differ from recomputed ones; using recomputed")

    E = raw * c[None, :]
    D = (c * zeros)[None, :] * np.asarray(bessel_j1_prime(np.outer(r, zeros)))
    for arr in (zeros, c, r, w, E, D):
        arr.setflags(write=False)
    basis = EigenBasis(n_modes, n_quad, zeros, c, r, w, E, D)
    err = np.max(np.abs(basis.gram() - np.eye(n_modes)))
    if err > gram_tol:
        raise AccuracyError(f"Gram matrix deviates from identity by {err:.2e}; increase n_quad")
    if path is not None and cached is None:
        write_cache(path, zeros, c)
    return basis
