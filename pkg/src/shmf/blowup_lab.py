"""Explicit profiles and checks around the blow-up mechanism.

Contents: the parabolae chi_k used as reference initial data, the bubble
profile phi_lambda, the correction theta_{eps,mu}, the shrinking scale
lambda(t), the subsolution psi built from them, a pointwise checker for the
inequality d_t psi <= A psi + b(r, psi + z), the barrier level gamma, the
control path steering h0 to h1 and a quadrature check of weighted L^p bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel_core import EigenBasis, gauss_legendre_unit
from .dynamics import b_kernel
from .errors import DomainError, ValidationError
from .modal_space import ModalField, norm_beta_coeffs
from .noise import FrozenPath
from .solver import b_coeffs, chebyshev_lobatto, duhamel_weights

# working interval [0, R_WORK] for the subsolution comparison
R_WORK = 0.5


def chi(k: float, r) -> np.ndarray:
    """k r (1 - r^2)(2 - r^2)."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return k * r * (1.0 - r2) * (2.0 - r2)


def chi_prime(k: float, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return k * (2.0 - 9.0 * r2 + 5.0 * r2 * r2)


def phi_lambda(lam: float, r) -> np.ndarray:
    """arccos((lam^2 - r^2)/(lam^2 + r^2)), computed as 2 atan(r / lam)."""
    if not lam > 0.0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return 2.0 * np.arctan(np.asarray(r, dtype=float) / lam)


def theta_eps_mu(eps: float, mu: float, r) -> np.ndarray:
    """arccos((mu^2 - r^(2+2eps))/(mu^2 + r^(2+2eps))), computed as 2 atan(r^(1+eps)/mu)."""
    if not mu > 0.0:
        raise DomainError(f"mu must be positive, got {mu}")
    return 2.0 * np.arctan(np.asarray(r, dtype=float) ** (1.0 + eps) / mu)


def _phi_derivs(lam, r):
    d = lam * lam + r * r
    return 2.0 * np.arctan(r / lam), 2.0 * lam / d, -4.0 * lam * r / (d * d)


def _theta_derivs(eps, mu, r):
    p = 1.0 + eps
    q = r**p
    d = mu * mu + q * q
    th = 2.0 * np.arctan(q / mu)
    d1 = 2.0 * mu * p * r ** (p - 1.0) / d
    d2 = 2.0 * mu * p * r ** (p - 2.0) * ((p - 1.0) * d - 2.0 * p * q * q) / (d * d)
    return th, d1, d2


def radial_operator(f, f1, f2, r):
    """A f = f'' + f'/r - f/r^2 from values and derivatives."""
    return f2 + f1 / r - f / (r * r)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def sup_profile(eps: float) -> float:
    """sup_{s>0} s^(2-eps)/(1+s^2), attained at s^2 = (2-eps)/eps."""
    s2 = (2.0 - eps) / eps
    return s2 ** (1.0 - eps / 2.0) / (1.0 + s2)


def mu_bar(eps: float, r_max: float = R_WORK, grid=None) -> float:
    """Smallest mu on a log grid with cos theta_{eps,mu} >= 1/(1+eps) on [0, r_max].

    theta is increasing in r, so the condition only needs checking at r_max.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if grid is None:
        grid = np.logspace(-4, 4, 80001)
    grid = np.asarray(grid, dtype=float)
    ok = np.cos(2.0 * np.arctan(r_max ** (1.0 + eps) / grid)) >= 1.0 / (1.0 + eps)
    if not np.any(ok):
        raise DomainError("no admissible mu on the scan grid")
    return float(grid[np.argmax(ok)])


def mu_bar_closed_form(eps: float, r_max: float = R_WORK) -> float:
    """r_max^(1+eps) / tan(arccos(1/(1+eps)) / 2), the exact threshold."""
    return r_max ** (1.0 + eps) / math.tan(0.5 * math.acos(1.0 / (1.0 + eps)))


def delta_bar(eps: float, mu: float) -> float:
    """Largest delta with 2 eps mu / (mu^2 + 1) >= 2 delta sup_s s^(2-eps)/(1+s^2)."""
    return eps * mu / ((mu * mu + 1.0) * sup_profile(eps))


@dataclass(frozen=True, eq=False)
class SubsolutionParams:
    epsilon: float
    mu: float
    delta: float
    lambda0: float
    xi: ModalField | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie in (0, 1)")
        if not (self.mu > 0.0 and self.delta > 0.0 and self.lambda0 > 0.0):
            raise DomainError("mu, delta and lambda0 must be positive")

    @property
    def blowup_time(self) -> float:
        """T = lambda0^(1-eps) / ((1-eps) delta)."""
        e = self.epsilon
        return self.lambda0 ** (1.0 - e) / ((1.0 - e) * self.delta)

    def is_admissible(self) -> bool:
        """mu >= mu_bar(eps) and delta <= delta_bar(eps, mu)."""
        return (math.cos(theta_eps_mu(self.epsilon, self.mu, R_WORK)) >= 1.0 / (1.0 + self.epsilon)
                and self.delta <= delta_bar(self.epsilon, self.mu))


def default_params(eps: float = 0.5, lambda0: float = 0.1, delta_factor: float = 1.0,
                   xi: ModalField | None = None) -> SubsolutionParams:
    mu = mu_bar(eps)
    return SubsolutionParams(eps, mu, delta_factor * delta_bar(eps, mu), lambda0, xi)


def lambda_of_t(params: SubsolutionParams, t: float) -> float:
    """Closed-form solution of lambda' = -delta lambda^eps, lambda(0) = lambda0."""
    T = params.blowup_time
    if t < 0.0 or t >= T:
        raise DomainError(f"t={t} outside [0, T={T})")
    e = params.epsilon
    base = params.lambda0 ** (1.0 - e) - (1.0 - e) * params.delta * t
    return base ** (1.0 / (1.0 - e))


def lambda_rk4(params: SubsolutionParams, t: float, n_steps: int = 10000) -> float:
    """RK4 integration of the lambda ODE (reference for the closed form)."""
    h = t / n_steps
    lam = params.lambda0
    d, e = params.delta, params.epsilon
    f = lambda x: -d * max(x, 0.0) ** e
    for _ in range(n_steps):
        k1 = f(lam)
        k2 = f(lam + 0.5 * h * k1)
        k3 = f(lam + 0.5 * h * k2)
        k4 = f(lam + h * k3)
        lam += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return lam


# ---------------------------------------------------------------------------
# identities and the subsolution
# ---------------------------------------------------------------------------

def fd_radial_operator(func, r, h: float = 1.0e-4) -> np.ndarray:
    """A f at r by fourth-order central differences of ``func``."""
    r = np.asarray(r, dtype=float)
    fm2, fm1, f0, fp1, fp2 = (func(r + s * h) for s in (-2, -1, 0, 1, 2))
    d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h)
    d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h)
    return radial_operator(f0, d1, d2, r)


def harmonic_residuals(lam: float, eps: float, mu: float, r_samples, h: float = 1.0e-4):
    """Residuals of A phi = (sin 2phi - 2phi)/(2r^2) and A theta = ((1+eps)^2 sin 2theta - 2theta)/(2r^2)."""
    r = np.asarray(r_samples, dtype=float)
    if np.any(r <= 2 * h) or np.any(r > 1.0):
        raise DomainError("r samples must lie in (2h, 1]")
    phi = phi_lambda(lam, r)
    th = theta_eps_mu(eps, mu, r)
    res_phi = fd_radial_operator(lambda x: phi_lambda(lam, x), r, h) \
        - (np.sin(2 * phi) - 2 * phi) / (2 * r * r)
    res_th = fd_radial_operator(lambda x: theta_eps_mu(eps, mu, x), r, h) \
        - ((1 + eps) ** 2 * np.sin(2 * th) - 2 * th) / (2 * r * r)
    return res_phi, res_th


def check_harmonic_identities(lam: float, eps: float, mu: float, r_samples,
                              h: float = 1.0e-4) -> float:
    """Max absolute residual of both profile identities over ``r_samples``."""
    a, b = harmonic_residuals(lam, eps, mu, r_samples, h)
    return float(max(np.max(np.abs(a)), np.max(np.abs(b))))


def _xi_part(params: SubsolutionParams, t: float, r):
    """S(t) xi and its r-derivatives and A S(t) xi at r, exact per mode."""
    r = np.asarray(r, dtype=float)
    if params.xi is None:
        z = np.zeros_like(r)
        return z, z, z
    basis = params.xi.basis
    c = np.exp(-basis.zeros**2 * t) * params.xi.coeffs
    vals = basis.eval_at(r) @ c
    d1 = basis.deriv_at(r) @ c
    a_vals = basis.eval_at(r) @ (-(basis.zeros**2) * c)
    return vals, d1, a_vals


def psi_ansatz(params: SubsolutionParams, t: float, r) -> np.ndarray:
    """phi_{lambda(t)}(r) + theta(r) + S(t) xi (r)."""
    lam = lambda_of_t(params, t)
    r = np.asarray(r, dtype=float)
    s_xi, _, _ = _xi_part(params, t, r)
    return phi_lambda(lam, r) + theta_eps_mu(params.epsilon, params.mu, r) + s_xi


def psi_gradient_at_origin(params: SubsolutionParams, t: float) -> float:
    """2/lambda(t) + d_r (S(t) xi)(0); theta'(0) = 0 for eps > 0."""
    lam = lambda_of_t(params, t)
    g = 2.0 / lam
    if params.xi is not None:
        b = params.xi.basis
        c = np.exp(-b.zeros**2 * t) * params.xi.coeffs
        g += 0.5 * float(np.dot(c, b.norm_consts * b.zeros))
    return g


def gamma_barrier(params: SubsolutionParams, n_r: int = 2001, n_t: int = 200) -> float:
    """pi + sup_J |theta| + sup_{t>=0} |S(t) xi|_inf, suprema by sampling."""
    r = np.linspace(0.0, 1.0, n_r)
    g = math.pi + float(np.max(np.abs(theta_eps_mu(params.epsilon, params.mu, r[r <= R_WORK]))))
    if params.xi is not None:
        b = params.xi.basis
        E = b.eval_at(r)
        ts = np.concatenate([[0.0], np.logspace(-6, 1, n_t)])
        g += max(float(np.max(np.abs(E @ (np.exp(-b.zeros**2 * t) * params.xi.coeffs)))) for t in ts)
    return g


def F_phi_theta(x, phi, theta):
    """2x - (sin 2(phi + theta + x) - sin 2(phi + theta))."""
    a = phi + theta
    return 2.0 * x - (np.sin(2.0 * (a + x)) - np.sin(2.0 * a))


@dataclass
class InequalityReport:
    min_slack: float
    argmin: tuple
    precondition_ok: bool
    min_x: float
    params: dict
    n_t: int
    n_r: int
    status: str = "ok"

    def as_record(self) -> dict:
        return {"kind": "differential_inequality", "status": self.status,
                "min_slack": self.min_slack, "argmin_t": self.argmin[0], "argmin_r": self.argmin[1],
                "precondition_ok": self.precondition_ok, "min_x": self.min_x,
                "n_t": self.n_t, "n_r": self.n_r, **self.params}


def inequality_slack(params: SubsolutionParams, t: float, r, z_grid=None) -> np.ndarray:
    """A psi + b(r, psi + z) - d_t psi at (t, r).

    Spatial derivatives of phi and theta are analytic, the xi part is exact
    per mode, and d_t psi = 2 delta lambda^eps r / (lambda^2 + r^2) + A S(t) xi.
    """
    r = np.asarray(r, dtype=float)
    lam = lambda_of_t(params, t)
    ph, ph1, ph2 = _phi_derivs(lam, r)
    th, th1, th2 = _theta_derivs(params.epsilon, params.mu, r)
    s_xi, _, a_s_xi = _xi_part(params, t, r)
    psi = ph + th + s_xi
    a_psi = radial_operator(ph, ph1, ph2, r) + radial_operator(th, th1, th2, r) + a_s_xi
    z = 0.0 if z_grid is None else np.asarray(z_grid, dtype=float)
    rhs = a_psi + b_kernel(r, psi + z)
    dt_psi = 2.0 * params.delta * lam**params.epsilon * r / (lam * lam + r * r) + a_s_xi
    return rhs - dt_psi


def verify_differential_inequality(params: SubsolutionParams, z_path=None, t_samples=None,
                                   r_samples=None, tol: float = 1.0e-6) -> InequalityReport:
    """Minimum of A psi + b(r, psi + z) - d_t psi over a (t, r) sample.

    ``z_path`` is anything exposing ``coeffs_at(t)`` on the basis of
    ``params.xi`` (or None for z = 0).  Defaults: 50 times on
    [0, 0.99 T] and 50 radii in (0, 1/2].
    """
    T = params.blowup_time
    ts = np.linspace(0.0, 0.99 * T, 50) if t_samples is None else np.asarray(t_samples, float)
    rs = np.linspace(R_WORK / 50, R_WORK, 50) if r_samples is None else np.asarray(r_samples, float)
    if np.any(rs <= 0.0) or np.any(rs > R_WORK):
        raise DomainError("r samples must lie in (0, 1/2]")
    basis = params.xi.basis if params.xi is not None else None
    min_slack = math.inf
    argmin = (math.nan, math.nan)
    min_x = math.inf
    for t in ts:
        z = None
        if z_path is not None:
            if basis is None:
                basis = z_path.basis
            z = basis.eval_at(rs) @ z_path.coeffs_at(t)
        s_xi, _, _ = _xi_part(params, t, rs)
        x = s_xi + (0.0 if z is None else z)
        min_x = min(min_x, float(np.min(x)))
        slack = inequality_slack(params, t, rs, z)
        i = int(np.argmin(slack))
        if slack[i] < min_slack:
            min_slack = float(slack[i])
            argmin = (float(t), float(rs[i]))
    pre_ok = min_x >= -tol
    rep = InequalityReport(min_slack, argmin, pre_ok, min_x,
                           {"epsilon": params.epsilon, "mu": params.mu, "delta": params.delta,
                            "lambda0": params.lambda0, "T": T}, ts.size, rs.size)
    if not pre_ok:
        rep.status = "precondition_violated"
    elif min_slack < -tol:
        rep.status = "violated"
    return rep


def critical_delta_factor(eps: float = 0.5, lambda0: float = 0.1, lo: float = 1.0,
                          hi: float = 64.0, iters: int = 40) -> float:
    """Smallest multiple of delta_bar for which the sampled slack turns negative.

    Returns ``inf`` when even ``hi * delta_bar`` keeps the slack nonnegative.
    """
    def negative(f):
        return verify_differential_inequality(default_params(eps, lambda0, f)).min_slack < -1e-6

    if negative(lo):
        return lo
    if not negative(hi):
        return math.inf
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if negative(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# control path
# ---------------------------------------------------------------------------

def _e1(a, t):
    return -np.expm1(-a * t) / a


class ControlPath:
    """z1(t) = phi(t) - S(t) h0 - int_0^t S(t-s) b(phi(s)) ds, phi(t) linear from h0 to h1.

    With this forcing the mild solution started at h0 follows phi exactly,
    so h(T1) = h1.  The b-term is interpolated in time at Chebyshev points
    and integrated per mode against the exponential kernel.
    """

    def __init__(self, h0: ModalField, h1: ModalField, t1: float, n_nodes: int = 32):
        if not t1 > 0.0:
            raise DomainError("T1 must be positive")
        if h0.basis.key != h1.basis.key:
            raise ValidationError("h0 and h1 must share a basis")
        self.basis = h0.basis
        self.h0 = np.array(h0.coeffs)
        self.h1 = np.array(h1.coeffs)
        self.t1 = float(t1)
        self.silent = False
        self.rates = self.basis.zeros**2
        self.nodes = chebyshev_lobatto(self.t1, n_nodes)
        self.b_nodes = np.array([b_coeffs(self.basis, self.phi(t)) for t in self.nodes])

    def phi(self, t: float) -> np.ndarray:
        s = t / self.t1
        return (1.0 - s) * self.h0 + s * self.h1

    def coeffs_at(self, t: float) -> np.ndarray:
        t = min(max(float(t), 0.0), self.t1)
        if t == 0.0:
            return np.zeros_like(self.h0)
        W = duhamel_weights(self.rates, self.nodes, np.array([t]))[:, 0, :]
        b_int = np.einsum("kj,jk->k", W, self.b_nodes)
        return self.phi(t) - np.exp(-self.rates * t) * self.h0 - b_int

    def state_at(self, t: float):
        return None

    def sampled(self, times) -> FrozenPath:
        times = np.asarray(times, dtype=float)
        return FrozenPath(times, np.array([self.coeffs_at(t) for t in times]), self.basis)

    def sup_norm(self, t_end: float, beta: float, n: int = 200) -> float:
        ts = np.linspace(0.0, min(t_end, self.t1), n)
        return max(norm_beta_coeffs(self.coeffs_at(t), self.basis.zeros, beta) for t in ts)


def build_control(h0: ModalField, h1: ModalField, t1: float, times=None):
    """Control path steering h0 to h1 in time t1; sampled on ``times`` if given."""
    path = ControlPath(h0, h1, t1)
    return path if times is None else path.sampled(times)


def control_heat_only(h0: ModalField, t) -> np.ndarray:
    """Closed form of the control when h1 = h0 and b is switched off: (1 - e^{-x^2 t}) h0."""
    return -np.expm1(-h0.basis.zeros**2 * t) * h0.coeffs


# ---------------------------------------------------------------------------
# weighted L^p embedding
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingReport:
    beta: float
    nu: float
    p: float
    values: list
    rel_changes: list
    constant: float
    finite: bool
    stable: bool


def embedding_window_ok(beta: float, nu: float, p: float) -> bool:
    if math.isinf(p):
        return nu <= 1.0 and beta > max(1.0 + nu, 0.5)
    return beta > max(1.0 + nu - 2.0 / p, 0.5) and nu < 2.0 / p + 1.0


def weighted_lp(field: ModalField, nu: float, p: float, n_quad: int) -> float:
    """|f / r^nu|_{L^p(r dr)} by Gauss-Legendre on (0, 1) with ``n_quad`` points."""
    r, w = gauss_legendre_unit(n_quad)
    f = field.basis.eval_at(r) @ field.coeffs
    g = np.abs(f) / r**nu
    if math.isinf(p):
        return float(np.max(g))
    return float(np.dot(w * r, g**p)) ** (1.0 / p)


def check_embedding(beta: float, nu: float, p: float, samples, levels=(256, 512, 1024, 2048),
                    rtol: float = 1.0e-3) -> EmbeddingReport:
    """Refinement study of |f/r^nu|_{L^p} for unit-|.|_beta samples."""
    if not embedding_window_ok(beta, nu, p):
        raise ValidationError(
            f"(beta={beta}, nu={nu}, p={p}) is outside the window beta > max(1+nu-2/p, 1/2), "
            "nu < 2/p + 1")
    values, changes = [], []
    for f in samples:
        nb = norm_beta_coeffs(f.coeffs, f.basis.zeros, beta)
        unit = ModalField(f.coeffs / nb, f.basis)
        seq = [weighted_lp(unit, nu, p, m) for m in levels]
        values.append(seq[-1])
        changes.append(abs(seq[-1] - seq[-2]) / max(abs(seq[-1]), 1e-300))
    finite = all(math.isfinite(v) for v in values)
    stable = all(c < rtol for c in changes)
    return EmbeddingReport(beta, nu, p, values, changes, max(values, default=0.0), finite, stable)

