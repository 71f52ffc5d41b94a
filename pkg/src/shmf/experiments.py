"""Reproduction drivers for the acceptance experiments.

Each ``criterion_N`` function runs one experiment at its stated scale and
tolerance and returns a :class:`CriterionResult`; nothing here relaxes a
threshold when a run misses it.
"""
from __future__ import annotations

import filecmp
import logging
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from . import blowup_lab as lab
from .bessel_core import build_basis
from .config import parse_config
from .dynamics import estimate_growth_constants
from .modal_space import ModalField, apply_fractional, norm_beta, project, semigroup, smoothing_constant
from .montecarlo import run_monte_carlo, simulate_single, write_mc_outputs
from .noise import OUState, make_spectrum, ou_step, ou_variance
from .records import write_text
from .solver import BLOWN_UP, COMPLETED, GrowthConstants, SolverConfig, picard_slab, run, slab_length

logger = logging.getLogger(__name__)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extras = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{tag}] criterion {self.number:2d}: {self.title} ({extras})"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)) and len(v) > 8:
        return f"[{len(v)} items]"
    return v


# ---------------------------------------------------------------------------
# 1. eigenbasis fidelity
# ---------------------------------------------------------------------------

def eigen_residual(basis, r) -> float:
    """max_k |A e_k + x_k^2 e_k| / x_k^2 with J1', J1'' from J_{n-1}, J_{n+1} recurrences."""
    r = np.asarray(r, dtype=float)
    worst = 0.0
    for x, c in zip(basis.zeros, basis.norm_consts):
        y = x * r
        j1 = special.jv(1, y)
        d1 = 0.5 * (special.jv(0, y) - special.jv(2, y))
        d2 = 0.25 * (special.jv(3, y) - 3.0 * j1)
        a_e = c * (x * x * d2 + x * d1 / r - j1 / (r * r))
        worst = max(worst, float(np.max(np.abs(a_e + x * x * c * j1))) / (x * x))
    return worst


def criterion_1() -> CriterionResult:
    b = build_basis(64, 512)
    gram = float(np.max(np.abs(b.gram() - np.eye(64))))
    resid = eigen_residual(b, np.linspace(0.01, 0.99, 99))
    c_ref = np.sqrt(2.0) / np.abs(special.j0(b.zeros))
    c_err = float(np.max(np.abs(b.norm_consts - c_ref) / c_ref))
    ok = gram <= 1e-8 and resid <= 1e-6 and c_err <= 1e-8
    return CriterionResult(1, "eigenbasis fidelity N=64 M=512", ok,
                           {"gram_err": gram, "eigen_residual": resid, "norm_const_rel_err": c_err})


# ---------------------------------------------------------------------------
# 2. smoothing bound
# ---------------------------------------------------------------------------

def criterion_2(seed: int = 2, beta: float = 2.5) -> CriterionResult:
    b = build_basis(64)
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    checks = 0
    for alpha in (0.25, 0.5, 1.0):
        for _ in range(100):
            h = ModalField(rng.standard_normal(64) * b.zeros ** (-beta - 1.0 - rng.uniform(0, 2)), b)
            nh = norm_beta(h, beta)
            for t in 10.0 ** rng.uniform(-6, 0, 20):
                lhs = norm_beta(apply_fractional(semigroup(h, t), alpha), beta)
                ratio = lhs / (smoothing_constant(alpha, t) * nh)
                worst = max(worst, ratio)
                checks += 1
                if ratio > 1.0 + 1e-12:
                    violations += 1
    return CriterionResult(2, "smoothing bound (alpha/e)^alpha t^-alpha", violations == 0,
                           {"checks": checks, "violations": violations, "max_ratio": worst})


# ---------------------------------------------------------------------------
# 3. harmonic identities
# ---------------------------------------------------------------------------

HARMONIC_R = np.linspace(0.05, 0.95, 50)


def criterion_3() -> CriterionResult:
    worst = 0.0
    orders = []
    for eps in (0.25, 0.5):
        mu = lab.mu_bar(eps)
        for lam in (0.1, 1.0, 10.0):
            worst = max(worst, lab.check_harmonic_identities(lam, eps, mu, HARMONIC_R, 1e-4))
            # roundoff dominates at h = 1e-4, so the order is measured at coarser steps
            res = [lab.check_harmonic_identities(lam, eps, mu, HARMONIC_R, h)
                   for h in (0.02, 0.01, 0.005)]
            orders += [math.log2(res[0] / res[1]), math.log2(res[1] / res[2])]
    # an observed order above 4 only means the leading h^4 term is small
    ok = worst <= 1e-5 and all(o >= 3.5 for o in orders)
    return CriterionResult(3, "harmonic identities, 4th-order FD", ok,
                           {"max_residual": worst, "min_order": min(orders), "max_order": max(orders)})


# ---------------------------------------------------------------------------
# 4. subsolution inequality
# ---------------------------------------------------------------------------

def criterion_4(eps_values=(0.25, 0.5), lambda0: float = 0.1) -> CriterionResult:
    details = {}
    ok = True
    for eps in eps_values:
        valid = lab.verify_differential_inequality(lab.default_params(eps, lambda0, 1.0))
        doubled = lab.verify_differential_inequality(lab.default_params(eps, lambda0, 2.0))
        details[f"min_slack_eps{eps}"] = valid.min_slack
        details[f"doubled_slack_eps{eps}"] = doubled.min_slack
        ok &= valid.min_slack >= -1e-6 and doubled.min_slack < 0.0
    return CriterionResult(4, "subsolution inequality and delta sharpness probe", ok, details)


# ---------------------------------------------------------------------------
# 5 & 6. deterministic regimes
# ---------------------------------------------------------------------------

def deterministic_run(k: float, n_modes: int, scale: float = 1.0, t_end: float = 1.0, **solver):
    b = build_basis(n_modes)
    h0 = project(lambda r: scale * lab.chi(k, r), b)
    cfg = SolverConfig(n_modes=n_modes, t_end=t_end, **solver)
    t0 = time.perf_counter()
    tr = run(h0, cfg)
    return tr, time.perf_counter() - t0, h0


def criterion_5(k_values=range(6, 13)) -> CriterionResult:
    fired = None
    scan = {}
    for k in k_values:
        tr, secs, _ = deterministic_run(k, 256)
        scan[k] = (tr.status, max(tr.grads))
        if tr.status == BLOWN_UP and tr.tau_numeric < 1.0:
            fired = (k, tr, secs)
            break
    details = {"scan": {k: f"{s}:max_grad={g:.0f}" for k, (s, g) in scan.items()}}
    if fired is None:
        return CriterionResult(5, "deterministic blow-up of chi_k (k<=12) at N=256", False, details)
    k, tr, secs = fired
    fine, _, _ = deterministic_run(k, 512)
    rel = abs(fine.tau_numeric - tr.tau_numeric) / tr.tau_numeric if fine.status == BLOWN_UP else math.inf
    grad_ok = tr.grads[-1] >= 1e3
    ok = grad_ok and rel <= 0.05 and secs < 60.0
    details.update(k=k, tau_256=tr.tau_numeric, tau_512=fine.tau_numeric, rel_diff=rel, runtime_s=secs)
    return CriterionResult(5, "deterministic blow-up of chi_k (k<=12) at N=256", ok, details)


def criterion_6() -> CriterionResult:
    tr, _, h0 = deterministic_run(1, 64, scale=0.1)
    ratio = float(np.linalg.norm(tr.final_h.coeffs) / np.linalg.norm(h0.coeffs))
    ok = tr.status == COMPLETED and ratio <= 1e-3
    return CriterionResult(6, "small-data decay 0.1 chi_1", ok, {"status": tr.status, "H_ratio": ratio})


# ---------------------------------------------------------------------------
# 7. comparison ordering
# ---------------------------------------------------------------------------

def comparison_gap(seed: int, n_modes: int = 64, amplitude: float = 0.05, exponent: float = 3.5,
                   t_cap: float = 0.2, n_out: int = 101):
    b = build_basis(n_modes)
    spectrum = make_spectrum("power_law", amplitude, exponent, b, 2.5)
    outs = tuple(np.linspace(0.0, t_cap, n_out))
    cfg = SolverConfig(n_modes=n_modes, t_end=t_cap, output_times=outs)
    ha = project(lambda r: lab.chi(1, r), b)
    hb = project(lambda r: lab.chi(2, r), b)
    ta = run(ha, cfg, spectrum, seed, 0)
    tb = run(hb, cfg, spectrum, seed, 0)
    horizon = min(ta.tau_numeric if ta.status == BLOWN_UP else t_cap,
                  tb.tau_numeric if tb.status == BLOWN_UP else t_cap, t_cap)
    gaps = [float(np.min(tb.output_grids[t] - ta.output_grids[t]))
            for t in ta.output_grids if t in tb.output_grids and t <= horizon]
    return min(gaps), len(gaps)


def criterion_7(n_seeds: int = 20) -> CriterionResult:
    worst = math.inf
    for seed in range(n_seeds):
        gap, _ = comparison_gap(seed)
        worst = min(worst, gap)
    return CriterionResult(7, "comparison ordering chi_1 <= chi_2 under shared noise", worst >= -1e-6,
                           {"seeds": n_seeds, "min_gap": worst})


# ---------------------------------------------------------------------------
# 8. OU exactness
# ---------------------------------------------------------------------------

def ou_sample_variance(n_paths: int = 10_000, seed: int = 8, times=(0.01, 0.1, 1.0), modes=(1, 2, 3)):
    b = build_basis(8)
    spectrum = make_spectrum("power_law", 1.0, 3.5, b, 2.5)
    samples = {t: np.empty((n_paths, len(modes))) for t in times}
    cols = [m - 1 for m in modes]
    for p in range(n_paths):
        st = OUState.start(b, seed, p)
        now = 0.0
        for t in times:
            # two exact transitions per target time; composition is exact too
            half = 0.5 * (t - now)
            st = ou_step(ou_step(st, half, spectrum, b.zeros), half, spectrum, b.zeros)
            now = t
            samples[t][p] = st.z_coeffs[cols]
    out = {}
    for t in times:
        ref = ou_variance(spectrum.sigmas, b.zeros, t)[cols]
        out[t] = (samples[t].var(axis=0, ddof=1), ref)
    return out


def criterion_8() -> CriterionResult:
    res = ou_sample_variance()
    worst = max(float(np.max(np.abs(v / ref - 1.0))) for v, ref in res.values())
    return CriterionResult(8, "OU variance over 1e4 paths", worst <= 0.05, {"max_rel_dev": worst})


# ---------------------------------------------------------------------------
# 9. controllability
# ---------------------------------------------------------------------------

def smooth_pair(seed: int = 9, n_modes: int = 16, beta: float = 2.5):
    b = build_basis(n_modes)
    rng = np.random.default_rng(seed)
    h0 = ModalField(rng.standard_normal(n_modes) * b.zeros ** (-beta - 1.5) * 20, b)
    h1 = ModalField(rng.standard_normal(n_modes) * b.zeros ** (-beta - 1.5) * 20, b)
    return b, h0, h1


def criterion_9(t1: float = 0.5, beta: float = 2.5) -> CriterionResult:
    b, h0, h1 = smooth_pair(beta=beta)
    path = lab.build_control(h0, h1, t1)
    tr = run(h0, SolverConfig(n_modes=b.n_modes, beta=beta, t_end=t1), path=path)
    err = norm_beta(tr.final_h - h1, beta)
    scale = norm_beta(h0, beta) + norm_beta(h1, beta)
    ok = tr.status == COMPLETED and err <= 1e-3 * scale
    return CriterionResult(9, "control round trip h0 -> h1 in T1=0.5", ok,
                           {"error": err, "bound": 1e-3 * scale, "z_at_0": float(np.abs(path.coeffs_at(0.0)).max())})


# ---------------------------------------------------------------------------
# 10. Picard vs exponential Euler
# ---------------------------------------------------------------------------

PICARD_BETA = 1.5


def picard_cross_check(n_modes: int = 64, scale: float = 0.1, n_fine: int = 4000):
    b = build_basis(n_modes)
    c_g, c_l = estimate_growth_constants(b, PICARD_BETA)
    consts = GrowthConstants(PICARD_BETA, c_g, c_l)
    h0 = project(lambda r: scale * lab.chi(1, r), b)
    slab = slab_length(norm_beta(h0, PICARD_BETA), 0.0, consts)
    rep = picard_slab(b, np.array(h0.coeffs), slab, PICARD_BETA)
    cfg = SolverConfig(n_modes=n_modes, t_end=slab, adaptive=False, dt_init=slab / n_fine,
                       dt_min=slab / (10 * n_fine), dt_floor=slab / (100 * n_fine), dt_max=slab)
    tr = run(h0, cfg)
    diff = tr.final_h.coeffs - rep.v_nodes[-1]
    return rep, consts, slab, diff, b


def criterion_10() -> CriterionResult:
    rep, consts, slab, diff, b = picard_cross_check()
    d15 = float(np.sqrt(np.sum(b.zeros ** (2 * PICARD_BETA) * diff**2)))
    d25 = float(np.sqrt(np.sum(b.zeros**5 * diff**2)))
    ok = d15 <= 1e-4 and d25 <= 1e-4 and rep.max_ratio <= 0.75
    return CriterionResult(10, "Picard slab vs fine exponential Euler", ok,
                           {"slab": slab, "diff_beta1.5": d15, "diff_beta2.5": d25,
                            "max_contraction": rep.max_ratio, "sweeps": rep.sweeps,
                            "c_growth": consts.c_growth, "c_lipschitz": consts.c_lipschitz})


# ---------------------------------------------------------------------------
# 11. blow-up probability
# ---------------------------------------------------------------------------

def mc_config(k: float, n_paths: int, scale: float = 1.0, amplitude: float = 0.1, n_modes: int = 256,
              seed: int = 11, t_star: float = 1.0, workers: int = 1, **solver):
    init = {"kind": "chi_k", "k": k} if scale == 1.0 else {"kind": "scaled_chi", "k": k, "scale": scale}
    noise = ({"kind": "power_law", "amplitude": amplitude, "exponent": 3.5, "beta_target": 2.5}
             if amplitude > 0 else {"kind": "none"})
    return parse_config({"schema_version": 1, "solver": {"n_modes": n_modes, "beta": 2.5, **solver},
                         "noise": noise, "initial": init,
                         "mc": {"n_paths": n_paths, "seed": seed, "t_star": t_star, "workers": workers}})


def criterion_11(n_paths: int = 200, n_extreme: int = 20) -> CriterionResult:
    main = run_monte_carlo(mc_config(8, n_paths))
    high = run_monte_carlo(mc_config(6, n_extreme, seed=111))
    low = run_monte_carlo(mc_config(1, n_extreme, scale=0.1, seed=112))
    ok = (main.p_hat >= 0.95 and main.interval[0] > 0.0 and high.p_hat >= 0.9
          and low.p_hat <= main.p_hat <= high.p_hat)
    return CriterionResult(11, "P(tau <= 1) for chi_8 with noise", ok,
                           {"p_hat": main.p_hat, "wilson": main.interval, "stalled": main.n_stalled,
                            "p_chi6": high.p_hat, "p_small": low.p_hat})


# ---------------------------------------------------------------------------
# 12. determinism
# ---------------------------------------------------------------------------

def determinism_outputs(out_dir: Path, workers: int):
    cfg = mc_config(2, 6, amplitude=0.1, n_modes=32, seed=12, t_star=0.05, workers=workers)
    res = run_monte_carlo(cfg, keep_csv=True)
    write_mc_outputs(res, cfg, out_dir)
    tr = simulate_single(cfg)
    write_text(out_dir / "single.csv", tr.to_csv())
    return sorted(p.name for p in out_dir.iterdir())


def criterion_12() -> CriterionResult:
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / name for name in ("w1a", "w1b", "w4")]
        names = [determinism_outputs(dirs[0], 1), determinism_outputs(dirs[1], 1),
                 determinism_outputs(dirs[2], 4)]
        same_names = names[0] == names[1] == names[2]
        mismatches = [n for n in names[0]
                      if not (filecmp.cmp(dirs[0] / n, dirs[1] / n, shallow=False)
                              and filecmp.cmp(dirs[0] / n, dirs[2] / n, shallow=False))]
    ok = same_names and not mismatches
    return CriterionResult(12, "byte-identical outputs for W in {1,4}", ok,
                           {"files": len(names[0]), "mismatches": mismatches})


ALL = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
       criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


# ---------------------------------------------------------------------------
# checker bundle used by the `verify` command
# ---------------------------------------------------------------------------

def verify_records(eps_values=(0.25, 0.5), lambda0: float = 0.1) -> list[dict]:
    """Structured records of the profile and subsolution checks at admissible parameters."""
    recs = []
    for eps in eps_values:
        mu = lab.mu_bar(eps)
        for lam in (0.1, 1.0, 10.0):
            recs.append({"kind": "harmonic_identity", "epsilon": eps, "mu": mu, "lambda": lam,
                         "max_residual": lab.check_harmonic_identities(lam, eps, mu, HARMONIC_R)})
        params = lab.default_params(eps, lambda0)
        recs.append(lab.verify_differential_inequality(params).as_record())
        t = 0.99 * params.blowup_time
        recs.append({"kind": "lambda_ode", "epsilon": eps, "t": t,
                     "closed_form": lab.lambda_of_t(params, t), "rk4": lab.lambda_rk4(params, t)})
        recs.append({"kind": "sharpness_probe", "epsilon": eps,
                     "critical_delta_factor": lab.critical_delta_factor(eps, lambda0)})
    return recs


def verify_passed(records) -> bool:
    ok = True
    for r in records:
        if r["kind"] == "harmonic_identity":
            ok &= r["max_residual"] <= 1e-5
        elif r["kind"] == "differential_inequality":
            ok &= r["min_slack"] >= -1e-6
        elif r["kind"] == "lambda_ode":
            ok &= abs(r["closed_form"] - r["rk4"]) <= 1e-8
    return ok
