"""Monte Carlo estimation of the blow-up probability P(tau <= t_star).

Each path is keyed by ``(seed, path_index)`` so a path's noise does not
depend on which worker runs it or in what order; results are merged by
path index and the written artifacts are byte-identical across worker
counts.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from scipy.stats import norm

from .config import ExperimentConfig, parse_config
from .errors import ValidationError
from .records import write_jsonl, write_text
from .solver import BLOWN_UP, STALLED, Trajectory, run

logger = logging.getLogger(__name__)


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion k/n."""
    if n <= 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + confidence / 2.0))
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass
class PathOutcome:
    path_index: int
    seed: int
    status: str
    tau_numeric: float
    n_steps: int
    n_rejected: int
    max_grad0: float
    message: str = ""
    csv: str = field(default="", repr=False)

    def record(self) -> dict:
        return {"type": "path", "path_index": self.path_index, "seed": self.seed,
                "status": self.status, "tau_numeric": self.tau_numeric,
                "n_steps": self.n_steps, "n_rejected": self.n_rejected,
                "max_grad0": self.max_grad0, "message": self.message}


@dataclass
class McResult:
    n_paths: int
    n_blowup: int
    n_stalled: int
    p_hat: float
    interval: tuple[float, float]
    outcomes: list
    runtime: float = 0.0

    def summary_record(self, cfg: ExperimentConfig) -> dict:
        return {"type": "summary", "n_paths": self.n_paths, "n_blowup": self.n_blowup,
                "n_stalled": self.n_stalled, "p_hat": self.p_hat,
                "wilson_lo": self.interval[0], "wilson_hi": self.interval[1],
                "t_star": cfg.mc.t_star, "seed": cfg.mc.seed,
                "n_modes": cfg.solver.n_modes, "noise_amplitude": cfg.noise.amplitude,
                "noise_exponent": cfg.noise.exponent, "beta": cfg.solver.beta}


# per-process cache, filled by _init_worker or lazily in-process
_WORKER: dict = {}


def _init_worker(cfg_dump: dict) -> None:
    cfg = parse_config(cfg_dump)
    basis = cfg.basis()
    _WORKER.clear()
    _WORKER.update(cfg=cfg, basis=basis, spectrum=cfg.spectrum(basis), h0=cfg.initial_field(basis),
                   solver=cfg.solver.to_solver_config(t_end=cfg.mc.t_star))


def simulate_path(path_index: int, keep_csv: bool = False) -> PathOutcome:
    w = _WORKER
    cfg = w["cfg"]
    traj: Trajectory = run(w["h0"], w["solver"], w["spectrum"], cfg.mc.seed, path_index)
    return PathOutcome(path_index, cfg.mc.seed, traj.status, traj.tau_numeric, traj.n_steps,
                       traj.n_rejected, max(traj.grads, default=0.0), traj.message,
                       traj.to_csv() if keep_csv else "")


def _run_chunk(args) -> PathOutcome:
    idx, keep_csv = args
    return simulate_path(idx, keep_csv)


def check_blowup_hypotheses(cfg: ExperimentConfig) -> None:
    if not 2.0 < cfg.solver.beta < 4.0:
        raise ValidationError(f"solver.beta: blow-up experiments need beta in (2, 4), got {cfg.solver.beta}")


def run_monte_carlo(cfg: ExperimentConfig, workers: int | None = None,
                    keep_csv: bool = False) -> McResult:
    """Simulate ``cfg.mc.n_paths`` paths and count blow-ups before ``t_star``.

    Stalled paths are excluded from the denominator and reported separately.
    """
    check_blowup_hypotheses(cfg)
    workers = workers or cfg.mc.workers
    t0 = time.perf_counter()
    indices = list(range(cfg.mc.n_paths))
    jobs = [(i, keep_csv) for i in indices]
    if workers == 1:
        _init_worker(cfg.model_dump())
        outcomes = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg.model_dump(),)) as pool:
            outcomes = list(pool.map(_run_chunk, jobs, chunksize=1))
    outcomes.sort(key=lambda o: o.path_index)
    stalled = [o for o in outcomes if o.status == STALLED]
    if stalled:
        logger.warning("%d of %d paths stalled and are excluded from p_hat: %s", len(stalled),
                       len(outcomes), [o.path_index for o in stalled])
    counted = [o for o in outcomes if o.status != STALLED]
    n_blow = sum(1 for o in counted if o.status == BLOWN_UP and o.tau_numeric <= cfg.mc.t_star)
    n = len(counted)
    p_hat = n_blow / n if n else math.nan
    return McResult(n, n_blow, len(stalled), p_hat, wilson_interval(n_blow, n), outcomes,
                    time.perf_counter() - t0)


def write_mc_outputs(result: McResult, cfg: ExperimentConfig, out_dir) -> Path:
    """Per-path CSVs (when kept) plus ``<prefix>_summary.jsonl``.

    The wall-clock runtime is logged, not written, so reruns are byte-identical.
    """
    out = Path(out_dir)
    prefix = cfg.output.prefix
    for o in result.outcomes:
        if o.csv:
            write_text(out / f"{prefix}_path{o.path_index:05d}.csv", o.csv)
    records = [o.record() for o in result.outcomes] + [result.summary_record(cfg)]
    path = write_jsonl(out / f"{prefix}_summary.jsonl", records)
    logger.info("monte carlo: %d paths in %.2fs", len(result.outcomes), result.runtime)
    return path


def simulate_single(cfg: ExperimentConfig, path_index: int = 0) -> Trajectory:
    basis = cfg.basis()
    return run(cfg.initial_field(basis), cfg.solver.to_solver_config(), cfg.spectrum(basis),
               cfg.mc.seed, path_index)
