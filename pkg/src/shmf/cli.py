"""Command-line entry point: ``shmf <command> [--config FILE] ...``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 numerical stall.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bessel_core import build_basis
from .config import ExperimentConfig, default_config, initial_field, load_config
from .errors import ShmfError, UsageError, ValidationError
from .modal_space import norm_beta
from .montecarlo import run_monte_carlo, simulate_single, write_mc_outputs
from .records import format_float, write_jsonl, write_text
from .solver import STALLED, run

log = logging.getLogger("shmf")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_STALL = 2


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config()
    overrides = {}
    if args.seed is not None:
        overrides["mc.seed"] = args.seed
    if args.paths is not None:
        overrides["mc.n_paths"] = args.paths
    if args.out is not None:
        overrides["output.dir"] = args.out
    if getattr(args, "workers", None) is not None:
        overrides["mc.workers"] = args.workers
    return cfg.with_overrides(**overrides) if overrides else cfg


def cmd_spectrum(args) -> int:
    cfg = _load(args)
    n = args.n_modes or cfg.solver.n_modes
    b = build_basis(n, cfg.solver.n_quad if args.n_modes is None else None)
    lines = ["k,zero,norm_const,eigenvalue"]
    for k, (x, c) in enumerate(zip(b.zeros, b.norm_consts), start=1):
        lines.append(f"{k},{format_float(x)},{format_float(c)},{format_float(-x * x)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        write_text(Path(args.out) / "spectrum.csv", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    tr = simulate_single(cfg, path_index=args.path_index)
    out = Path(cfg.output.dir)
    write_text(out / f"{cfg.output.prefix}_path{args.path_index:05d}.csv", tr.to_csv())
    rec = {"type": "simulate", "path_index": args.path_index, "seed": cfg.mc.seed, "status": tr.status,
           "tau_numeric": tr.tau_numeric, "n_steps": tr.n_steps, "n_rejected": tr.n_rejected,
           "final_time": tr.times[-1], "final_norm_beta": tr.norms[-1], "message": tr.message}
    write_jsonl(out / f"{cfg.output.prefix}_summary.jsonl", [rec])
    log.info("simulate: status=%s t=%.6g steps=%d", tr.status, tr.times[-1], tr.n_steps)
    return EXIT_STALL if tr.status == STALLED else EXIT_OK


def cmd_blowup_prob(args) -> int:
    cfg = _load(args)
    res = run_monte_carlo(cfg, keep_csv=not args.no_path_csv)
    write_mc_outputs(res, cfg, cfg.output.dir)
    log.info("p_hat=%.4f (%d/%d), Wilson 95%% [%.4f, %.4f], stalled=%d", res.p_hat, res.n_blowup,
             res.n_paths, res.interval[0], res.interval[1], res.n_stalled)
    return EXIT_STALL if res.n_stalled else EXIT_OK


def cmd_verify(args) -> int:
    from .experiments import verify_passed, verify_records

    cfg = _load(args)
    recs = verify_records()
    write_jsonl(Path(cfg.output.dir) / f"{cfg.output.prefix}_verify.jsonl", recs)
    ok = verify_passed(recs)
    log.info("verify: %d records, %s", len(recs), "all checks passed" if ok else "checks failed")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_control(args) -> int:
    from .blowup_lab import build_control

    cfg = _load(args)
    basis = cfg.basis()
    h0 = cfg.initial_field(basis)
    h1 = initial_field(cfg.control.target, basis)
    t1 = cfg.control.t1
    path = build_control(h0, h1, t1)
    scfg = cfg.solver.to_solver_config(t_end=t1)
    tr = run(h0, scfg, path=path)
    out = Path(cfg.output.dir)
    write_text(out / f"{cfg.output.prefix}_control.csv", tr.to_csv())
    beta = cfg.solver.beta
    err = norm_beta(tr.final_h - h1, beta) if tr.final_h is not None else float("nan")
    scale = norm_beta(h0, beta) + norm_beta(h1, beta)
    rec = {"type": "control", "t1": t1, "status": tr.status, "endpoint_error": err,
           "relative_error": err / scale if scale > 0 else err,
           "control_sup_norm": path.sup_norm(t1, beta)}
    write_jsonl(out / f"{cfg.output.prefix}_control.jsonl", [rec])
    log.info("control: status=%s endpoint error %.3e", tr.status, err)
    return EXIT_STALL if tr.status == STALLED else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--out", help="override output.dir")
    common.add_argument("--paths", type=int, help="override mc.n_paths")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors")

    p = argparse.ArgumentParser(prog="shmf", description="Stochastic corotational heat-flow toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("spectrum", parents=[common], help="print Bessel zeros and normalisations")
    s.add_argument("--n-modes", type=int)
    s.set_defaults(func=cmd_spectrum)
    s = sub.add_parser("simulate", parents=[common], help="run a single path")
    s.add_argument("--path-index", type=int, default=0)
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("blowup-prob", parents=[common], help="Monte Carlo estimate of P(tau <= t*)")
    s.add_argument("--workers", type=int)
    s.add_argument("--no-path-csv", action="store_true", help="skip per-path CSV files")
    s.set_defaults(func=cmd_blowup_prob)
    s = sub.add_parser("verify", parents=[common], help="run the subsolution and identity checkers")
    s.set_defaults(func=cmd_verify)
    s = sub.add_parser("control", parents=[common], help="build a steering path and test it")
    s.set_defaults(func=cmd_control)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ShmfError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_STALL


if __name__ == "__main__":
    sys.exit(main())
