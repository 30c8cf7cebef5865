"""
Command Line

  sample        one graph + features from a model file -> edges.txt, features.csv, sample.json
  snr           per-trial rho^(k) for a model -> snr.csv, snr.json
  walks-verify  the combinatorial and walk-moment checks of the suite
  bounds-check  theorem checks for a model -> bounds.csv, bounds.json
  experiment    one study plan -> <study>.csv / .json / .svg
  verify        the whole suite at --level quick|full -> verify.csv, verify.json

Exit codes: 0 success, 1 a check failed, 2 bad configuration.
"""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from bounds import REPORT_COLUMNS, bounds_report
from config import (
    DEFAULT_OUT,
    DEFAULT_SEED,
    VERSION,
    LabConfig,
    configure_logging,
    load_config,
    resolve_threads,
)
from csbm import ModelSpec, assign_labels, load_model_spec, sample_features, sample_graph
from errors import ConfigError, LabError
from experiments import load_plan, run_plan
from features import (
    DEFAULT_OBSERVED_FRACTION,
    TRIAL_COLUMNS,
    build_feature_set,
    holdout_error,
    snr,
    trial_row,
)
from montecarlo import mean_se, run_trials
from reports import build_id, plan_hash, write_csv, write_json
from verify import run_verify_suite
from walks import expected_power

log = logging.getLogger(__name__)

WALK_CHECKS = ("counting", "moment_oracle", "nstar", "proxy", "auxiliary")


def _load_model(path: Optional[str]) -> ModelSpec:
    if not path:
        raise ConfigError("--model is required")
    return load_model_spec(path)


def _ks(args: argparse.Namespace, spec: ModelSpec) -> List[int]:
    return list(args.k) if args.k else [spec.k]


# =============================================================================
# SECTION 1: SUBCOMMANDS
# =============================================================================

def cmd_sample(args: argparse.Namespace, config: LabConfig) -> int:
    spec = _load_model(args.model)
    labels = assign_labels(spec)
    graph = sample_graph(spec, labels, args.seed)
    X = sample_features(spec, labels, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "edges.txt").write_text(graph.to_edge_list_text(), encoding="utf-8")

    columns = ("node", "label") + tuple(f"x{m}" for m in range(spec.d))
    rows = [{"node": i, "label": int(labels.y[i]), **{f"x{m}": X[i, m] for m in range(spec.d)}}
            for i in range(spec.n)]
    digest = plan_hash(spec.to_dict())
    write_csv(out / "features.csv", columns, rows, {"build_id": build_id(), "plan_hash": digest, "seed": args.seed})

    degrees = graph.degrees()
    write_json(out / "sample.json", {
        "model": spec.to_dict(),
        "seed": args.seed,
        "plan_hash": digest,
        "edges": graph.num_edges,
        "nu_n": spec.nu_n,
        "mean_degree": float(degrees.mean()),
        "max_degree": int(degrees.max()),
        "class_sizes": labels.n_ell.tolist(),
        "class_mean_degree": [float(degrees[labels.members(ell)].mean()) for ell in range(spec.L)],
    })
    log.info("sampled n=%d: %d edges, mean degree %.3f (nu_n %.3f)",
             spec.n, graph.num_edges, float(degrees.mean()), spec.nu_n)
    return 0


def cmd_snr(args: argparse.Namespace, config: LabConfig) -> int:
    spec = _load_model(args.model)
    labels = assign_labels(spec)
    ks = _ks(args, spec)
    trials = args.trials or 10
    if trials < 1:
        raise ConfigError(f"--trials must be >= 1, got {trials}")
    digest = plan_hash({"model": spec.to_dict(), "k": ks, "trials": trials, "seed": args.seed})
    expected = {k: expected_power(spec, labels, k, config.guards) for k in ks}
    build = build_id()

    def one(trial: int) -> List[Dict[str, Any]]:
        A = sample_graph(spec, labels, args.seed, trial)
        X = sample_features(spec, labels, args.seed, trial)
        rows = []
        for k in ks:
            fs = build_feature_set(A, X, labels, k, DEFAULT_OBSERVED_FRACTION, args.seed, trial)
            report = snr(spec, labels, A, X, k, expected[k], phi=fs.phi_k)
            try:
                err = holdout_error(fs, spec.L)
            except ConfigError as e:
                log.warning("trial %d k=%d: no classifier (%s)", trial, k, e)
                err = math.nan
            row = trial_row(args.seed, spec, report, err, DEFAULT_OBSERVED_FRACTION, build, digest)
            rows.append({"trial": trial, **row})
        return rows

    rows = [row for batch in run_trials(one, trials, args.threads) for row in batch]
    rows.sort(key=lambda r: (r["k"], r["trial"]))
    out = Path(args.out)
    write_csv(out / "snr.csv", ("trial",) + TRIAL_COLUMNS, rows)

    summary = {}
    for k in ks:
        values = [r["rho_times_sqrt_nu"] for r in rows if r["k"] == k]
        mean, se = mean_se(values)
        summary[str(k)] = {"mean_rho_times_sqrt_nu": mean, "se": se,
                           "mean_rho": float(np.mean([r["rho"] for r in rows if r["k"] == k]))}
        log.info("k=%d: sqrt(nu) rho = %.4g +- %.2g over %d trials", k, mean, se, trials)
    write_json(out / "snr.json", {"model": spec.to_dict(), "seed": args.seed, "trials": trials,
                                  "plan_hash": digest, "build_id": build, "summary": summary})
    return 0


def cmd_bounds(args: argparse.Namespace, config: LabConfig) -> int:
    spec = _load_model(args.model)
    labels = assign_labels(spec)
    trials = args.trials or 0
    reports = [bounds_report(spec, labels, k, trials, args.seed, args.threads, config,
                             scenario=Path(args.model).stem) for k in _ks(args, spec)]
    out = Path(args.out)
    digest = plan_hash({"model": spec.to_dict(), "k": [r.k for r in reports], "trials": trials})
    rows = [row for r in reports for row in r.to_rows()]
    write_csv(out / "bounds.csv", REPORT_COLUMNS, rows, {"build_id": build_id(), "plan_hash": digest, "seed": args.seed})
    write_json(out / "bounds.json", {"plan_hash": digest, "seed": args.seed, "trials": trials,
                                     "reports": [r.to_dict() for r in reports]})

    failed = [c for r in reports for c in r.failed]
    vacuous = [c for r in reports for c in r.vacuous]
    for c in failed:
        log.error("%s failed: %.6g > %.6g", c.name, c.lhs, c.rhs)
    if vacuous:
        log.info("vacuous: %s", ", ".join(sorted({c.name for c in vacuous})))
    return 1 if failed else 0


def cmd_experiment(args: argparse.Namespace, config: LabConfig) -> int:
    if not args.plan:
        raise ConfigError("--plan is required")
    plan = load_plan(args.plan).with_overrides(seed=args.seed_override, trials=args.trials,
                                               out_dir=args.out_override)
    result = run_plan(plan, args.threads, config)
    failed = result.summary.get("failed_cells", 0)
    if failed:
        log.warning("%d cell(s) failed; see the error column", failed)
    return 0


def _suite(args: argparse.Namespace, config: LabConfig, checks: Optional[Sequence[str]]) -> int:
    report = run_verify_suite(args.level, checks, args.seed, args.threads, config, args.out)
    for cell in report.failed:
        log.error("%s/%s: %s %s", cell.check, cell.case, cell.status, cell.detail)
    vacuous = report.by_status("vacuous")
    if vacuous:
        log.info("vacuous: %s", ", ".join(f"{c.check}/{c.case}" for c in vacuous))
    return 0 if report.passed else 1


def cmd_walks_verify(args: argparse.Namespace, config: LabConfig) -> int:
    return _suite(args, config, WALK_CHECKS)


def cmd_verify(args: argparse.Namespace, config: LabConfig) -> int:
    return _suite(args, config, args.check)


COMMANDS: Dict[str, Callable[[argparse.Namespace, LabConfig], int]] = {
    "sample": cmd_sample,
    "snr": cmd_snr,
    "walks-verify": cmd_walks_verify,
    "bounds-check": cmd_bounds,
    "experiment": cmd_experiment,
    "verify": cmd_verify,
}


# =============================================================================
# SECTION 2: PARSER
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csbm-snr", description="CSBM aggregation SNR lab.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="lab config file (TOML or JSON)")
    common.add_argument("--seed", type=int, default=None, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default CSBM_SNR_THREADS or 1)")
    common.add_argument("--out", default=None, help=f"output directory (default {DEFAULT_OUT})")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="sample one graph and its features")
    p.add_argument("--model", required=True, help="model file (TOML or JSON)")

    p = sub.add_parser("snr", parents=[common], help="per-trial SNR for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, nargs="+", help="aggregation depths (default: the model's k)")
    p.add_argument("--trials", type=int, default=None, help="independent trials (default 10)")

    p = sub.add_parser("bounds-check", parents=[common], help="theorem checks for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials; 0 keeps to signal checks")

    p = sub.add_parser("experiment", parents=[common], help="run a study plan")
    p.add_argument("--plan", required=True, help="plan file (TOML or JSON)")
    p.add_argument("--trials", type=int, default=None, help="override the plan's trials")

    for name, text in (("walks-verify", "walk counting and moment checks"), ("verify", "the full check suite")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--level", choices=("quick", "full"), default="quick")
        if name == "verify":
            p.add_argument("--check", action="append", default=None, help="run only this check (repeatable)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config)
        args.threads = resolve_threads(args.threads)
        # experiment plans carry their own seed and output dir; flags only override them
        args.seed_override = args.seed
        args.out_override = args.out
        if args.seed is None:
            args.seed = DEFAULT_SEED
        if args.seed < 0:
            raise ConfigError(f"--seed must be >= 0, got {args.seed}")
        if args.out is None:
            args.out = DEFAULT_OUT
        return COMMANDS[args.command](args, config)
    except ConfigError as e:
        log.error("%s", e)
        return 2
    except LabError as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
