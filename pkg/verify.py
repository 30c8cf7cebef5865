"""
Verification Suite

run_verify_suite(level, checks, seed, threads) runs named checks, each a list
of cases, and collects one SuiteCell per case:

  pass     - the case ran and every inequality / equality held
  fail     - a bound was violated or two computation paths disagreed
  vacuous  - the case ran but a precondition of the claim does not hold
  skipped  - a complexity guard would be exceeded
  error    - the case crashed (counted as a failure)

A failing case never stops the suite. Levels: "quick" (desk-scale, a couple of
minutes on one core) and "full" (adds the Monte Carlo studies).
"""

import logging
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from bounds import (
    FAIL,
    PASS,
    VACUOUS,
    check_main_theorem,
    check_noise_theorems,
    check_signal_theorem,
)
from config import DEFAULT_CONFIG, DEFAULT_SEED, LabConfig
from csbm import ModelSpec, assign_labels, sample_features, sample_graph
from errors import ConfigError, ConsistencyError, GuardExceeded, LabError
from experiments import ExperimentPlan, run_oversmoothing_scale, run_parity_boundary, run_rate_invariance
from features import noise_split, population_centers
from linalg import check_EAk_Pk, check_monomial_deviation, mc_Ak_concentration
from montecarlo import stream
from reports import build_id, plan_hash, write_csv, write_json
from walks import (
    check_Akij_growth,
    check_edge_moment_inequality,
    check_mixed_moment_inequality,
    count_closed,
    count_Nt,
    exact_EAk,
    expected_power,
    mc_delta_moments,
    moment_decomposition,
    proxy_coverage,
    theta_report,
)

log = logging.getLogger(__name__)

SKIPPED, ERROR = "skipped", "error"
LEVELS = ("quick", "full")
SUITE_COLUMNS = ("check", "case", "status", "metric", "bound", "margin", "detail")


@dataclass(frozen=True)
class SuiteCell:
    check: str
    case: str
    status: str
    metric: float = math.nan
    bound: float = math.nan
    detail: str = ""

    @property
    def margin(self) -> float:
        return self.bound - self.metric

    def to_row(self) -> Dict[str, Any]:
        return {"check": self.check, "case": self.case, "status": self.status, "metric": self.metric,
                "bound": self.bound, "margin": self.margin, "detail": self.detail}


@dataclass
class SuiteReport:
    level: str
    seed: int
    checks: Tuple[str, ...]
    cells: List[SuiteCell] = field(default_factory=list)

    def by_status(self, status: str) -> List[SuiteCell]:
        return [c for c in self.cells if c.status == status]

    @property
    def failed(self) -> List[SuiteCell]:
        return [c for c in self.cells if c.status in (FAIL, ERROR)]

    @property
    def passed(self) -> bool:
        return not self.failed

    @property
    def plan_hash(self) -> str:
        return plan_hash({"level": self.level, "seed": self.seed, "checks": list(self.checks)})

    def counts(self) -> Dict[str, int]:
        out = {s: 0 for s in (PASS, FAIL, VACUOUS, SKIPPED, ERROR)}
        for c in self.cells:
            out[c.status] += 1
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "seed": self.seed,
            "checks": list(self.checks),
            "plan_hash": self.plan_hash,
            "build_id": build_id(),
            "counts": self.counts(),
            "passed": self.passed,
            "vacuous": [f"{c.check}/{c.case}" for c in self.by_status(VACUOUS)],
            "cells": [c.to_row() for c in self.cells],
        }

    def write(self, out_dir: Any) -> List[Path]:
        out = Path(out_dir)
        provenance = {"build_id": build_id(), "plan_hash": self.plan_hash, "seed": self.seed}
        return [
            write_csv(out / "verify.csv", SUITE_COLUMNS, [c.to_row() for c in self.cells], provenance),
            write_json(out / "verify.json", self.to_dict()),
        ]


@dataclass(frozen=True)
class Context:
    level: str
    seed: int
    threads: int
    config: LabConfig

    @property
    def full(self) -> bool:
        return self.level == "full"


Case = Callable[[], SuiteCell]


def _run(check: str, case: str, fn: Callable[[], SuiteCell]) -> SuiteCell:
    try:
        return fn()
    except GuardExceeded as e:
        log.info("%s/%s skipped: %s", check, case, e)
        return SuiteCell(check, case, SKIPPED, detail=str(e))
    except ConsistencyError as e:
        log.error("%s/%s inconsistent: %s", check, case, e)
        return SuiteCell(check, case, FAIL, detail=str(e))
    except Exception as e:
        log.error("%s/%s crashed: %s", check, case, e)
        log.debug(traceback.format_exc())
        return SuiteCell(check, case, ERROR, detail=f"{type(e).__name__}: {e}")


def _status(ok: Optional[bool]) -> str:
    if ok is None:
        return VACUOUS
    return PASS if ok else FAIL


# =============================================================================
# SECTION 1: COMBINATORIAL CHECKS
# =============================================================================

def counting_cases(ctx: Context) -> List[Tuple[str, Case]]:
    """Open-walk counts for every t, closed-walk counts (equality at k = 2t)."""
    ns = range(3, 9) if ctx.full else range(3, 7)
    ks = range(1, 7) if ctx.full else range(1, 5)

    def case(n: int, k: int) -> SuiteCell:
        open_records = [count_Nt(n, k, 0, 1, t, ctx.config.guards) for t in range(1, k + 1)]
        closed = [count_closed(n, k, 0, t, ctx.config.guards) for t in range(1, k + 1)] if k >= 2 else []
        bad = [f"N_{r.t}" for r in open_records if not r.satisfied]
        bad += [f"closed t={r.t}" for r in closed if not r.satisfied]
        equalities = sum(1 for r in closed if r.equality)
        worst = min([r.bound - r.count for r in open_records])
        return SuiteCell("counting", f"n={n} k={k}", FAIL if bad else PASS, float(-worst), 0.0,
                         f"equalities={equalities}" + (f" failing={','.join(bad)}" if bad else ""))

    return [(f"n={n} k={k}", lambda n=n, k=k: case(n, k)) for n in ns for k in ks]


def _small_model(n: int, mu: Sequence[float] = (1.0, -1.0), sigma: float = 1.0,
                 p: float = 0.5, q: float = 0.2) -> Tuple[ModelSpec, Any]:
    spec = ModelSpec.two_class(n, p, q, list(mu), sigma)
    return spec, assign_labels(spec)


def moment_oracle_cases(ctx: Context) -> List[Tuple[str, Case]]:
    """Exact E[Delta^2] (Theta_hi + Theta_lo) against Monte Carlo on dense graphs."""
    trials = 100_000 if ctx.full else 20_000
    grid = [(8, 1), (8, 2), (12, 1), (12, 2)] if ctx.full else [(8, 1), (8, 2)]

    def case(n: int, k: int) -> SuiteCell:
        spec, labels = _small_model(n)
        table = moment_decomposition(spec, labels, 0, 0, 2, k, ctx.config.guards, ctx.threads)
        mc = mc_delta_moments(spec, labels, 0, 0, 2, k, trials, ctx.seed, ctx.threads,
                              guards=ctx.config.guards)
        gap = abs(mc.mean - table.moment)
        return SuiteCell("moment_oracle", f"n={n} k={k}", PASS if gap <= 4.0 * mc.stderr else FAIL,
                         gap, 4.0 * mc.stderr,
                         f"exact={table.moment:.10g} mc={mc.mean:.10g} ci=[{mc.ci_low:.6g},{mc.ci_high:.6g}]")

    return [(f"n={n} k={k}", lambda n=n, k=k: case(n, k)) for n, k in grid]


def nstar_cases(ctx: Context) -> List[Tuple[str, Case]]:
    """Every maximal sequence passes the tree clauses; (r-1)!! matchings realized."""
    grid = [(2, 2, 8), (2, 3, 6), (4, 2, 5)]
    if ctx.full:
        grid += [(2, 2, 10), (2, 3, 10), (4, 2, 7), (4, 3, 5)]

    def case(r: int, k: int, n: int) -> SuiteCell:
        spec, labels = _small_model(n)
        table = moment_decomposition(spec, labels, 0, 0, r, k, ctx.config.guards, ctx.threads)
        ok = table.matchings == table.matchings_expected and table.nstar_count == table.nstar_expected
        return SuiteCell("nstar", f"r={r} k={k} n={n}", PASS if ok else FAIL,
                         float(table.matchings), float(table.matchings_expected),
                         f"|N_*|={table.nstar_count} census_ok={table.bounds_ok}")

    return [(f"r={r} k={k} n={n}", lambda r=r, k=k, n=n: case(r, k, n)) for r, k, n in grid]


def proxy_cases(ctx: Context) -> List[Tuple[str, Case]]:
    """|Theta_hi - proxy| against its gap bound; k = 1 runs noiseless features."""
    ns = (12, 20, 30) if ctx.full else (12, 20)

    def case(n: int, k: int) -> SuiteCell:
        spec, labels = _small_model(n, mu=(1.0, 0.5), sigma=0.0 if k == 1 else 0.5, p=0.3, q=0.1)
        rep = theta_report(spec, labels, 0, 0, 2, k, ctx.config.guards, ctx.threads)
        gap = abs(rep.theta_hi - rep.theta_hi_proxy)
        return SuiteCell("proxy", f"n={n} k={k}", _status(rep.passed), gap, rep.proxy_gap_bound,
                         f"theta_hi={rep.theta_hi:.10g} proxy={rep.theta_hi_proxy:.10g}")

    return [(f"n={n} k={k}", lambda n=n, k=k: case(n, k)) for n in ns for k in (1, 2)]


# =============================================================================
# SECTION 2: DETERMINISTIC MATRIX CHECKS
# =============================================================================

def matrix_cases(ctx: Context) -> List[Tuple[str, Case]]:
    instances = 500 if ctx.full else 50

    def monomial() -> SuiteCell:
        rng = stream(ctx.seed, "verify-monomial")
        worst, bad = math.inf, 0
        for _ in range(instances):
            n, k = int(rng.integers(2, 51)), int(rng.integers(1, 5))
            U = rng.normal(size=(n, n)) / math.sqrt(n)
            U = (U + U.T) / 2.0
            V = U + rng.normal(scale=float(rng.uniform(0.01, 1.0)), size=(n, n)) / math.sqrt(n)
            rec = check_monomial_deviation(U, V, k, ctx.config.guards)
            worst = min(worst, rec.margin)
            bad += not rec.satisfied
        return SuiteCell("matrix", "monomial", FAIL if bad else PASS, -worst, 0.0,
                         f"instances={instances} violations={bad}")

    def eak_pk() -> SuiteCell:
        rng = stream(ctx.seed, "verify-eak-pk")
        worst, bad = math.inf, 0
        for _ in range(instances):
            L = int(rng.integers(1, 4))
            n = int(rng.integers(5 * L, 51))
            k = int(rng.integers(1, 5))
            B = rng.uniform(0.0, 0.5, size=(L, L))
            B = (B + B.T) / 2.0
            pi = 1.0 + rng.random(L)
            spec = ModelSpec(n=n, d=1, L=L, B=B, pi=pi / pi.sum(), mu=rng.normal(size=(1, L)), sigma=1.0)
            rec = check_EAk_Pk(spec, assign_labels(spec), k, ctx.config.guards)
            worst = min(worst, rec.margin)
            bad += not rec.satisfied
        return SuiteCell("matrix", "EAk_Pk", FAIL if bad else PASS, -worst, 0.0,
                         f"instances={instances} violations={bad}")

    return [("monomial", monomial), ("EAk_Pk", eak_pk)]


def features_cases(ctx: Context) -> List[Tuple[str, Case]]:
    """Anchor-free centers and both noise splits on sampled data."""
    def case(k: int) -> SuiteCell:
        spec, labels = _small_model(200, p=0.1, q=0.02)
        A = sample_graph(spec, labels, ctx.seed, k)
        X = sample_features(spec, labels, ctx.seed, k)
        population_centers(spec, labels, k)
        split = noise_split(spec, labels, A, X, k, threads=ctx.threads).to_dict()
        return SuiteCell("features", f"k={k}", PASS, split["dev"], math.nan,
                         f"delta_rms={split['delta_rms']:.6g} delta_eps_rms={split['delta_eps_rms']:.6g}")

    return [(f"k={k}", lambda k=k: case(k)) for k in (1, 2, 3)]


def auxiliary_cases(ctx: Context) -> List[Tuple[str, Case]]:
    """Oracle agreement, E[A^k] growth, N_* coverage and the two moment inequalities."""
    def oracle(k: int) -> SuiteCell:
        spec, labels = _small_model(12, p=0.4, q=0.1)
        walk = exact_EAk(spec, labels, k, ctx.config.guards)
        pattern = expected_power(spec, labels, k, ctx.config.guards, source="pattern").dense()
        gap = float(np.max(np.abs(walk - pattern)))
        bound = ctx.config.guards.consistency_rtol * float(np.max(np.abs(pattern)))
        return SuiteCell("auxiliary", f"oracle k={k}", PASS if gap <= bound else FAIL, gap, bound)

    def growth(k: int) -> SuiteCell:
        nu = max(4.0 * k * math.exp(2 * (k - 1)), 10.0)
        spec = ModelSpec.two_class(100_000, nu / 100_000, nu / 500_000, [1.0, -1.0], 1.0, k=k)
        rec = check_Akij_growth(spec, assign_labels(spec), k, ctx.config.guards)
        status = _status(rec.satisfied if rec.precondition else None)
        return SuiteCell("auxiliary", f"growth k={k}", status, -min(rec.entry_margin, rec.row_margin), 0.0,
                         f"nu={nu:.6g} max_row_norm={rec.max_row_norm:.6g}")

    def coverage(n: int, k: int) -> SuiteCell:
        cov = proxy_coverage(n, 2, k)
        return SuiteCell("auxiliary", f"coverage n={n} k={k}", _status(cov["satisfied"]),
                         cov["lower"], cov["ratio"])

    def edge_moment() -> SuiteCell:
        spec, labels = _small_model(6, p=0.6, q=0.3)
        rec = check_edge_moment_inequality(spec, labels, 2, 2, guards=ctx.config.guards)
        return SuiteCell("auxiliary", "edge-moment", _status(rec.satisfied), rec.lhs, rec.rhs,
                         f"checks={rec.extra['checks']}")

    def mixed_moment() -> SuiteCell:
        rec = check_mixed_moment_inequality(ctx.seed, cases=200 if ctx.full else 50)
        return SuiteCell("auxiliary", "mixed-moment", _status(rec.satisfied), rec.lhs, rec.rhs)

    cases: List[Tuple[str, Case]] = [(f"oracle k={k}", lambda k=k: oracle(k)) for k in (1, 2, 3)]
    cases += [(f"growth k={k}", lambda k=k: growth(k)) for k in (1, 2, 3, 4)]
    cases += [(f"coverage n={n} k={k}", lambda n=n, k=k: coverage(n, k)) for n in (100, 1000) for k in (2, 3)]
    cases += [("edge-moment", edge_moment), ("mixed-moment", mixed_moment)]
    return cases


# =============================================================================
# SECTION 3: THEOREM CHECKS
# =============================================================================

def signal_scenarios() -> List[Tuple[str, ModelSpec]]:
    """Three or more scenarios meeting every signal precondition, plus vacuous ones."""
    def two(n: int, nu: float, shape: float, mu: Any, k: int) -> ModelSpec:
        p = nu / n
        return ModelSpec(n=n, d=np.asarray(mu).shape[0], L=2, B=[[p, shape * p], [shape * p, p]],
                         pi=[0.5, 0.5], mu=mu, sigma=1.0, k=k)

    root2 = math.sqrt(2.0)
    return [
        ("assortative-k1", two(1_000_000, 1e5, 0.0, [[1.0, -1.0]], 1)),
        ("two-dim-k1", two(1_000_000, 2e5, 0.0, [[root2, 0.0], [0.0, root2]], 1)),
        ("mixed-k1", two(10_000_000, 1e6, 0.6, [[1.0, -1.0]], 1)),
        ("assortative-k2", two(1_000_000_000, 1e8, 0.0, [[1.0, -1.0]], 2)),
        ("degenerate-means", two(1_000_000, 1e5, 0.0, [[1.0, 1.0]], 1)),
        ("small-n", two(200, 20.0, 0.2, [[1.0, -1.0]], 1)),
    ]


def _from_checks(check: str, case: str, results: Sequence[Any]) -> SuiteCell:
    statuses = {r.status for r in results}
    status = FAIL if FAIL in statuses else (VACUOUS if VACUOUS in statuses else PASS)
    worst = min(results, key=lambda r: r.margin)
    missing = sorted({m for r in results for m in r.preflight})
    detail = " ".join(f"{r.name}={r.status}" for r in results)
    if missing:
        detail += f" missing={','.join(missing)}"
    return SuiteCell(check, case, status, worst.lhs, worst.rhs, detail)


def signal_cases(ctx: Context) -> List[Tuple[str, Case]]:
    def case(name: str, spec: ModelSpec) -> SuiteCell:
        labels = assign_labels(spec)
        return _from_checks("signal", name, check_signal_theorem(spec, labels, spec.k, ctx.config))

    return [(name, lambda name=name, spec=spec: case(name, spec)) for name, spec in signal_scenarios()]


def noise_cases(ctx: Context) -> List[Tuple[str, Case]]:
    trials = 1000 if ctx.full else 200

    def case(n: int, k: int) -> SuiteCell:
        spec, labels = _small_model(n, p=0.5, q=0.25)
        results = check_noise_theorems(spec, labels, k, trials, ctx.seed, ctx.threads, ctx.config)
        return _from_checks("noise", f"n={n} k={k}", results)

    grid = [(20, 1), (40, 1)] + ([(40, 2)] if ctx.full else [])
    return [(f"n={n} k={k}", lambda n=n, k=k: case(n, k)) for n, k in grid]


def main_cases(ctx: Context) -> List[Tuple[str, Case]]:
    trials = 500 if ctx.full else 200
    grid = [(2000, 1), (2000, 2)] if ctx.full else [(500, 1)]

    def case(n: int, k: int) -> SuiteCell:
        nu = n ** 0.7
        spec = ModelSpec.two_class(n, nu / n, nu / (5.0 * n), [1.0, -1.0], 1.0, k=k)
        labels = assign_labels(spec)
        results = check_main_theorem(spec, labels, k, trials, ctx.seed, ctx.threads, ctx.config)
        return _from_checks("main", f"n={n} k={k}", results)

    return [(f"n={n} k={k}", lambda n=n, k=k: case(n, k)) for n, k in grid]


def concentration_cases(ctx: Context) -> List[Tuple[str, Case]]:
    def case(n: int) -> SuiteCell:
        spec = ModelSpec.two_class(n, 0.2, 0.05, [1.0, -1.0], 1.0)
        rec = mc_Ak_concentration(spec, assign_labels(spec), 2, 20, ctx.seed, ctx.threads, ctx.config)
        status = _status(rec.satisfied if rec.precondition else None)
        return SuiteCell("concentration", f"n={n} k=2", status, rec.estimate, rec.bound,
                         f"ratio={rec.ratio:.6g}")

    return [(f"n={n}", lambda n=n: case(n)) for n in (100, 200, 400)] if ctx.full else []


# =============================================================================
# SECTION 4: STUDIES
# =============================================================================

def parity_cases(ctx: Context) -> List[Tuple[str, Case]]:
    plan = ExperimentPlan.from_dict({
        "study": "parity_boundary", "seed": ctx.seed, "trials": 1, "n": [10_000], "k": [2, 3, 4],
        "nu_rule": {"kind": "sweep", "span": 30.0, "points": 61},
        "model": {"L": 2, "d": 1, "ratio": 5.0},
    })

    def run() -> SuiteCell:
        result = run_parity_boundary(plan, ctx.threads, ctx.config)
        k2 = result.summary["crossovers"]["10000:2"]
        odd = [r["dyck"] for r in result.rows if r["k"] == 3]
        k4 = result.summary["crossovers"]["10000:4"]
        ratio = k2.get("ratio_to_boundary")
        near = [r for r in (ratio, k4.get("ratio_to_boundary")) if r is not None]
        ok = len(near) == 2 and all(1.0 / 3.0 <= r <= 3.0 for r in near) and all(v == 0.0 for v in odd)
        return SuiteCell("parity", "n=10000", PASS if ok else FAIL,
                         float(ratio) if ratio is not None else math.nan, 3.0,
                         f"k2_crossover={k2.get('crossover')} "
                         f"k4_crossover={k4.get('crossover')}")

    return [("n=10000", run)]


def rate_cases(ctx: Context) -> List[Tuple[str, Case]]:
    if not ctx.full:
        return []
    plan = ExperimentPlan.from_dict({
        "study": "rate_invariance", "seed": ctx.seed, "trials": 50, "n": [500, 1000, 2000, 4000],
        "k": [1, 2, 3], "nu_rule": {"kind": "power", "c": 1.0, "gamma": 0.7},
        "model": {"L": 2, "d": 1, "ratio": 5.0},
    })

    def run() -> SuiteCell:
        result = run_rate_invariance(plan, ctx.threads, ctx.config)
        slopes = result.summary["slopes"]
        ratio = result.summary["k_ratio"]
        ok = all(v.get("within_range") for v in slopes.values()) and bool(ratio.get("within_bound"))
        worst = max((abs(v["slope"] + 0.5) for v in slopes.values() if v.get("slope") is not None),
                    default=math.nan)
        return SuiteCell("rate", "acceptance-grid", PASS if ok else FAIL, worst, 0.1,
                         " ".join(f"k{k}={v.get('slope')}" for k, v in slopes.items())
                         + f" k_ratio={ratio.get('ratio')}")

    def scale() -> SuiteCell:
        decaying = ExperimentPlan.from_dict({
            "study": "oversmoothing_scale", "seed": ctx.seed, "trials": 20, "n": [500, 2000],
            "k": [1, 2, 3, 4, 5], "nu_rule": {"kind": "power", "c": 1.0, "gamma": 0.7},
            "model": {"L": 2, "d": 2, "ratio": 5.0, "mu_scale": 1.0},
        })
        result = run_oversmoothing_scale(decaying, ctx.threads, ctx.config)
        cv = [v["cv"] for v in result.summary["decay"].values() if v["cv"] is not None]
        ok = bool(cv) and max(cv) < 0.1 and all(c["scale_ok"] for c in result.rows if not c["error"])
        return SuiteCell("rate", "oversmoothing", PASS if ok else FAIL, max(cv) if cv else math.nan, 0.1,
                         f"decay={[round(v['mean'], 6) for v in result.summary['decay'].values()]}")

    return [("acceptance-grid", run), ("oversmoothing", scale)]


CHECKS: Dict[str, Callable[[Context], List[Tuple[str, Case]]]] = {
    "counting": counting_cases,
    "moment_oracle": moment_oracle_cases,
    "nstar": nstar_cases,
    "proxy": proxy_cases,
    "matrix": matrix_cases,
    "features": features_cases,
    "auxiliary": auxiliary_cases,
    "signal": signal_cases,
    "noise": noise_cases,
    "main": main_cases,
    "concentration": concentration_cases,
    "parity": parity_cases,
    "rate": rate_cases,
}


def run_verify_suite(level: str = "quick", checks: Optional[Sequence[str]] = None,
                     seed: int = DEFAULT_SEED, threads: int = 1,
                     config: Optional[LabConfig] = None, out_dir: Optional[Any] = None) -> SuiteReport:
    """checks=None runs every check; checks=[] is an empty, successful run."""
    if level not in LEVELS:
        raise ConfigError(f"level must be one of {LEVELS}, got {level!r}")
    names = tuple(CHECKS) if checks is None else tuple(checks)
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown check(s) {unknown}; available {list(CHECKS)}")

    ctx = Context(level, int(seed), threads, config or DEFAULT_CONFIG)
    report = SuiteReport(level, ctx.seed, names)
    for name in names:
        try:
            cases = CHECKS[name](ctx)
        except LabError as e:
            log.error("check %s could not be set up: %s", name, e)
            report.cells.append(SuiteCell(name, "setup", ERROR, detail=str(e)))
            continue
        for case, fn in cases:
            cell = _run(name, case, fn)
            log.info("%s/%s: %s", name, case, cell.status)
            report.cells.append(cell)

    counts = report.counts()
    log.info("verify %s: %s", level, ", ".join(f"{k}={v}" for k, v in counts.items() if v))
    if out_dir is not None:
        report.write(out_dir)
    return report
