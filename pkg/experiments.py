"""
Experiment Plans and Studies

Flow:
  1. load_plan                 - TOML / JSON plan -> frozen ExperimentPlan
                                 (unknown keys rejected, every field validated)
  2. run_rate_invariance       - sqrt(nu) rho^(k) over an (n, k) grid, log-log
                                 slope of rho against nu per k
  3. run_oversmoothing_scale   - c_xi(k) and the depth-k scale bracket next to
                                 the simulated SNR
  4. run_parity_boundary       - tree (Dyck) diagonal term vs off-diagonal path
                                 term of E[A^k] across nu ~ n^(1/k)
  5. write_study               - <study>.csv, <study>_trials.csv, <study>.json,
                                 optional <study>.svg

A graph and a feature matrix are drawn once per (n, trial) and reused for
every k. Rows are sorted by (n, k, trial) before writing, so the files do not
depend on the thread count.
"""

import logging
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from bounds import compute_constants, compute_rn, scale_bound
from config import DEFAULT_CONFIG, DEFAULT_OUT, LabConfig, check_keys, read_document
from csbm import ModelSpec, NOISE_SAMPLERS, assign_labels, sample_features, sample_graph
from errors import ConfigError, LabError
from features import (
    DEFAULT_OBSERVED_FRACTION,
    TRIAL_COLUMNS,
    build_feature_set,
    holdout_error,
    snr,
    trial_row,
)
from montecarlo import bootstrap_mean_ci, loglog_slope, mean_se, run_trials, stream, tag_code
from reports import build_id, plan_hash, write_csv, write_json, write_svg
from walks import expected_power

log = logging.getLogger(__name__)

STUDIES = ("rate_invariance", "oversmoothing_scale", "parity_boundary")
FORMATS = ("csv", "json", "svg")
PLAN_KEYS = ("study", "seed", "trials", "n", "k", "epsilon", "observed_fraction",
             "slope_range", "max_ratio", "nu_rule", "model", "outputs")
NU_RULE_KEYS = ("kind", "c", "gamma", "value", "span", "points")
MODEL_TEMPLATE_KEYS = ("L", "d", "ratio", "B_shape", "B", "pi", "mu", "mu_scale", "sigma", "noise")
OUTPUT_KEYS = ("dir", "formats")
B_SHAPES = ("planted", "identity", "custom")

CELL_COLUMNS = ("n", "k", "nu_n", "trials", "failed", "mean_rho", "mean_scaled", "se_scaled",
                "ci_low", "ci_high", "mean_misclass", "error")
SCALE_COLUMNS = ("c_xi", "separation", "separation_ratio", "B_tilde_sigma_min", "B_tilde_norm",
                 "scale_lower", "scale_upper", "scale_ok")
PARITY_COLUMNS = ("n", "k", "nu_n", "nu_over_boundary", "dyck", "path", "dominant")


# =============================================================================
# SECTION 1: PLANS
# =============================================================================

def _int_list(raw: Any, name: str, minimum: int) -> Tuple[Tuple[int, ...], Optional[str]]:
    values = raw if isinstance(raw, (list, tuple)) else [raw]
    try:
        out = tuple(int(v) for v in values)
    except (TypeError, ValueError):
        return (), f"{name} must be a list of integers, got {raw!r}"
    if not out:
        return (), f"{name} must not be empty"
    if any(v < minimum or v != float(w) for v, w in zip(out, values)):
        return (), f"{name} entries must be integers >= {minimum}, got {list(values)}"
    return out, None


def _number(raw: Any, name: str, low: float = -math.inf, high: float = math.inf,
            open_low: bool = False) -> Tuple[float, Optional[str]]:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        return math.nan, f"{name} must be a number, got {raw!r}"
    if not math.isfinite(value) or value < low or value > high or (open_low and value == low):
        side = "(" if open_low else "["
        return math.nan, f"{name} must lie in {side}{low}, {high}], got {raw!r}"
    return value, None


@dataclass(frozen=True)
class NuRule:
    """nu_n as c n^gamma ("power"), a constant ("fixed"), or a geometric sweep around n^(1/k) ("sweep")."""
    kind: str = "power"
    c: float = 1.0
    gamma: float = 0.7
    value: float = 0.0
    span: float = 100.0
    points: int = 25

    def nu(self, n: int) -> float:
        if self.kind == "power":
            return self.c * n ** self.gamma
        if self.kind == "fixed":
            return self.value
        raise ConfigError(f"nu rule {self.kind!r} gives a grid, not a single value")

    def sweep(self, n: int, k: int) -> List[float]:
        """points values from n^(1/k) / span to n^(1/k) * span, kept inside (0, n / 2]."""
        center = n ** (1.0 / k)
        grid = center * self.span ** np.linspace(-1.0, 1.0, self.points)
        return sorted({float(min(v, n / 2.0)) for v in grid})


@dataclass(frozen=True)
class ModelTemplate:
    L: int = 2
    d: int = 1
    ratio: float = 5.0
    B_shape: str = "planted"
    B: Optional[Tuple[Tuple[float, ...], ...]] = None
    pi: Optional[Tuple[float, ...]] = None
    mu: Optional[Tuple[Tuple[float, ...], ...]] = None
    mu_scale: float = 1.0
    sigma: float = 1.0
    noise: str = "gaussian"

    def block_shape(self) -> np.ndarray:
        """B / p_max: ones on the diagonal and 1/ratio off it, zero off it, or the custom table."""
        if self.B_shape == "identity":
            return np.eye(self.L)
        if self.B_shape == "custom":
            table = np.asarray(self.B, dtype=float)
            return table / table.max()
        shape = np.full((self.L, self.L), 1.0 / self.ratio)
        np.fill_diagonal(shape, 1.0)
        return shape

    def means(self) -> np.ndarray:
        if self.mu is not None:
            return np.asarray(self.mu, dtype=float).T
        if self.d == 1 and self.L == 2:
            return self.mu_scale * np.array([[1.0, -1.0]])
        return self.mu_scale * math.sqrt(self.d) * np.eye(self.d, self.L)

    def build(self, n: int, nu: float, k: int = 1) -> ModelSpec:
        p = nu / n
        if not 0.0 < p <= 1.0:
            raise ConfigError(f"nu_n = {nu:.6g} at n = {n} gives p_max = {p:.6g} outside (0, 1]")
        pi = self.pi if self.pi is not None else [1.0 / self.L] * self.L
        return ModelSpec(n=n, d=self.d, L=self.L, B=p * self.block_shape(), pi=pi,
                         mu=self.means(), sigma=self.sigma, k=k, noise=self.noise)


def _nu_rule(raw: Dict[str, Any], errors: List[str]) -> NuRule:
    check_keys(raw, NU_RULE_KEYS, "nu_rule")
    kind = raw.get("kind", "power")
    if kind not in ("power", "fixed", "sweep"):
        errors.append(f"nu_rule.kind must be power, fixed or sweep, got {kind!r}")
        return NuRule()
    c, e1 = _number(raw.get("c", 1.0), "nu_rule.c", 0.0, open_low=True)
    gamma, e2 = _number(raw.get("gamma", 0.7), "nu_rule.gamma", 0.0, 1.0)
    value, e3 = _number(raw.get("value", 1.0 if kind == "fixed" else 0.0), "nu_rule.value", 0.0)
    span, e4 = _number(raw.get("span", 100.0), "nu_rule.span", 1.0, open_low=True)
    points, e5 = _int_list(raw.get("points", 25), "nu_rule.points", 2)
    errors.extend(e for e in (e1, e2, e3, e4, e5) if e)
    if kind == "fixed" and value <= 0.0:
        errors.append("nu_rule.value must be > 0 for a fixed rule")
    return NuRule(kind, c, gamma, value, span, points[0] if points else 25)


def _model_template(raw: Dict[str, Any], errors: List[str]) -> ModelTemplate:
    check_keys(raw, MODEL_TEMPLATE_KEYS, "model")
    L, e1 = _int_list(raw.get("L", 2), "model.L", 1)
    d, e2 = _int_list(raw.get("d", 1), "model.d", 1)
    ratio, e3 = _number(raw.get("ratio", 5.0), "model.ratio", 1.0)
    mu_scale, e4 = _number(raw.get("mu_scale", 1.0), "model.mu_scale", 0.0)
    sigma, e5 = _number(raw.get("sigma", 1.0), "model.sigma", 0.0)
    errors.extend(e for e in (e1, e2, e3, e4, e5) if e)
    shape = raw.get("B_shape", "planted")
    if shape not in B_SHAPES:
        errors.append(f"model.B_shape must be one of {B_SHAPES}, got {shape!r}")
    noise = raw.get("noise", "gaussian")
    if noise not in NOISE_SAMPLERS:
        errors.append(f"model.noise must be one of {NOISE_SAMPLERS}, got {noise!r}")

    L0, d0 = (L[0] if L else 2), (d[0] if d else 1)
    B = raw.get("B")
    if shape == "custom":
        table = np.asarray(B if B is not None else [], dtype=float)
        if table.shape != (L0, L0) or table.max(initial=0.0) <= 0.0:
            errors.append(f"model.B must be a nonzero {L0}x{L0} table for a custom shape")
        B = tuple(tuple(float(x) for x in row) for row in table) if table.ndim == 2 else None
    mu = raw.get("mu")
    if mu is not None:
        cols = np.asarray(mu, dtype=float)
        if cols.shape != (L0, d0):
            errors.append(f"model.mu must list {L0} columns of length {d0}")
        mu = tuple(tuple(float(x) for x in col) for col in np.atleast_2d(cols))
    elif not (d0 == 1 and L0 == 2) and d0 < L0:
        errors.append("model.mu is required when d < L (the default means need d >= L)")
    pi = raw.get("pi")
    if pi is not None:
        pi = tuple(float(x) for x in pi)
    return ModelTemplate(L0, d0, ratio, shape, B, pi, mu, mu_scale, sigma, noise)


@dataclass(frozen=True)
class ExperimentPlan:
    study: str
    seed: int
    trials: int
    n: Tuple[int, ...]
    k: Tuple[int, ...]
    nu_rule: NuRule = field(default_factory=NuRule)
    model: ModelTemplate = field(default_factory=ModelTemplate)
    epsilon: Tuple[float, ...] = (0.25, 0.5, 0.75)
    observed_fraction: float = DEFAULT_OBSERVED_FRACTION
    slope_range: Tuple[float, float] = (-0.6, -0.4)
    max_ratio: float = 10.0
    out_dir: str = DEFAULT_OUT
    formats: Tuple[str, ...] = ("csv", "json")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentPlan":
        check_keys(data, PLAN_KEYS, "plan")
        errors: List[str] = []
        study = data.get("study")
        if study not in STUDIES:
            errors.append(f"study must be one of {STUDIES}, got {study!r}")
        seed, e1 = _int_list(data.get("seed", 0), "seed", 0)
        trials, e2 = _int_list(data.get("trials", 1), "trials", 1)
        n, e3 = _int_list(data.get("n", []), "n", 2)
        k, e4 = _int_list(data.get("k", [1]), "k", 1)
        fraction, e5 = _number(data.get("observed_fraction", DEFAULT_OBSERVED_FRACTION),
                               "observed_fraction", 0.0, 1.0, open_low=True)
        max_ratio, e6 = _number(data.get("max_ratio", 10.0), "max_ratio", 1.0)
        errors.extend(e for e in (e1, e2, e3, e4, e5, e6) if e)

        epsilon = []
        for value in data.get("epsilon", [0.25, 0.5, 0.75]):
            eps, err = _number(value, "epsilon", 0.0, 1.0, open_low=True)
            if err or eps >= 1.0:
                errors.append(err or f"epsilon must lie in (0, 1), got {value!r}")
            epsilon.append(eps)
        slope = tuple(float(x) for x in data.get("slope_range", (-0.6, -0.4)))
        if len(slope) != 2 or slope[0] > slope[1]:
            errors.append(f"slope_range must be [low, high], got {list(slope)}")

        rule = _nu_rule(dict(data.get("nu_rule", {})), errors)
        model = _model_template(dict(data.get("model", {})), errors)
        outputs = dict(data.get("outputs", {}))
        check_keys(outputs, OUTPUT_KEYS, "outputs")
        formats = tuple(outputs.get("formats", ("csv", "json")))
        unknown = [f for f in formats if f not in FORMATS]
        if unknown:
            errors.append(f"outputs.formats entries must be among {FORMATS}, got {unknown}")

        if study == "parity_boundary" and rule.kind != "sweep":
            errors.append("parity_boundary needs nu_rule.kind = \"sweep\"")
        if study in ("rate_invariance", "oversmoothing_scale") and rule.kind == "sweep":
            errors.append(f"{study} needs a power or fixed nu rule")
        if errors:
            raise ConfigError("invalid plan: " + "; ".join(errors))
        return cls(
            study=study, seed=seed[0], trials=trials[0], n=n, k=k, nu_rule=rule, model=model,
            epsilon=tuple(epsilon), observed_fraction=fraction, slope_range=(slope[0], slope[1]),
            max_ratio=max_ratio, out_dir=str(outputs.get("dir", DEFAULT_OUT)), formats=formats,
        )

    def to_dict(self) -> Dict[str, Any]:
        rule, model = self.nu_rule, self.model
        return {
            "study": self.study,
            "seed": self.seed,
            "trials": self.trials,
            "n": list(self.n),
            "k": list(self.k),
            "epsilon": list(self.epsilon),
            "observed_fraction": self.observed_fraction,
            "slope_range": list(self.slope_range),
            "max_ratio": self.max_ratio,
            "nu_rule": dict(rule.__dict__),
            "model": {key: getattr(model, key) for key in MODEL_TEMPLATE_KEYS if getattr(model, key) is not None},
            "outputs": {"dir": self.out_dir, "formats": list(self.formats)},
        }

    @property
    def hash(self) -> str:
        """Hash of everything that determines the results (output location excluded)."""
        data = self.to_dict()
        data.pop("outputs")
        return plan_hash(data)

    def with_overrides(self, seed: Optional[int] = None, trials: Optional[int] = None,
                       out_dir: Optional[str] = None) -> "ExperimentPlan":
        data = self.to_dict()
        if seed is not None:
            data["seed"] = seed
        if trials is not None:
            data["trials"] = trials
        if out_dir is not None:
            data["outputs"]["dir"] = out_dir
        return ExperimentPlan.from_dict(data)


def load_plan(path: Any) -> ExperimentPlan:
    return ExperimentPlan.from_dict(read_document(path))


# =============================================================================
# SECTION 2: SIMULATION CELLS
# =============================================================================

@dataclass
class StudyResult:
    study: str
    plan: ExperimentPlan
    rows: List[Dict[str, Any]]
    columns: Tuple[str, ...]
    summary: Dict[str, Any]
    trial_rows: List[Dict[str, Any]] = field(default_factory=list)
    series: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    axes: Dict[str, Any] = field(default_factory=dict)

    @property
    def failed_cells(self) -> List[Dict[str, Any]]:
        return [row for row in self.rows if row.get("error")]


def cell_seed(seed: int, *key: Any) -> int:
    """Per-cell master seed, so different n never share a graph stream."""
    return (int(seed) + tag_code(":".join(str(k) for k in key))) % (1 << 63)


def _simulate_n(plan: ExperimentPlan, n: int, threads: int, config: LabConfig) -> List[Dict[str, Any]]:
    """Trial rows for every k at one n; each trial's graph and features serve all k."""
    nu = plan.nu_rule.nu(n)
    spec = plan.model.build(n, nu)
    labels = assign_labels(spec)
    seed = cell_seed(plan.seed, "n", n)
    expected = {k: expected_power(spec, labels, k, config.guards) for k in plan.k}
    bid, phash = build_id(), plan.hash

    def one(trial: int) -> List[Dict[str, Any]]:
        A = sample_graph(spec, labels, seed, trial)
        X = sample_features(spec, labels, seed, trial)
        rows = []
        for k in plan.k:
            spec_k = spec.replace(k=k)
            fs = build_feature_set(A, X, labels, k, plan.observed_fraction, seed, trial)
            report = snr(spec_k, labels, A, X, k, expected=expected[k], phi=fs.phi_k)
            try:
                err = holdout_error(fs, spec.L)
            except ConfigError as e:
                log.debug("trial %d k=%d: no classifier (%s)", trial, k, e)
                err = math.nan
            row = trial_row(plan.seed, spec_k, report, err, fs.observed_fraction, bid, phash)
            row["trial"] = trial
            rows.append(row)
        return rows

    return [row for rows in run_trials(one, plan.trials, threads) for row in rows]


def _summarize_cell(plan: ExperimentPlan, n: int, k: int, rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    scaled = np.array([r["rho_times_sqrt_nu"] for r in rows], dtype=float)
    rho = np.array([r["rho"] for r in rows], dtype=float)
    misclass = np.array([r["misclass_rate"] for r in rows], dtype=float)
    mean, se = mean_se(scaled)
    low, high = bootstrap_mean_ci(scaled, rng=stream(plan.seed, "cell-ci", n, k))
    return {
        "n": n,
        "k": k,
        "nu_n": rows[0]["nu_n"],
        "trials": len(rows),
        "failed": 0,
        "mean_rho": float(np.mean(rho)),
        "mean_scaled": mean,
        "se_scaled": se,
        "ci_low": low,
        "ci_high": high,
        "mean_misclass": float(np.nanmean(misclass)) if np.any(np.isfinite(misclass)) else math.nan,
        "error": "",
    }


def _failed_cell(n: int, k: int, nu: float, trials: int, e: Exception) -> Dict[str, Any]:
    return {"n": n, "k": k, "nu_n": nu, "trials": 0, "failed": trials, "mean_rho": math.nan,
            "mean_scaled": math.nan, "se_scaled": math.nan, "ci_low": math.nan, "ci_high": math.nan,
            "mean_misclass": math.nan, "error": f"{type(e).__name__}: {e}"}


def _simulate(plan: ExperimentPlan, threads: int, config: LabConfig) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    cells, trials = [], []
    for n in plan.n:
        try:
            rows = _simulate_n(plan, n, threads, config)
        except Exception as e:
            log.error("cell n=%d failed: %s", n, e)
            log.debug(traceback.format_exc())
            cells.extend(_failed_cell(n, k, _safe_nu(plan, n), plan.trials, e) for k in plan.k)
            continue
        trials.extend(rows)
        for k in plan.k:
            cells.append(_summarize_cell(plan, n, k, [r for r in rows if r["k"] == k]))
    cells.sort(key=lambda r: (r["n"], r["k"]))
    trials.sort(key=lambda r: (r["n"], r["k"], r["trial"]))
    return cells, trials


def _safe_nu(plan: ExperimentPlan, n: int) -> float:
    try:
        return plan.nu_rule.nu(n)
    except LabError:
        return math.nan


def _slopes(plan: ExperimentPlan, cells: List[Dict[str, Any]]) -> Dict[str, Any]:
    low, high = plan.slope_range
    out: Dict[str, Any] = {}
    for k in plan.k:
        usable = [c for c in cells if c["k"] == k and not c["error"] and c["mean_rho"] > 0.0]
        if len({c["nu_n"] for c in usable}) < 2:
            out[str(k)] = {"slope": None, "within_range": None, "note": "fewer than two usable nu values"}
            continue
        fit = loglog_slope([c["nu_n"] for c in usable], [c["mean_rho"] for c in usable])
        fit["within_range"] = bool(low <= fit["slope"] <= high)
        out[str(k)] = fit
    return out


def _k_ratio(plan: ExperimentPlan, cells: List[Dict[str, Any]]) -> Dict[str, Any]:
    n_max = max(plan.n)
    values = [c["mean_scaled"] for c in cells if c["n"] == n_max and not c["error"]]
    values = [v for v in values if math.isfinite(v)]
    if len(values) < 2 or min(values) <= 0.0:
        return {"n": n_max, "ratio": None, "within_bound": None}
    ratio = max(values) / min(values)
    return {"n": n_max, "ratio": ratio, "bound": plan.max_ratio, "within_bound": ratio <= plan.max_ratio}


def _rn_table(plan: ExperimentPlan, config: LabConfig) -> List[Dict[str, Any]]:
    """r_n(eps) per (n, k) for the eps sweep."""
    out = []
    for n in plan.n:
        try:
            spec = plan.model.build(n, plan.nu_rule.nu(n))
        except LabError as e:
            out.append({"n": n, "error": str(e)})
            continue
        labels = assign_labels(spec)
        for k in plan.k:
            kappa0 = compute_constants(spec, labels, config, k).kappa0
            out.append({"n": n, "k": k, "r_n": {str(eps): compute_rn(kappa0, k, eps, spec.nu_n).r_n
                                               for eps in plan.epsilon}})
    return out


# =============================================================================
# SECTION 3: STUDIES
# =============================================================================

def run_rate_invariance(plan: ExperimentPlan, threads: int = 1,
                        config: Optional[LabConfig] = None) -> StudyResult:
    config = config or DEFAULT_CONFIG
    cells, trials = _simulate(plan, threads, config)
    slopes = _slopes(plan, cells)
    ratio = _k_ratio(plan, cells)
    summary = {"slopes": slopes, "k_ratio": ratio, "rn": _rn_table(plan, config),
               "failed_cells": sum(1 for c in cells if c["error"])}
    series = {f"k={k}": [(c["nu_n"], c["mean_rho"]) for c in cells if c["k"] == k and not c["error"]]
              for k in plan.k}
    log.info("rate invariance: slopes %s", {k: v.get("slope") for k, v in slopes.items()})
    return StudyResult("rate_invariance", plan, cells, CELL_COLUMNS, summary, trials, series,
                       {"title": "rho^(k) against nu_n", "xlabel": "nu_n", "ylabel": "mean rho",
                        "logx": True, "logy": True})


def run_oversmoothing_scale(plan: ExperimentPlan, threads: int = 1,
                            config: Optional[LabConfig] = None) -> StudyResult:
    """
    Simulated SNR cells plus, per (n, k), c_xi(k), the unclamped separation
    min |xi_bar_l - xi_bar_l'| / sqrt(d) and its ratio to the previous k.
    """
    config = config or DEFAULT_CONFIG
    cells, trials = _simulate(plan, threads, config)
    previous: Dict[int, float] = {}
    ratios: Dict[int, List[float]] = {}
    for cell in cells:
        n, k = cell["n"], cell["k"]
        cell.update(dict.fromkeys(SCALE_COLUMNS, math.nan), scale_ok=None)
        if cell["error"]:
            previous.pop(n, None)
            continue
        try:
            spec = plan.model.build(n, plan.nu_rule.nu(n), k)
            sb = scale_bound(spec, assign_labels(spec), k, config)
        except LabError as e:
            log.error("scale cell n=%d k=%d failed: %s", n, k, e)
            cell["error"] = f"{type(e).__name__}: {e}"
            previous.pop(n, None)
            continue
        sep = sb.separation_min / math.sqrt(spec.d)
        prev = previous.get(n)
        ratio = sep / prev if prev else math.nan
        if prev:
            ratios.setdefault(n, []).append(ratio)
        previous[n] = sep
        cell.update({"c_xi": sb.c_xi, "separation": sep, "separation_ratio": ratio,
                     "B_tilde_sigma_min": sb.B_tilde_sigma_min, "B_tilde_norm": sb.B_tilde_norm,
                     "scale_lower": sb.lower, "scale_upper": sb.upper, "scale_ok": sb.satisfied})

    decay = {}
    for n, values in ratios.items():
        arr = np.asarray(values)
        mean = float(arr.mean())
        decay[str(n)] = {"ratios": values, "mean": mean,
                         "cv": float(arr.std() / mean) if mean > 0.0 else None}
    summary = {"decay": decay, "slopes": _slopes(plan, cells),
               "failed_cells": sum(1 for c in cells if c["error"])}
    series = {f"n={n}": [(c["k"], c["c_xi"]) for c in cells if c["n"] == n] for n in plan.n}
    return StudyResult("oversmoothing_scale", plan, cells, CELL_COLUMNS + SCALE_COLUMNS, summary, trials,
                       series, {"title": "c_xi against depth k", "xlabel": "k", "ylabel": "c_xi",
                                "logx": False, "logy": True})


def _crossover(rows: List[Dict[str, Any]]) -> Optional[float]:
    """nu where log(dyck / path) changes sign, interpolated in log nu."""
    pts = [(math.log(r["nu_n"]), math.log(r["dyck"] / r["path"])) for r in rows
           if r["dyck"] > 0.0 and r["path"] > 0.0]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if y0 == 0.0:
            return math.exp(x0)
        if y0 > 0.0 >= y1:
            return math.exp(x0 + (x1 - x0) * y0 / (y0 - y1))
    return None


def run_parity_boundary(plan: ExperimentPlan, threads: int = 1,
                        config: Optional[LabConfig] = None) -> StudyResult:
    """
    For each (n, k) and nu on the sweep: the tree part of E[A^k]_ii (Dyck
    paths, zero for odd k) against (sum_{j != i} E[A^k]_ij^2)^(1/2).
    """
    config = config or DEFAULT_CONFIG
    rows: List[Dict[str, Any]] = []
    crossings: Dict[str, Any] = {}
    for n in plan.n:
        for k in plan.k:
            cell: List[Dict[str, Any]] = []
            try:
                for nu in plan.nu_rule.sweep(n, k):
                    spec = plan.model.build(n, nu, k)
                    labels = assign_labels(spec)
                    E = expected_power(spec, labels, k, config.guards, source="pattern")
                    dyck = float(E.tree_diag[0]) if k % 2 == 0 else 0.0
                    path = float(E.offdiag_row_norms()[0])
                    cell.append({"n": n, "k": k, "nu_n": spec.nu_n,
                                 "nu_over_boundary": spec.nu_n / n ** (1.0 / k),
                                 "dyck": dyck, "path": path,
                                 "dominant": "dyck" if dyck > path else "path"})
            except LabError as e:
                log.error("parity cell n=%d k=%d failed: %s", n, k, e)
                log.debug(traceback.format_exc())
                crossings[f"{n}:{k}"] = {"error": str(e)}
                continue
            rows.extend(cell)
            cross = _crossover(cell) if k % 2 == 0 else None
            crossings[f"{n}:{k}"] = {
                "n": n, "k": k, "boundary": n ** (1.0 / k), "crossover": cross,
                "ratio_to_boundary": cross / n ** (1.0 / k) if cross else None,
            }
    rows.sort(key=lambda r: (r["n"], r["k"], r["nu_n"]))
    series: Dict[str, List[Tuple[float, float]]] = {}
    for r in rows:
        series.setdefault(f"dyck n={r['n']} k={r['k']}", []).append((r["nu_n"], r["dyck"]))
        series.setdefault(f"path n={r['n']} k={r['k']}", []).append((r["nu_n"], r["path"]))
    return StudyResult("parity_boundary", plan, rows, PARITY_COLUMNS, {"crossovers": crossings},
                       series=series, axes={"title": "diagonal tree term vs off-diagonal path term",
                                            "xlabel": "nu_n", "ylabel": "magnitude",
                                            "logx": True, "logy": True})


RUNNERS: Dict[str, Callable[..., StudyResult]] = {
    "rate_invariance": run_rate_invariance,
    "oversmoothing_scale": run_oversmoothing_scale,
    "parity_boundary": run_parity_boundary,
}


# =============================================================================
# SECTION 4: OUTPUT
# =============================================================================

def write_study(result: StudyResult, out_dir: Optional[Any] = None) -> List[Path]:
    plan = result.plan
    out = Path(out_dir if out_dir is not None else plan.out_dir)
    provenance = {"build_id": build_id(), "plan_hash": plan.hash, "seed": plan.seed}
    paths = []
    if "csv" in plan.formats:
        paths.append(write_csv(out / f"{result.study}.csv", result.columns, result.rows, provenance))
        if result.trial_rows:
            paths.append(write_csv(out / f"{result.study}_trials.csv", ("trial",) + TRIAL_COLUMNS,
                                   result.trial_rows, provenance))
    if "json" in plan.formats:
        payload = {"study": result.study, "plan": plan.to_dict(), "plan_hash": plan.hash,
                   "build_id": provenance["build_id"], "summary": result.summary, "cells": result.rows}
        paths.append(write_json(out / f"{result.study}.json", payload))
    if "svg" in plan.formats and result.series:
        paths.append(write_svg(out / f"{result.study}.svg", result.series, **result.axes))
    return paths


def run_plan(plan: ExperimentPlan, threads: int = 1, config: Optional[LabConfig] = None,
             out_dir: Optional[Any] = None) -> StudyResult:
    log.info("study %s: n=%s k=%s trials=%d seed=%d", plan.study, list(plan.n), list(plan.k),
             plan.trials, plan.seed)
    result = RUNNERS[plan.study](plan, threads, config)
    write_study(result, out_dir)
    return result
