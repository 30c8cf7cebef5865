"""
Constants, Growth Conditions and Theorem Checks

Flow:
  1. compute_constants   - kappa_0..kappa_3, C_1, C_k from the model and the config
  2. compute_rn          - largest even r with 3 (kappa_0 r k e^k)^r <= nu^(1 - eps)
  3. growth_preflight    - every growth condition plus A1..A5, with margins
  4. check_*             - signal brackets, noise tails and moments, SNR brackets
  5. scale_bound         - depth-k scale of the class separation (oversmoothing)

A check is "pass" or "fail" only when all of its preconditions hold; otherwise
it is "vacuous" and the missing conditions are listed. The inequality is still
evaluated and reported for vacuous checks.

Probability bounds are compared with one-sided 99% Clopper-Pearson limits: an
upper bound fails only if the lower limit of the empirical frequency is above
it, a lower bound only if the upper limit is below it.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULT_CONFIG, LabConfig
from csbm import (
    AssumptionReport,
    LabelAssignment,
    ModelSpec,
    check_assumptions,
    mixing_matrix,
    sample_features,
    sample_graph,
    xi_bar,
)
from errors import ConfigError, GuardExceeded
from features import min_offdiagonal, pairwise_distances, population_centers, signal_proxy, snr
from linalg import concentration_constant, holds
from montecarlo import bootstrap_mean_ci, cp_lower, cp_upper, run_trials, stream
from walks import exact_dev_second_moment, expected_power

log = logging.getLogger(__name__)

PASS, FAIL, VACUOUS = "pass", "fail", "vacuous"
CONFIDENCE = 0.99
MIN_NOISE_TRIALS = 200
DEFAULT_ETAS = (0.25, 0.5, 0.75)
DEFAULT_ALPHAS = (math.sqrt(2.0), 2.0, 3.0)
U_GRID_FACTORS = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)

ASSUMPTIONS = ("A1", "A2", "A3", "A4", "A5")
SIGNAL_PRECONDITIONS = ASSUMPTIONS + ("signal_growth",)
UPPER_PRECONDITIONS = ("degree", "rn_ge_2")
LOWER_PRECONDITIONS = ASSUMPTIONS + ("n_growth", "nu_growth", "rn_ge_4")
MAIN_PRECONDITIONS = ASSUMPTIONS + ("signal_growth", "n_growth", "nu_growth", "rn_ge_4")


# =============================================================================
# SECTION 1: CONSTANTS
# =============================================================================

@dataclass(frozen=True)
class ConstantSet:
    k: int
    kappa0: float
    kappa1: float
    kappa2: float
    kappa3: float
    kappa3_proof: float
    C1: float
    Ck: float
    C: float
    c: float
    c_nu_prime: float
    c_xi: float
    mu_max: float

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _kappa0_row(c1_sigma: float, row_inf: float) -> float:
    if row_inf == 0.0:
        return 4.0 if c1_sigma == 0.0 else math.inf
    return 4.0 * max(c1_sigma / row_inf, 1.0)


def compute_constants(spec: ModelSpec, labels: LabelAssignment,
                      config: Optional[LabConfig] = None, k: Optional[int] = None,
                      assumptions: Optional[AssumptionReport] = None) -> ConstantSet:
    """
    kappa_0 = max_m 4 max{C1 sigma / |mu_m.|_inf, 1}
    kappa_1 = c_B c_nu c_pi c_xi^2 / (48 L)
    kappa_2 = 8 (32 |mu|_max^4 + (8 C1 sigma)^4)
    kappa_3 = max{8 C1 sigma, |mu|_max}; the 4 C1 sigma variant is kept alongside
    """
    config = config or DEFAULT_CONFIG
    k = spec.k if k is None else k
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    u, a = config.universal, config.assumptions
    report = assumptions or check_assumptions(spec, labels, a, k)

    c1_sigma = u.C1 * spec.sigma
    rows = np.max(np.abs(spec.mu), axis=1)
    mu_max = float(np.max(rows))
    return ConstantSet(
        k=k,
        kappa0=max(_kappa0_row(c1_sigma, float(r)) for r in rows),
        kappa1=a.c_B * a.c_nu * a.c_pi * report.c_xi ** 2 / (48.0 * spec.L),
        kappa2=8.0 * (32.0 * mu_max ** 4 + (8.0 * c1_sigma) ** 4),
        kappa3=max(8.0 * c1_sigma, mu_max),
        kappa3_proof=max(4.0 * c1_sigma, mu_max),
        C1=u.C1,
        Ck=concentration_constant(k, u),
        C=u.C,
        c=u.c,
        c_nu_prime=u.c_nu_prime,
        c_xi=report.c_xi,
        mu_max=mu_max,
    )


@dataclass(frozen=True)
class RnResult:
    r_n: int
    estimate: float
    estimate_even: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def compute_rn(kappa0: float, k: int, epsilon: float, nu_n: float) -> RnResult:
    """
    Direct scan over even r in log space, plus the Lambert-W style estimate
    b log nu / (log(abc) + log log nu) with a = kappa_0 k e^k, b = 1 - eps, c = 3.
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not nu_n > 0.0:
        raise ConfigError(f"nu_n must be > 0, got {nu_n}")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if not kappa0 > 0.0:
        raise ConfigError(f"kappa0 must be > 0, got {kappa0}")
    if math.isinf(kappa0):
        return RnResult(0, 0.0, 0)

    b = 1.0 - epsilon
    target = b * math.log(nu_n)
    log_a = math.log(kappa0 * k) + k
    slack = 1e-12 * max(abs(target), 1.0)

    r_n, r = 0, 2
    while math.log(3.0) + r * (log_a + math.log(r)) <= target + slack:
        r_n = r
        r += 2

    estimate = 0.0
    if nu_n > math.e:
        denom = math.log(3.0 * b) + log_a + math.log(math.log(nu_n))
        if denom > 0.0:
            estimate = target / denom
    return RnResult(r_n, estimate, 2 * int(estimate // 2))


# =============================================================================
# SECTION 2: TAIL BOUNDS
# =============================================================================

@dataclass(frozen=True)
class TailBound:
    """P(|Delta| >= level) <= bound <= summary."""
    level: float
    bound: float
    summary: float
    regime: str


def subweibull_tail(K: float, C: float, eta: float, r0: float, x: float) -> TailBound:
    """
    Moments E|Delta|^r <= (K (C eta r)^eta)^r for even r <= r0 give, for
    x >= 4 eta C e,

        P(|Delta| >= K x^eta) <= exp(-x / 2Ce)             x <= 2 C eta e r0
                                 (2 eta C r0 / x)^(eta r0)  otherwise

    and both are at most exp(-min{x / 2Ce, eta r0}). r0 may be math.inf.
    """
    if K <= 0.0 or C <= 0.0 or eta <= 0.0:
        raise ConfigError(f"K, C and eta must be > 0, got K={K}, C={C}, eta={eta}")
    if not math.isinf(r0) and (r0 < 2 or int(r0) != r0 or int(r0) % 2):
        raise ConfigError(f"r0 must be an even integer >= 2 or inf, got {r0}")
    threshold = 4.0 * eta * C * math.e
    if x < threshold * (1.0 - 1e-12):
        raise ConfigError(f"x = {x:.6g} is below the validity threshold 4 eta C e = {threshold:.6g}")

    summary = math.exp(-min(x / (2.0 * C * math.e), eta * r0))
    if x <= 2.0 * C * eta * math.e * r0:
        return TailBound(K * x ** eta, math.exp(-x / (2.0 * C * math.e)), summary, "exponential")
    return TailBound(K * x ** eta, (2.0 * eta * C * r0 / x) ** (eta * r0), summary, "polynomial")


def noise_tail_bound(u: float, d: int, r_n: int) -> float:
    """exp(-min{u / 4de, r_n} / 2)."""
    return math.exp(-0.5 * min(u / (4.0 * d * math.e), r_n))


def pz(eta: float, m2: float, m4: float) -> float:
    """Paley-Zygmund: P(Z > eta E Z) >= (1 - eta)^2 (E Z)^2 / E Z^2 for Z = Dev^2."""
    if not 0.0 <= eta < 1.0:
        raise ConfigError(f"eta must lie in [0, 1), got {eta}")
    if m4 <= 0.0:
        raise ConfigError(f"fourth moment must be > 0, got {m4}")
    return (1.0 - eta) ** 2 * m2 ** 2 / m4


# =============================================================================
# SECTION 3: PREFLIGHT
# =============================================================================

@dataclass(frozen=True)
class GrowthCondition:
    name: str
    lhs: float
    rhs: float
    satisfied: bool

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "satisfied": self.satisfied}


@dataclass(frozen=True, eq=False)
class Preflight:
    k: int
    conditions: Dict[str, GrowthCondition]
    assumptions: AssumptionReport
    rn: RnResult

    def missing(self, names: Sequence[str]) -> Tuple[str, ...]:
        return tuple(name for name in names if not self.conditions[name].satisfied)

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "rn": self.rn.to_dict(),
                "conditions": {name: c.to_dict() for name, c in self.conditions.items()}}


def _ge(name: str, lhs: float, rhs: float) -> GrowthCondition:
    return GrowthCondition(name, float(lhs), float(rhs), bool(lhs >= rhs))


def growth_preflight(spec: ModelSpec, labels: LabelAssignment, k: Optional[int] = None,
                     constants: Optional[ConstantSet] = None,
                     config: Optional[LabConfig] = None) -> Preflight:
    config = config or DEFAULT_CONFIG
    k = spec.k if k is None else k
    a, u = config.assumptions, config.universal
    report = check_assumptions(spec, labels, a, k)
    const = constants or compute_constants(spec, labels, config, k, report)
    n, L, nu = spec.n, spec.L, spec.nu_n
    c_xi = const.c_xi

    conditions: Dict[str, GrowthCondition] = {}
    for name, check in report.checks.items():
        conditions[name] = GrowthCondition(name, check.margin, 0.0, check.satisfied)

    signal_rhs = math.inf if c_xi <= 0.0 else 32.0 * L * a.C_mu ** 2 * const.Ck ** 2 / (a.c_pi * c_xi ** 2)
    conditions["signal_growth"] = _ge("signal_growth", nu, max(u.c_nu_prime * math.log(n), signal_rhs))

    if c_xi > 0.0:
        n_lhs = min(n / max(k, 4.0 * a.C_mu / c_xi), nu ** a.delta / a.C_B)
        conditions["n_growth"] = _ge("n_growth", n_lhs, 4.0 * a.C_mu * L / (a.c_pi * c_xi))
    else:
        conditions["n_growth"] = GrowthCondition("n_growth", 0.0, math.inf, False)

    nu_rhs = const.kappa1 / (2.0 * const.mu_max ** 2) if const.mu_max > 0.0 else math.inf
    conditions["nu_growth"] = _ge("nu_growth", min(n / (2 * k - 1) ** 2, nu ** u.epsilon), nu_rhs)
    conditions["degree"] = _ge("degree", nu, k * math.exp(2.0 * (k - 1)))

    rn = compute_rn(const.kappa0, k, u.epsilon, nu) if nu > 0.0 else RnResult(0, 0.0, 0)
    conditions["rn_ge_2"] = _ge("rn_ge_2", rn.r_n, 2)
    conditions["rn_ge_4"] = _ge("rn_ge_4", rn.r_n, 4)

    pre = Preflight(k, conditions, report, rn)
    failing = [name for name, c in conditions.items() if not c.satisfied]
    if failing:
        log.debug("preflight at n=%d k=%d: failing %s", n, k, ", ".join(failing))
    return pre


# =============================================================================
# SECTION 4: REPORTS
# =============================================================================

@dataclass(frozen=True)
class TheoremCheck:
    name: str
    status: str
    lhs: float
    rhs: float
    margin: float
    preflight: Tuple[str, ...] = ()
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "status": self.status, "lhs": self.lhs, "rhs": self.rhs,
                "margin": self.margin, "missing": list(self.preflight), "detail": self.detail}


def _verdict(lhs: float, rhs: float, missing: Tuple[str, ...]) -> str:
    if missing:
        return VACUOUS
    return PASS if holds(lhs, rhs) else FAIL


def _check(name: str, lhs: float, rhs: float, missing: Tuple[str, ...], **detail: Any) -> TheoremCheck:
    """A check of lhs <= rhs."""
    return TheoremCheck(name, _verdict(lhs, rhs, missing), float(lhs), float(rhs),
                        float(rhs - lhs), missing, detail)


REPORT_COLUMNS = ("scenario", "n", "k", "check", "status", "preflight", "lhs", "rhs", "margin")


@dataclass(frozen=True, eq=False)
class BoundsReport:
    scenario: str
    spec: ModelSpec
    k: int
    constants: ConstantSet
    preflight: Preflight
    checks: List[TheoremCheck]

    @property
    def failed(self) -> List[TheoremCheck]:
        return [c for c in self.checks if c.status == FAIL]

    @property
    def vacuous(self) -> List[TheoremCheck]:
        return [c for c in self.checks if c.status == VACUOUS]

    def to_rows(self) -> List[Dict[str, Any]]:
        return [{
            "scenario": self.scenario,
            "n": self.spec.n,
            "k": self.k,
            "check": c.name,
            "status": c.status,
            "preflight": "ok" if not c.preflight else ";".join(c.preflight),
            "lhs": c.lhs,
            "rhs": c.rhs,
            "margin": c.margin,
        } for c in self.checks]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "model": self.spec.to_dict(),
            "k": self.k,
            "constants": self.constants.to_dict(),
            "preflight": self.preflight.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
        }


# =============================================================================
# SECTION 5: SIGNAL
# =============================================================================

def check_signal_theorem(spec: ModelSpec, labels: LabelAssignment, k: Optional[int] = None,
                         config: Optional[LabConfig] = None,
                         constants: Optional[ConstantSet] = None,
                         preflight: Optional[Preflight] = None) -> List[TheoremCheck]:
    """
    c_xi/2 sqrt(d) nu^k <= S(l, l') <= sqrt(8d) C_mu C_pi^k nu^k on the exact
    centers, and c_xi sqrt(d) nu^k <= S~ <= sqrt(2d) C_mu C_pi^k nu^k on the proxy.
    """
    config = config or DEFAULT_CONFIG
    k = spec.k if k is None else k
    const = constants or compute_constants(spec, labels, config, k)
    pre = preflight or growth_preflight(spec, labels, k, const, config)
    a = config.assumptions
    missing = pre.missing(SIGNAL_PRECONDITIONS)

    S = pairwise_distances(population_centers(spec, labels, k))
    s_min = min_offdiagonal(S)
    s_max = float(np.max(S))
    proxy = signal_proxy(spec, labels, k)
    p_min = min_offdiagonal(proxy.S_tilde)
    p_max = float(np.max(proxy.S_tilde))

    root_d, nu_k = math.sqrt(spec.d), spec.nu_n ** k
    scale = a.C_mu * a.C_pi ** k * nu_k
    return [
        _check("signal_lower", const.c_xi / 2.0 * root_d * nu_k, s_min, missing),
        _check("signal_upper", s_max, math.sqrt(8.0 * spec.d) * scale, missing),
        _check("proxy_lower", const.c_xi * root_d * nu_k, p_min, missing),
        _check("proxy_upper", p_max, math.sqrt(2.0 * spec.d) * scale, missing),
    ]


# =============================================================================
# SECTION 6: NOISE AND SNR
# =============================================================================

@dataclass(frozen=True, eq=False)
class SnrSample:
    """Per-trial Dev and rho^(k) over independent (A, X) draws."""
    k: int
    nu_n: float
    S_min: float
    dev: np.ndarray
    rho: np.ndarray

    @property
    def trials(self) -> int:
        return int(self.dev.size)


def sample_snr(spec: ModelSpec, labels: LabelAssignment, k: int, trials: int, seed: int,
               threads: int = 1, config: Optional[LabConfig] = None) -> SnrSample:
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    config = config or DEFAULT_CONFIG
    E = expected_power(spec, labels, k, config.guards)

    def one(trial: int) -> Tuple[float, float, float]:
        A = sample_graph(spec, labels, seed, trial)
        X = sample_features(spec, labels, seed, trial)
        report = snr(spec, labels, A, X, k, expected=E)
        return report.dev, report.rho, report.S_min

    rows = run_trials(one, trials, threads)
    dev = np.array([r[0] for r in rows])
    rho = np.array([r[1] for r in rows])
    return SnrSample(k, spec.nu_n, rows[0][2], dev, rho)


def _upper_frequency(name: str, count: int, trials: int, bound: float,
                     missing: Tuple[str, ...], **detail: Any) -> TheoremCheck:
    """Empirical frequency count/trials against a stated upper bound on a probability."""
    low = cp_lower(count, trials, CONFIDENCE)
    return _check(name, low, bound, missing, frequency=count / trials, **detail)


def _lower_frequency(name: str, count: int, trials: int, bound: float,
                     missing: Tuple[str, ...], **detail: Any) -> TheoremCheck:
    high = cp_upper(count, trials, CONFIDENCE)
    return _check(name, bound, high, missing, frequency=count / trials, **detail)


def _worst(name: str, cells: List[TheoremCheck], missing: Tuple[str, ...]) -> TheoremCheck:
    """Collapse a grid of cells into the cell with the smallest margin."""
    worst = min(cells, key=lambda c: c.margin)
    status = VACUOUS if missing else (FAIL if any(c.status == FAIL for c in cells) else PASS)
    grid = [dict(c.detail, lhs=c.lhs, rhs=c.rhs, margin=c.margin) for c in cells]
    return TheoremCheck(name, status, worst.lhs, worst.rhs, worst.margin, missing, {"grid": grid})


def check_noise_theorems(spec: ModelSpec, labels: LabelAssignment, k: Optional[int] = None,
                         trials: int = 500, seed: int = 0, threads: int = 1,
                         config: Optional[LabConfig] = None,
                         constants: Optional[ConstantSet] = None,
                         preflight: Optional[Preflight] = None,
                         sample: Optional[SnrSample] = None,
                         etas: Sequence[float] = DEFAULT_ETAS,
                         u_grid: Optional[Sequence[float]] = None,
                         moment_orders: Sequence[int] = (2, 4)) -> List[TheoremCheck]:
    """
    Upper tail on a u-grid (u >= 8de), lower tail at each eta, the moment form
    of the upper bound, E Dev^2 >= kappa_1 d nu^(2k-1) (exact when the walk
    covariance fits the guards), the fourth-moment ratio and Paley-Zygmund on
    the empirical Dev^2.
    """
    config = config or DEFAULT_CONFIG
    k = spec.k if k is None else k
    if trials < MIN_NOISE_TRIALS and sample is None:
        raise ConfigError(f"noise checks need at least {MIN_NOISE_TRIALS} trials, got {trials}")
    const = constants or compute_constants(spec, labels, config, k)
    pre = preflight or growth_preflight(spec, labels, k, const, config)
    sample = sample or sample_snr(spec, labels, k, trials, seed, threads, config)
    dev, m = sample.dev, sample.trials
    d, nu, r_n = spec.d, spec.nu_n, pre.rn.r_n
    scale = nu ** (k - 0.5)
    upper_missing = pre.missing(UPPER_PRECONDITIONS)
    lower_missing = pre.missing(LOWER_PRECONDITIONS)
    checks: List[TheoremCheck] = []

    grid = u_grid if u_grid is not None else [f * 8.0 * d * math.e for f in U_GRID_FACTORS]
    cells = []
    for u in grid:
        if u < 8.0 * d * math.e * (1.0 - 1e-12):
            raise ConfigError(f"u = {u:.6g} is below 8de = {8.0 * d * math.e:.6g}")
        level = const.kappa3 * scale * math.sqrt(u)
        count = int(np.sum(dev >= level))
        cells.append(_upper_frequency("noise_upper_tail", count, m, noise_tail_bound(u, d, r_n),
                                      upper_missing, u=u, level=level))
    checks.append(_worst("noise_upper_tail", cells, upper_missing))

    cells = []
    for eta in etas:
        if not 0.0 < eta < 1.0:
            raise ConfigError(f"eta must lie in (0, 1), got {eta}")
        level = math.sqrt(eta * const.kappa1 * d) * scale
        count = int(np.sum(dev >= level))
        bound = (1.0 - eta) ** 2 * const.kappa1 ** 2 / const.kappa2 if const.kappa2 > 0.0 else 0.0
        cells.append(_lower_frequency("noise_lower_tail", count, m, bound, lower_missing,
                                      eta=eta, level=level))
    checks.append(_worst("noise_lower_tail", cells, lower_missing))

    rng = stream(seed, "bounds-bootstrap", k)
    cells = []
    for r in moment_orders:
        low, _ = bootstrap_mean_ci(dev ** r, CONFIDENCE, rng=rng)
        rhs = const.kappa3 * math.sqrt(8.0 * d * r) * scale
        missing = upper_missing + (("r_le_rn",) if r > r_n else ())
        cells.append(_check("noise_moment", low ** (1.0 / r), rhs, missing, r=r,
                            estimate=float(np.mean(dev ** r)) ** (1.0 / r)))
    moment_missing = upper_missing if any(r <= r_n for r in moment_orders) else upper_missing + ("r_le_rn",)
    checks.append(_worst("noise_moment", cells, moment_missing))

    m2_mc = float(np.mean(dev ** 2))
    m4_mc = float(np.mean(dev ** 4))
    m2_low, m2_high = bootstrap_mean_ci(dev ** 2, CONFIDENCE, rng=rng)
    floor = const.kappa1 * d * nu ** (2 * k - 1)
    try:
        exact = exact_dev_second_moment(spec, labels, k, config.guards, threads)
        m2, source = exact.total, "exact"
        checks.append(_check("dev_second_moment", floor, m2, lower_missing,
                             source=source, monte_carlo=m2_mc))
    except GuardExceeded as e:
        log.debug("exact E[Dev^2] skipped: %s", e)
        m2, source = m2_mc, "monte_carlo"
        checks.append(_check("dev_second_moment", floor, m2_high, lower_missing,
                             source=source, estimate=m2_mc, ci=[m2_low, m2_high]))

    if m4_mc > 0.0:
        ratio = m2 ** 2 / m4_mc
        checks.append(_check("fourth_moment_ratio", const.kappa1 ** 2 / const.kappa2, ratio,
                             lower_missing, m2=m2, m4=m4_mc, m2_source=source))
        cells = []
        for eta in (0.0,) + tuple(etas):
            count = int(np.sum(dev ** 2 > eta * m2_mc))
            cells.append(_check("paley_zygmund", pz(eta, m2_mc, m4_mc), count / m, (), eta=eta))
        checks.append(_worst("paley_zygmund", cells, ()))
    else:
        reason = ("dev_nonzero",)
        checks.append(TheoremCheck("fourth_moment_ratio", VACUOUS, 0.0, 0.0, 0.0, reason))
        checks.append(TheoremCheck("paley_zygmund", VACUOUS, 0.0, 0.0, 0.0, reason))
    return checks


def check_main_theorem(spec: ModelSpec, labels: LabelAssignment, k: Optional[int] = None,
                       trials: int = 500, seed: int = 0, threads: int = 1,
                       config: Optional[LabConfig] = None,
                       constants: Optional[ConstantSet] = None,
                       preflight: Optional[Preflight] = None,
                       sample: Optional[SnrSample] = None,
                       alphas: Sequence[float] = DEFAULT_ALPHAS,
                       etas: Sequence[float] = DEFAULT_ETAS) -> List[TheoremCheck]:
    """
    Upper event sqrt(nu) rho <= sqrt(e) alpha kappa_3 / c_xi with probability
    1 - exp(-min{alpha^2, r_n} / 2); lower event sqrt(nu) rho >=
    sqrt(eta / 8) sqrt(kappa_1) / (C_mu C_pi^k) with probability
    (1 - eta)^2 kappa_1^2 / kappa_2.

    Chaining the noise tail at u = 4 d e alpha^2 with the signal lower bound
    gives the constant 4 sqrt(e), not sqrt(e); the frequency under that
    threshold is reported next to the stated one.
    """
    config = config or DEFAULT_CONFIG
    k = spec.k if k is None else k
    const = constants or compute_constants(spec, labels, config, k)
    pre = preflight or growth_preflight(spec, labels, k, const, config)
    sample = sample or sample_snr(spec, labels, k, trials, seed, threads, config)
    a = config.assumptions
    missing = pre.missing(MAIN_PRECONDITIONS)
    scaled = sample.rho * math.sqrt(sample.nu_n)
    m = sample.trials

    cells = []
    for alpha in alphas:
        if alpha < math.sqrt(2.0) * (1.0 - 1e-12):
            raise ConfigError(f"alpha must be >= sqrt(2), got {alpha}")
        stated = math.sqrt(math.e) * alpha * const.kappa3 / const.c_xi if const.c_xi > 0.0 else math.inf
        count = int(np.sum(scaled <= stated))
        derived = int(np.sum(scaled <= 4.0 * stated))
        prob = 1.0 - math.exp(-0.5 * min(alpha ** 2, pre.rn.r_n))
        cells.append(_lower_frequency("snr_upper", count, m, prob, missing, alpha=alpha,
                                      threshold=stated, derived_frequency=derived / m))
    checks = [_worst("snr_upper", cells, missing)]

    cells = []
    for eta in etas:
        if not 0.0 < eta < 1.0:
            raise ConfigError(f"eta must lie in (0, 1), got {eta}")
        threshold = math.sqrt(eta / 8.0) * math.sqrt(const.kappa1) / (a.C_mu * a.C_pi ** k)
        count = int(np.sum(scaled >= threshold))
        prob = (1.0 - eta) ** 2 * const.kappa1 ** 2 / const.kappa2 if const.kappa2 > 0.0 else 0.0
        cells.append(_lower_frequency("snr_lower", count, m, prob, missing, eta=eta, threshold=threshold))
    checks.append(_worst("snr_lower", cells, missing))
    return checks


def bounds_report(spec: ModelSpec, labels: LabelAssignment, k: Optional[int] = None,
                  trials: int = 0, seed: int = 0, threads: int = 1,
                  config: Optional[LabConfig] = None, scenario: str = "") -> BoundsReport:
    """Every check for one (model, k); trials = 0 keeps to the deterministic signal checks."""
    config = config or DEFAULT_CONFIG
    k = spec.k if k is None else k
    const = compute_constants(spec, labels, config, k)
    pre = growth_preflight(spec, labels, k, const, config)
    checks = check_signal_theorem(spec, labels, k, config, const, pre)
    if trials > 0:
        sample = sample_snr(spec, labels, k, trials, seed, threads, config)
        checks += check_noise_theorems(spec, labels, k, trials, seed, threads, config, const, pre, sample)
        checks += check_main_theorem(spec, labels, k, trials, seed, threads, config, const, pre, sample)
    report = BoundsReport(scenario, spec, k, const, pre, checks)
    log.info("%s k=%d: %d checks, %d failed, %d vacuous", scenario or f"n={spec.n}", k,
             len(checks), len(report.failed), len(report.vacuous))
    return report


# =============================================================================
# SECTION 7: OVERSMOOTHING SCALE
# =============================================================================

@dataclass(frozen=True)
class ScaleBound:
    """
    sigma_min(mu) sigma_min(B~)^k <= min |xi_bar_l - xi_bar_l'| and
    max |xi_bar_l - xi_bar_l'| <= sqrt(2) |mu| |B~|^k <= sqrt(2d) C_mu |B~|^k.
    """
    k: int
    B_tilde_norm: float
    B_tilde_sigma_min: float
    mu_norm: float
    mu_sigma_min: float
    separation_min: float
    separation_max: float
    lower: float
    upper: float
    upper_assumed: float
    c_xi: float
    satisfied: bool

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def scale_bound(spec: ModelSpec, labels: LabelAssignment, k: int,
                config: Optional[LabConfig] = None) -> ScaleBound:
    config = config or DEFAULT_CONFIG
    if spec.L < 2:
        raise ConfigError("the separation scale needs at least two classes")
    Bt = mixing_matrix(spec, labels)
    sv_B = np.linalg.svd(Bt, compute_uv=False)
    sv_mu = np.linalg.svd(spec.mu, compute_uv=False)
    mu_smin = float(sv_mu[-1]) if spec.d >= spec.L else 0.0

    dist = pairwise_distances(xi_bar(spec, labels, k))
    sep_min, sep_max = min_offdiagonal(dist), float(np.max(dist))
    lower = mu_smin * float(sv_B[-1]) ** k
    upper = math.sqrt(2.0) * float(sv_mu[0]) * float(sv_B[0]) ** k
    upper_assumed = math.sqrt(2.0 * spec.d) * config.assumptions.C_mu * float(sv_B[0]) ** k
    c_xi = min(sep_min / math.sqrt(spec.d), 1.0)
    return ScaleBound(
        k=k,
        B_tilde_norm=float(sv_B[0]),
        B_tilde_sigma_min=float(sv_B[-1]),
        mu_norm=float(sv_mu[0]),
        mu_sigma_min=mu_smin,
        separation_min=sep_min,
        separation_max=sep_max,
        lower=lower,
        upper=upper,
        upper_assumed=upper_assumed,
        c_xi=c_xi,
        satisfied=holds(lower, sep_min) and holds(sep_max, upper),
    )
