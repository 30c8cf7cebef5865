"""
Aggregated Features, Signal and Noise

Flow:
  1. build_feature_set     - phi^(k) = A^k X plus the seeded observed set O
  2. population_centers    - mu~_l = mu Z^T E[A^k] 1_{C_l} / n_l, anchor form checked
  3. signal_proxy          - xi_l = mu (Pi n B)^k e_l, checked against its defining form
  4. snr                   - S(l, l'), Dev, rho^(k) = Dev / min S
  5. noise_split           - D = Delta + Delta^eps, Delta = Delta^mu + Delta~
  6. linear classifier     - ridge least squares on O, argmax decisions, error on O^c

E[A^k] comes from walks.expected_power as a BlockMatrix, so every
expectation here is exact (never sampled).
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy import linalg as sla

from csbm import (
    BlockMatrix,
    LabelAssignment,
    ModelSpec,
    check_consistent,
    expected_adjacency,
    feature_means,
    xi_bar,
)
from errors import ConfigError, ConsistencyError, DimensionError, NoSignalPairsError
from linalg import aggregate_power
from montecarlo import stream
from walks import expected_power

log = logging.getLogger(__name__)

CENTER_RTOL = 1e-9
PROXY_RTOL = 1e-8
SPLIT_RTOL = 1e-8
ANCHOR_MAX_N = 200_000
DEFAULT_OBSERVED_FRACTION = 0.1

TRIAL_COLUMNS = (
    "seed", "n", "d", "L", "k", "nu_n", "S_min", "dev", "rho", "rho_times_sqrt_nu",
    "misclass_rate", "observed_fraction", "build_id", "plan_hash",
)


def _rel_gap(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))) if np.size(b) else 0.0, 1e-300)
    return float(np.max(np.abs(a - b))) / scale if np.size(a) else 0.0


# =============================================================================
# SECTION 1: FEATURE SETS
# =============================================================================

@dataclass(frozen=True, eq=False)
class FeatureSet:
    X: np.ndarray
    phi_k: np.ndarray
    y: np.ndarray
    observed: np.ndarray
    k: int

    def __post_init__(self):
        if self.phi_k.shape != self.X.shape:
            raise DimensionError(f"phi_k {self.phi_k.shape} and X {self.X.shape} differ")
        if self.y.shape != (self.X.shape[0],):
            raise DimensionError("one label per row of X is required")
        obs = np.unique(np.asarray(self.observed, dtype=np.int64))
        if obs.size == 0:
            raise ConfigError("the observed set O is empty")
        if obs[0] < 0 or obs[-1] >= self.n:
            raise ConfigError("observed index outside 0..n-1")
        object.__setattr__(self, "observed", obs)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    @property
    def holdout(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.observed] = False
        return np.flatnonzero(mask)

    @property
    def observed_fraction(self) -> float:
        return self.observed.size / self.n


def sample_observed(n: int, fraction: float, seed: int, trial: int = 0) -> np.ndarray:
    """Uniform observed set of round(fraction * n) nodes (at least one)."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"observed fraction must lie in (0, 1], got {fraction}")
    size = min(n, max(1, int(round(fraction * n))))
    rng = stream(seed, "observed", trial)
    return np.sort(rng.choice(n, size=size, replace=False)).astype(np.int64)


def build_feature_set(A: Any, X: np.ndarray, labels: LabelAssignment, k: int,
                      observed_fraction: float = DEFAULT_OBSERVED_FRACTION, seed: int = 0,
                      trial: int = 0, threads: int = 1,
                      observed: Optional[np.ndarray] = None) -> FeatureSet:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != labels.n:
        raise DimensionError(f"X must be {labels.n} x d, got {X.shape}")
    phi = aggregate_power(A, X, k, threads)
    if observed is None:
        observed = sample_observed(labels.n, observed_fraction, seed, trial)
    return FeatureSet(X, phi, labels.y, observed, k)


# =============================================================================
# SECTION 2: CENTERS AND SIGNAL
# =============================================================================

def _averaged_centers(mu: np.ndarray, M: BlockMatrix) -> np.ndarray:
    """mu Z^T M 1_{C_l} / n_l for every l, from block sums."""
    N = M.labels.n_ell.astype(float)
    R = M.class_row_sums()
    return mu @ (N[:, None] * R) / N[None, :]


def population_centers(spec: ModelSpec, labels: LabelAssignment, k: int,
                       expected: Optional[BlockMatrix] = None) -> np.ndarray:
    """
    d x L matrix of ideal centers. The class average (block sums) and the
    anchor form (row of one member of each class) must agree.
    """
    check_consistent(spec, labels)
    E = expected if expected is not None else expected_power(spec, labels, k)
    averaged = _averaged_centers(spec.mu, E)

    if labels.n <= ANCHOR_MAX_N:
        M = feature_means(spec, labels)
        anchored = np.stack([E.row(int(i)) @ M for i in labels.anchors()], axis=1)
    else:
        anchored = spec.mu @ E.class_row_sums().T
    gap = _rel_gap(anchored, averaged)
    if gap > CENTER_RTOL:
        raise ConsistencyError(f"class centers depend on the anchor (relative gap {gap:.3g})")
    return averaged


@dataclass(frozen=True, eq=False)
class SignalProxy:
    k: int
    xi: np.ndarray
    xi_bar: Optional[np.ndarray]
    S_tilde: np.ndarray


def pairwise_distances(columns: np.ndarray) -> np.ndarray:
    diff = columns[:, :, None] - columns[:, None, :]
    return np.sqrt(np.sum(diff ** 2, axis=0))


def signal_proxy(spec: ModelSpec, labels: LabelAssignment, k: int) -> SignalProxy:
    """xi^(k) by mu (Pi n B)^k e_l and by mu Z^T (Z B Z^T)^k 1_{C_l} / n_l."""
    check_consistent(spec, labels)
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    N = labels.n_ell.astype(float)
    reduced = spec.mu @ np.linalg.matrix_power(N[:, None] * spec.B, k)
    defining = _averaged_centers(spec.mu, expected_adjacency(spec, labels).P.power(k))
    gap = _rel_gap(defining, reduced)
    if gap > PROXY_RTOL:
        raise ConsistencyError(f"the two forms of xi^({k}) disagree (relative gap {gap:.3g})")

    xb = None
    if spec.nu_n > 0.0:
        xb = reduced / spec.nu_n ** k
        check = xi_bar(spec, labels, k)
        if _rel_gap(xb, check) > 1e-10:
            raise ConsistencyError("xi = nu^k xi_bar fails")
    return SignalProxy(k, reduced, xb, pairwise_distances(reduced))


@dataclass(frozen=True, eq=False)
class SnrReport:
    k: int
    nu_n: float
    centers: np.ndarray
    S: np.ndarray
    S_min: float
    dev: float
    rho: float
    proxy: SignalProxy

    @property
    def rho_times_sqrt_nu(self) -> float:
        return self.rho * math.sqrt(self.nu_n)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "nu_n": self.nu_n,
            "centers": self.centers.T.tolist(),
            "S": self.S.tolist(),
            "S_min": self.S_min,
            "dev": self.dev,
            "rho": self.rho,
            "rho_times_sqrt_nu": self.rho_times_sqrt_nu,
            "xi": self.proxy.xi.T.tolist(),
            "xi_bar": None if self.proxy.xi_bar is None else self.proxy.xi_bar.T.tolist(),
            "S_tilde": self.proxy.S_tilde.tolist(),
        }


def min_offdiagonal(S: np.ndarray) -> float:
    L = S.shape[0]
    if L < 2:
        raise NoSignalPairsError("fewer than two classes: no signal pairs")
    return float(np.min(S[~np.eye(L, dtype=bool)]))


def snr(spec: ModelSpec, labels: LabelAssignment, A: Any, X: np.ndarray, k: int,
        expected: Optional[BlockMatrix] = None, threads: int = 1,
        phi: Optional[np.ndarray] = None) -> SnrReport:
    """rho^(k) = Dev / min S with Dev = (n^-1 sum_i |phi_i - E phi_i|^2)^(1/2)."""
    check_consistent(spec, labels)
    if spec.L < 2:
        raise NoSignalPairsError("fewer than two classes: no signal pairs")
    E = expected if expected is not None else expected_power(spec, labels, k)
    centers = population_centers(spec, labels, k, E)
    S = pairwise_distances(centers)
    s_min = min_offdiagonal(S)

    if phi is None:
        phi = aggregate_power(A, X, k, threads)
    mean_phi = E.matvec(feature_means(spec, labels))
    dev = math.sqrt(float(np.mean(np.sum((phi - mean_phi) ** 2, axis=1))))
    if s_min > 0.0:
        rho = dev / s_min
    else:
        rho = 0.0 if dev == 0.0 else math.inf
        log.warning("min S = 0 at k=%d: rho reported as %s", k, rho)
    return SnrReport(k, spec.nu_n, centers, S, s_min, dev, rho, signal_proxy(spec, labels, k))


# =============================================================================
# SECTION 3: NOISE DECOMPOSITION
# =============================================================================

@dataclass(frozen=True, eq=False)
class NoiseSplit:
    D: np.ndarray
    delta: np.ndarray
    delta_eps: np.ndarray
    delta_mu: np.ndarray
    delta_tilde: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        rms = lambda a: math.sqrt(float(np.mean(np.sum(a ** 2, axis=1))))
        return {
            "dev": rms(self.D),
            "delta_rms": rms(self.delta),
            "delta_eps_rms": rms(self.delta_eps),
            "delta_mu_rms": rms(self.delta_mu),
            "delta_tilde_rms": rms(self.delta_tilde),
        }


def noise_split(spec: ModelSpec, labels: LabelAssignment, A: Any, X: np.ndarray, k: int,
                expected: Optional[BlockMatrix] = None, threads: int = 1) -> NoiseSplit:
    """
    D by direct subtraction (A^k X - E[A^k] M) and by assembly
    ((A^k - E[A^k]) X + E[A^k] eps). Both splits must add up.
    """
    check_consistent(spec, labels)
    X = np.asarray(X, dtype=float)
    E = expected if expected is not None else expected_power(spec, labels, k)
    M = feature_means(spec, labels)
    eps = X - M

    phi = aggregate_power(A, X, k, threads)
    D = phi - E.matvec(M)
    delta = phi - E.matvec(X)
    delta_eps = E.matvec(eps)
    delta_mu = aggregate_power(A, M, k, threads) - E.matvec(M)
    delta_tilde = aggregate_power(A, eps, k, threads) - delta_eps

    scale = max(float(np.max(np.abs(phi))) if phi.size else 0.0, float(np.max(np.abs(D))) if D.size else 0.0, 1.0)
    if float(np.max(np.abs(D - (delta + delta_eps)), initial=0.0)) > SPLIT_RTOL * scale:
        raise ConsistencyError("D != Delta + Delta^eps")
    if float(np.max(np.abs(delta - (delta_mu + delta_tilde)), initial=0.0)) > SPLIT_RTOL * scale:
        raise ConsistencyError("Delta != Delta^mu + Delta~")
    return NoiseSplit(D, delta, delta_eps, delta_mu, delta_tilde)


# =============================================================================
# SECTION 4: LINEAR CLASSIFIER
# =============================================================================

@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Ridge least squares to one-hot targets on standardized features with an intercept."""
    mean: np.ndarray
    scale: np.ndarray
    W: np.ndarray
    ridge: float

    @property
    def classes(self) -> int:
        return int(self.W.shape[1])

    def design(self, rows: np.ndarray) -> np.ndarray:
        Z = (np.asarray(rows, dtype=float) - self.mean) / self.scale
        return np.hstack((np.ones((Z.shape[0], 1)), Z))

    def scores(self, rows: np.ndarray) -> np.ndarray:
        return self.design(rows) @ self.W


def fit_linear_classifier(fs: FeatureSet, L: Optional[int] = None, ridge: float = 1e-6) -> LinearClassifier:
    L = int(fs.y.max()) + 1 if L is None else L
    rows = fs.phi_k[fs.observed]
    targets = fs.y[fs.observed]
    missing = sorted(set(range(L)) - set(targets.tolist()))
    if missing:
        raise ConfigError(f"class(es) {missing} have no observed node")

    mean = rows.mean(axis=0)
    scale = rows.std(axis=0)
    scale[scale == 0.0] = 1.0
    F = np.hstack((np.ones((rows.shape[0], 1)), (rows - mean) / scale))
    Y = np.eye(L)[targets]
    G = F.T @ F
    lam = ridge * float(np.trace(G)) / G.shape[0]
    W = sla.solve(G + lam * np.eye(G.shape[0]), F.T @ Y, assume_a="pos")
    return LinearClassifier(mean, scale, W, lam)


def predict(clf: LinearClassifier, rows: np.ndarray) -> np.ndarray:
    """argmax of class scores; ties go to the lower class index."""
    return np.argmax(clf.scores(rows), axis=1)


def misclassification(pred: np.ndarray, truth: np.ndarray, holdout: Optional[np.ndarray] = None) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionError("prediction and truth lengths differ")
    idx = np.arange(truth.size) if holdout is None else np.asarray(holdout, dtype=np.int64)
    if idx.size == 0:
        raise ConfigError("empty holdout set")
    return float(np.mean(pred[idx] != truth[idx]))


def holdout_error(fs: FeatureSet, L: Optional[int] = None) -> float:
    clf = fit_linear_classifier(fs, L)
    return misclassification(predict(clf, fs.phi_k), fs.y, fs.holdout)


def trial_row(seed: int, spec: ModelSpec, report: SnrReport, misclass_rate: float,
              observed_fraction: float, build_id: str, plan_hash: str) -> Dict[str, Any]:
    row = {
        "seed": seed,
        "n": spec.n,
        "d": spec.d,
        "L": spec.L,
        "k": report.k,
        "nu_n": spec.nu_n,
        "S_min": report.S_min,
        "dev": report.dev,
        "rho": report.rho,
        "rho_times_sqrt_nu": report.rho_times_sqrt_nu,
        "misclass_rate": misclass_rate,
        "observed_fraction": observed_fraction,
        "build_id": build_id,
        "plan_hash": plan_hash,
    }
    return {key: row[key] for key in TRIAL_COLUMNS}
