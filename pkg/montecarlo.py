"""
Monte Carlo Plumbing

  stream(seed, tag, *index)  - counter-based Generator (Philox) keyed by
                               (master seed, purpose tag, trial index);
                               independent of call order and thread count
  run_trials(fn, trials)     - thread-pool map over trial indices, results
                               returned in trial order
  statistics                 - mean/SE, Clopper-Pearson limits, bootstrap
                               CI of a mean, log-log slopes
"""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, List, Sequence, Tuple, TypeVar

import numpy as np
from scipy import stats

from errors import ConfigError

log = logging.getLogger(__name__)

T = TypeVar("T")


# =============================================================================
# SECTION 1: RNG STREAMS
# =============================================================================

def tag_code(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "big")


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    if int(seed) < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    key = (tag_code(tag),) + tuple(int(i) for i in index)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


# =============================================================================
# SECTION 2: PARALLEL TRIALS
# =============================================================================

def run_trials(fn: Callable[[int], T], trials: int, threads: int = 1) -> List[T]:
    """Evaluate fn(0..trials-1); the returned list is ordered by trial index."""
    if trials < 0:
        raise ConfigError(f"trials must be >= 0, got {trials}")
    if threads <= 1 or trials <= 1:
        return [fn(t) for t in range(trials)]

    log.debug("running %d trials on %d threads", trials, threads)
    results: Dict[int, T] = {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(fn, t): t for t in range(trials)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [results[t] for t in range(trials)]


# =============================================================================
# SECTION 3: STATISTICS
# =============================================================================

def mean_se(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("mean of an empty sample")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


def cp_upper(successes: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided Clopper-Pearson upper limit of a binomial proportion."""
    if successes >= trials:
        return 1.0
    return float(stats.beta.ppf(confidence, successes + 1, trials - successes))


def cp_lower(successes: int, trials: int, confidence: float = 0.99) -> float:
    if successes <= 0:
        return 0.0
    return float(stats.beta.ppf(1.0 - confidence, successes, trials - successes + 1))


def bootstrap_mean_ci(
    samples: Sequence[float],
    confidence: float = 0.99,
    n_resamples: int = 999,
    rng: Any = None,
) -> Tuple[float, float]:
    arr = np.asarray(samples, dtype=float)
    if arr.size < 2 or np.ptp(arr) == 0.0:
        value = float(arr.mean()) if arr.size else 0.0
        return value, value
    batch = max(1, int(4_000_000 // arr.size))
    res = stats.bootstrap(
        (arr,),
        np.mean,
        confidence_level=confidence,
        n_resamples=n_resamples,
        method="percentile",
        batch=batch,
        random_state=rng,
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> Dict[str, float]:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if lx.size < 2 or np.ptp(lx) == 0.0:
        raise ValueError("a slope needs at least two distinct x values")
    fit = stats.linregress(lx, ly)
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "stderr": float(fit.stderr)}
