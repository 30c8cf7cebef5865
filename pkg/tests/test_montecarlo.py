import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import ConfigError
from montecarlo import (
    bootstrap_mean_ci,
    cp_lower,
    cp_upper,
    loglog_slope,
    mean_se,
    run_trials,
    stream,
)


def test_streams_depend_only_on_key():
    a = stream(7, "graph", 3).random(5)
    b = stream(7, "graph", 3).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, stream(7, "graph", 4).random(5))
    assert not np.array_equal(a, stream(7, "features", 3).random(5))
    assert not np.array_equal(a, stream(8, "graph", 3).random(5))


def test_negative_seed_rejected():
    with pytest.raises(ConfigError):
        stream(-1, "graph")


def test_negative_trials_rejected():
    with pytest.raises(ConfigError):
        run_trials(lambda t: t, -1)


@pytest.mark.parametrize("threads", [1, 2, 4])
def test_run_trials_ordered_and_thread_independent(threads):
    draws = run_trials(lambda t: float(stream(1, "x", t).normal()), 20, threads)
    assert draws == [float(stream(1, "x", t).normal()) for t in range(20)]


def test_run_trials_empty():
    assert run_trials(lambda t: t, 0, 4) == []


def test_mean_se():
    assert mean_se([2.0]) == (2.0, 0.0)
    mean, se = mean_se([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert se == pytest.approx(1.0 / math.sqrt(3.0))
    with pytest.raises(ValueError):
        mean_se([])


@settings(max_examples=50, deadline=None)
@given(trials=st.integers(1, 400), data=st.data())
def test_clopper_pearson_brackets_the_proportion(trials, data):
    successes = data.draw(st.integers(0, trials))
    lo, hi = cp_lower(successes, trials), cp_upper(successes, trials)
    assert 0.0 <= lo <= successes / trials <= hi <= 1.0


def test_clopper_pearson_edges():
    assert cp_lower(0, 10) == 0.0
    assert cp_upper(10, 10) == 1.0
    # 0 successes in n trials: upper limit 1 - (1 - c)^(1/n)
    assert cp_upper(0, 100) == pytest.approx(1.0 - 0.01 ** (1.0 / 100.0))


def test_bootstrap_constant_sample():
    assert bootstrap_mean_ci([3.0, 3.0, 3.0]) == (3.0, 3.0)


def test_bootstrap_covers_mean():
    sample = stream(0, "boot").normal(5.0, 1.0, 400)
    lo, hi = bootstrap_mean_ci(sample, 0.99, rng=stream(0, "resample"))
    assert lo < sample.mean() < hi


def test_loglog_slope():
    x = np.array([10.0, 100.0, 1000.0])
    fit = loglog_slope(x, 3.0 * x ** -0.5)
    assert fit["slope"] == pytest.approx(-0.5)
    assert fit["intercept"] == pytest.approx(math.log(3.0))
    with pytest.raises(ValueError):
        loglog_slope([1.0, 1.0], [2.0, 3.0])
