import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bounds import (
    FAIL,
    PASS,
    REPORT_COLUMNS,
    VACUOUS,
    bounds_report,
    check_signal_theorem,
    compute_constants,
    compute_rn,
    growth_preflight,
    noise_tail_bound,
    pz,
    scale_bound,
    subweibull_tail,
)
from csbm import ModelSpec, assign_labels, mixing_matrix
from errors import ConfigError
from verify import signal_scenarios

from conftest import two_class


# ---------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------
def test_constants_two_class():
    spec, labels = two_class(1000, p=0.1, q=0.0, mu=(1.0, -1.0), sigma=1.0)
    const = compute_constants(spec, labels)
    assert const.kappa0 == 8.0
    assert const.kappa3 == 16.0
    assert const.kappa3_proof == 8.0
    assert const.kappa2 == pytest.approx(8.0 * (32.0 + 16.0 ** 4))
    assert const.c_xi == 1.0


def test_constants_zero_mean_row():
    spec, labels = two_class(100, mu=(0.0, 0.0), sigma=1.0)
    assert math.isinf(compute_constants(spec, labels).kappa0)
    assert compute_rn(math.inf, 1, 0.5, 1e6).r_n == 0


def test_rn_values():
    res = compute_rn(4.0, 1, 0.5, 1e8)
    assert res.r_n == 2
    assert res.r_n >= res.estimate_even
    assert compute_rn(4.0, 1, 0.5, 1.0).r_n == 0


@given(st.floats(1.0, 1e30), st.floats(1.0, 1e30))
def test_rn_monotone_in_nu(a, b):
    lo, hi = sorted((a, b))
    assert compute_rn(4.0, 2, 0.5, lo).r_n <= compute_rn(4.0, 2, 0.5, hi).r_n


@given(st.floats(4.0, 100.0), st.integers(1, 5), st.floats(10.0, 1e40))
def test_rn_even_and_above_estimate(kappa0, k, nu):
    res = compute_rn(kappa0, k, 0.5, nu)
    assert res.r_n % 2 == 0
    assert res.r_n >= res.estimate_even


@pytest.mark.parametrize("args", [(4.0, 1, 0.0, 10.0), (4.0, 1, 0.5, 0.0), (4.0, 0, 0.5, 10.0), (0.0, 1, 0.5, 10.0)])
def test_rn_rejects(args):
    with pytest.raises(ConfigError):
        compute_rn(*args)


# ---------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------
def test_subweibull_regimes_meet():
    K, C, eta, r0 = 1.0, 1.0, 0.5, 10
    edge = 2.0 * C * eta * math.e * r0
    left = subweibull_tail(K, C, eta, r0, edge)
    right = subweibull_tail(K, C, eta, r0, edge * (1.0 + 1e-9))
    assert left.regime == "exponential" and right.regime == "polynomial"
    assert left.bound == pytest.approx(right.bound, rel=1e-6)
    assert left.bound <= left.summary * (1.0 + 1e-12)


def test_subweibull_unbounded_r0():
    tail = subweibull_tail(2.0, 1.0, 1.0, math.inf, 50.0)
    assert tail.regime == "exponential"
    assert tail.level == 100.0
    assert tail.bound == pytest.approx(math.exp(-50.0 / (2.0 * math.e)))


def test_subweibull_rejects_small_x():
    with pytest.raises(ConfigError):
        subweibull_tail(1.0, 1.0, 1.0, 4, 1.0)
    with pytest.raises(ConfigError):
        subweibull_tail(1.0, 1.0, 1.0, 3, 20.0)


def test_noise_tail_and_pz():
    assert noise_tail_bound(8.0 * math.e, 2, 10) == pytest.approx(math.exp(-0.5))
    assert noise_tail_bound(1e9, 1, 4) == pytest.approx(math.exp(-2.0))
    assert pz(0.0, 2.0, 8.0) == 0.5
    assert pz(0.5, 2.0, 8.0) == 0.125
    with pytest.raises(ConfigError):
        pz(1.0, 1.0, 1.0)


# ---------------------------------------------------------------------
# preflight and signal checks
# ---------------------------------------------------------------------
@pytest.mark.parametrize("name,spec", signal_scenarios(), ids=[name for name, _ in signal_scenarios()])
def test_signal_scenarios(name, spec):
    labels = assign_labels(spec)
    checks = check_signal_theorem(spec, labels, spec.k)
    statuses = {c.status for c in checks}
    assert FAIL not in statuses
    if name in ("degenerate-means", "small-n"):
        assert statuses == {VACUOUS}
    else:
        assert statuses == {PASS}


def test_degenerate_means_blocks_every_growth_condition():
    spec, labels = two_class(10_000, p=0.01, q=0.0, mu=(1.0, 1.0))
    pre = growth_preflight(spec, labels, 1)
    assert compute_constants(spec, labels).c_xi == 0.0
    assert not pre.conditions["signal_growth"].satisfied
    assert not pre.conditions["n_growth"].satisfied


def test_bounds_report_rows():
    spec, labels = two_class(2000, p=0.04, q=0.008, k=2)
    report = bounds_report(spec, labels, 2, scenario="unit")
    rows = report.to_rows()
    assert [r["check"] for r in rows] == ["signal_lower", "signal_upper", "proxy_lower", "proxy_upper"]
    assert all(set(r) == set(REPORT_COLUMNS) for r in rows)
    assert report.to_dict()["scenario"] == "unit"
    assert not report.failed


@pytest.mark.slow
def test_noise_and_main_checks_never_fail():
    spec, labels = two_class(40, p=0.5, q=0.25)
    report = bounds_report(spec, labels, 1, trials=200, seed=3)
    names = {c.name for c in report.checks}
    assert {"noise_upper_tail", "noise_lower_tail", "dev_second_moment", "snr_upper", "snr_lower"} <= names
    assert not report.failed


def test_noise_checks_need_trials():
    from bounds import check_noise_theorems
    spec, labels = two_class(20)
    with pytest.raises(ConfigError):
        check_noise_theorems(spec, labels, 1, trials=10)


# ---------------------------------------------------------------------
# oversmoothing scale
# ---------------------------------------------------------------------
def test_scale_bound_reads_mixing_matrix():
    spec, labels = two_class(1000, p=0.01, q=0.002)
    np.testing.assert_allclose(mixing_matrix(spec, labels), 0.5 * np.array([[1.0, 0.2], [0.2, 1.0]]))
    sb = scale_bound(spec, labels, 2)
    # eigenvalues of 0.5 [[1, .2], [.2, 1]] are 0.6 and 0.4
    assert sb.B_tilde_norm == pytest.approx(0.6)
    assert sb.B_tilde_sigma_min == pytest.approx(0.4)


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_scale_bound_brackets_separation(k):
    spec = ModelSpec(n=1000, d=2, L=2, B=[[0.01, 0.002], [0.002, 0.01]], pi=[0.5, 0.5],
                     mu=[[1.0, -1.0], [0.5, 0.5]], sigma=1.0, k=k)
    labels = assign_labels(spec)
    sb = scale_bound(spec, labels, k)
    assert sb.satisfied
    assert sb.lower <= sb.separation_min <= sb.separation_max <= sb.upper
    assert sb.separation_min == pytest.approx(2.0 * 0.4 ** k, rel=1e-12)
