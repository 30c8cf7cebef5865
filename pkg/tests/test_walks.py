import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sympy import catalan

import walks
from config import Guards
from csbm import expected_adjacency, feature_means
from errors import ConfigError, GuardExceeded
from walks import (
    Walk,
    WalkSequence,
    check_Akij_growth,
    check_edge_moment_inequality,
    check_mixed_moment_inequality,
    class_pattern_EAk,
    count_closed,
    count_Nt,
    enumerate_walks,
    exact_dev_second_moment,
    exact_EAk,
    expected_power,
    mc_delta_moments,
    moment_decomposition,
    nstar_violations,
    proxy_coverage,
    random_walk_sequence,
    rho_control,
    rho_terms,
    rooted_census,
    theta_hi_proxy,
    theta_report,
    walk_oracle_EAk,
    walk_pair_covariance,
    walk_shapes,
)

from conftest import two_class


# ---------------------------------------------------------------------
# walks
# ---------------------------------------------------------------------
def test_walk_attributes():
    w = Walk((0, 1, 2, 1, 0))
    assert (w.k, w.root, w.endpoint, w.t) == (4, 0, 0, 2)
    assert w.is_tree and not w.has_cycle
    tri = Walk((0, 1, 2, 0))
    assert tri.has_cycle and not tri.is_tree


def test_self_loop_rejected():
    with pytest.raises(ConfigError):
        Walk((0, 0, 1))


def test_sequence_needs_common_root():
    with pytest.raises(ConfigError):
        WalkSequence(((0, 1), (1, 0)))


def test_gamma_partition():
    ws = WalkSequence(((0, 1, 2), (0, 1, 3), (0, 4, 5), (0, 4, 0)))
    assert ws.gamma == ((0, 1), (2, 3))
    assert ws.overlapping
    lonely = WalkSequence(((0, 1), (0, 2)))
    assert not lonely.overlapping


@pytest.mark.parametrize("n,k", [(4, 1), (4, 3), (5, 2)])
def test_enumeration_counts(n, k):
    assert sum(1 for _ in enumerate_walks(n, k, 0)) == (n - 1) ** k
    closed = list(enumerate_walks(n, k, 0, closed=True))
    assert all(w.endpoint == 0 for w in closed)
    assert sum(rooted_census(n, k).values()) == (n - 1) ** k


def test_walk_shapes_are_bell_numbers():
    # walks forbid repeated consecutive vertices, so shapes number Bell(k)
    assert [len(walk_shapes(k)) for k in range(1, 6)] == [1, 2, 5, 15, 52]


# ---------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------
@pytest.mark.parametrize("n", [3, 5, 8])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_open_walk_counts(n, k):
    for t in range(1, k + 1):
        rec = count_Nt(n, k, 0, 1, t)
        assert rec.satisfied
    assert count_Nt(n, 1, 0, 1, 1).equality is True


@pytest.mark.parametrize("n", [3, 5, 7])
@pytest.mark.parametrize("t", [1, 2, 3])
def test_closed_counts_equal_at_k_2t(n, t):
    rec = count_closed(n, 2 * t, 0, t)
    assert rec.equality is True
    assert rec.loopless == rec.loopless_bound
    assert rec.satisfied


def test_closed_count_k4_by_hand():
    n = 6
    rec = count_closed(n, 4, 0, 2)
    # i j i l i and i j l j i, j != l
    assert rec.loopless == 2 * (n - 1) * (n - 2)


def test_odd_closed_walks_have_cycles():
    rec = count_closed(6, 3, 0, 3)
    assert rec.loopless == 0
    assert rec.looped == 5 * 4
    assert rec.satisfied


def test_flipped_catalan_factor_breaks_equality(monkeypatch):
    monkeypatch.setattr(walks, "catalan", lambda t: catalan(t) + 1)
    rec = count_closed(5, 4, 0, 2)
    assert rec.equality is False
    assert not rec.satisfied


def test_count_argument_errors():
    with pytest.raises(ConfigError):
        count_Nt(5, 2, 0, 0, 1)
    with pytest.raises(ConfigError):
        count_Nt(5, 2, 0, 1, 3)
    with pytest.raises(ConfigError):
        count_closed(5, 1, 0, 1)
    with pytest.raises(GuardExceeded):
        rooted_census(10, 6, guards=Guards(max_enumeration=1000))


# ---------------------------------------------------------------------
# E[A^k]
# ---------------------------------------------------------------------
def test_second_power_closed_form(three_class):
    spec, labels = three_class
    EA = expected_adjacency(spec, labels).dense()
    expected = EA @ EA
    np.fill_diagonal(expected, EA.sum(axis=1))
    np.testing.assert_allclose(exact_EAk(spec, labels, 2), expected, rtol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_oracles_agree(three_class, k):
    spec, labels = three_class
    walk = walk_oracle_EAk(spec, labels, k)
    pattern = class_pattern_EAk(spec, labels, k)
    np.testing.assert_allclose(walk.dense(), pattern.dense(), rtol=1e-10)
    np.testing.assert_allclose(walk.tree_diag, pattern.tree_diag, rtol=1e-10)


def test_first_power_is_expected_adjacency(three_class):
    spec, labels = three_class
    np.testing.assert_allclose(expected_power(spec, labels, 1, source="pattern").dense(),
                               expected_adjacency(spec, labels).dense())
    np.testing.assert_array_equal(expected_power(spec, labels, 0).dense(), np.eye(spec.n))


def test_odd_power_has_no_tree_diagonal():
    spec, labels = two_class(5000, p=0.01, q=0.002)
    E = expected_power(spec, labels, 3)
    np.testing.assert_array_equal(E.tree_diag, 0.0)


def test_oracle_guards(three_class):
    spec, labels = three_class
    with pytest.raises(GuardExceeded):
        exact_EAk(spec, labels, 5)
    with pytest.raises(ConfigError):
        expected_power(spec, labels, 2, source="magic")


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_growth_bounds(k):
    nu = 4.0 * k * math.exp(2 * (k - 1)) + 10.0
    spec, labels = two_class(100_000, p=nu / 100_000, q=nu / 500_000)
    rec = check_Akij_growth(spec, labels, k)
    assert rec.precondition
    assert rec.satisfied


# ---------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------
def test_second_moment_k1_closed_form(small_model):
    spec, labels = small_model
    p = expected_adjacency(spec, labels).row(0)
    means = spec.mu[0, labels.y]
    expected = float(np.sum(p * (1.0 - p) * (means ** 2 + spec.sigma ** 2)))
    table = moment_decomposition(spec, labels, 0, 0, 2, 1)
    assert table.moment == pytest.approx(expected, rel=1e-12)
    assert table.theta_hi == pytest.approx(expected, rel=1e-12)
    assert table.theta_lo == pytest.approx(0.0, abs=1e-15)
    assert table.nstar_count == table.nstar_expected == spec.n - 1


@pytest.mark.parametrize("r,k,n", [(2, 2, 7), (2, 3, 5), (4, 2, 5)])
def test_nstar_structure(r, k, n):
    spec, labels = two_class(n)
    table = moment_decomposition(spec, labels, 0, 0, r, k)
    assert table.matchings == table.matchings_expected == math.prod(range(r - 1, 0, -2))
    assert table.nstar_count == table.nstar_expected
    assert table.bounds_ok
    assert table.theta_hi + table.theta_lo == pytest.approx(table.moment, rel=1e-9)


def test_moment_thread_independent(small_model):
    spec, labels = small_model
    guards = Guards(chunk_size=97)
    a = moment_decomposition(spec, labels, 0, 0, 2, 2, guards, threads=1)
    b = moment_decomposition(spec, labels, 0, 0, 2, 2, guards, threads=4)
    assert a.moment == b.moment
    assert a.census_rows() == b.census_rows()


def test_moment_guard(small_model):
    spec, labels = small_model
    with pytest.raises(GuardExceeded):
        moment_decomposition(spec, labels, 0, 0, 4, 3, Guards(max_enumeration=10_000))


def test_nstar_violations():
    good = WalkSequence(((0, 1, 2), (0, 1, 3)))
    assert nstar_violations(good) == []
    bad = WalkSequence(((0, 1, 0), (0, 1, 0)))
    assert "paired-branch" in nstar_violations(bad)
    triple = WalkSequence(((0, 1, 2), (0, 1, 3), (0, 1, 4)))
    assert "perfect-matching" in nstar_violations(triple)


def test_pair_covariance_k1(small_model):
    spec, labels = small_model
    p = expected_adjacency(spec, labels).row(0)
    np.testing.assert_allclose(walk_pair_covariance(spec, labels, 0, 1), np.diag(p * (1.0 - p)), atol=1e-15)


def test_dev_second_moment_k1_closed_form(three_class):
    spec, labels = three_class
    P = expected_adjacency(spec, labels).dense()
    M = feature_means(spec, labels)
    sq = np.sum(M ** 2, axis=1) + spec.d * spec.sigma ** 2
    per_node = P @ sq - (P ** 2) @ np.sum(M ** 2, axis=1)
    dev = exact_dev_second_moment(spec, labels, 1)
    assert dev.total == pytest.approx(float(per_node.mean()), rel=1e-10)
    assert dev.graph_term + dev.feature_term == pytest.approx(dev.total)


@pytest.mark.slow
def test_monte_carlo_matches_exact_moment(small_model):
    spec, labels = small_model
    exact = moment_decomposition(spec, labels, 0, 0, 2, 2).moment
    mc = mc_delta_moments(spec, labels, 0, 0, 2, 2, trials=20_000, seed=3)
    assert abs(mc.mean - exact) <= 4.0 * mc.stderr


def test_monte_carlo_argument_checks(small_model):
    spec, labels = small_model
    with pytest.raises(ConfigError):
        mc_delta_moments(spec, labels, 0, 0, 2, 1, trials=10, seed=0)
    with pytest.raises(ConfigError):
        mc_delta_moments(spec, labels, 0, 0, 3, 1, trials=1000, seed=0)
    big, big_labels = two_class(300)
    with pytest.raises(GuardExceeded):
        mc_delta_moments(big, big_labels, 0, 0, 2, 1, trials=1000, seed=0)


# ---------------------------------------------------------------------
# Theta_hi proxy and auxiliary inequalities
# ---------------------------------------------------------------------
def test_proxy_methods_agree(three_class):
    spec, labels = three_class
    for r in (2, 4):
        esp = theta_hi_proxy(spec, labels, 0, 1, r, 2, method="esp")
        tuples = theta_hi_proxy(spec, labels, 0, 1, r, 2, method="tuples")
        assert esp == pytest.approx(tuples, rel=1e-12)


def test_theta_report():
    spec, labels = two_class(12, p=0.3, q=0.1, mu=(1.0, 0.5), sigma=0.5)
    rep = theta_report(spec, labels, 0, 0, 2, 2)
    assert rep.passed is True
    assert abs(rep.theta_hi - rep.theta_hi_proxy) <= rep.proxy_gap_bound


@pytest.mark.parametrize("n", [12, 20, 30])
def test_theta_report_k1_noiseless(n):
    spec, labels = two_class(n, p=0.3, q=0.1, mu=(1.0, 0.5), sigma=0.0)
    rep = theta_report(spec, labels, 0, 0, 2, 1)
    assert rep.theta_hi == pytest.approx(rep.theta_hi_proxy, rel=1e-12)
    assert rep.proxy_gap_bound == pytest.approx(0.3)
    assert rep.passed is True


def test_theta_report_k1_sigma_term():
    # 5 same-class neighbours at p = 0.3 and 6 cross-class at q = 0.1
    spec, labels = two_class(12, p=0.3, q=0.1, mu=(1.0, 0.5), sigma=0.5)
    rep = theta_report(spec, labels, 0, 0, 2, 1)
    gap = 0.25 * (5 * 0.3 * 0.7 + 6 * 0.1 * 0.9)
    assert rep.theta_hi - rep.theta_hi_proxy == pytest.approx(gap, rel=1e-12)
    assert rep.proxy_gap_bound == pytest.approx(0.3)
    assert rep.passed is False


@pytest.mark.parametrize("n,k", [(12, 2), (100, 2), (100, 3), (1000, 4)])
def test_proxy_coverage(n, k):
    cov = proxy_coverage(n, 2, k)
    assert cov["satisfied"]
    assert cov["ratio"] <= 1.0


def test_edge_and_mixed_moment_inequalities():
    spec, labels = two_class(6, p=0.6, q=0.3)
    assert check_edge_moment_inequality(spec, labels, 2, 2).satisfied
    assert check_mixed_moment_inequality(seed=1, cases=30).satisfied


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), r=st.integers(1, 4), k=st.integers(1, 4))
def test_rho_control_property(seed, r, k):
    spec, labels = two_class(9, p=0.4, q=0.15, mu=(2.0, -0.5), sigma=0.8)
    ws = random_walk_sequence(spec.n, k, r, 0, np.random.default_rng(seed))
    assert rho_control(ws, spec, labels, 0).satisfied


def test_rho_terms_single_edge_pair(small_model):
    spec, labels = small_model
    p = expected_adjacency(spec, labels).entry(0, 1)
    mean = spec.mu[0, labels.class_of(1)]
    terms = rho_terms(WalkSequence(((0, 1), (0, 1))), spec, labels, 0)
    assert terms.rho1 == pytest.approx(p - p ** 2)
    assert terms.rho2 == pytest.approx(mean ** 2 + spec.sigma ** 2)


@pytest.mark.parametrize("walks", [
    ((0, 1), (0, 2)),
    ((0, 1, 2), (0, 3, 4)),
    ((0, 1, 2), (0, 1, 3), (0, 4, 5)),
])
def test_rho_terms_vanish_without_overlap(three_class, walks):
    spec, labels = three_class
    ws = WalkSequence(walks)
    assert not ws.overlapping
    terms = rho_terms(ws, spec, labels, 0)
    assert terms.rho1 == pytest.approx(0.0, abs=1e-15)
    assert terms.rho2 != 0.0
    assert terms.rho == pytest.approx(0.0, abs=1e-15)
