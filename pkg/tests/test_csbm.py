import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import AssumptionConstants
from csbm import (
    BlockMatrix,
    LabelAssignment,
    ModelSpec,
    SparseGraph,
    assign_labels,
    check_assumptions,
    expected_adjacency,
    feature_means,
    load_model_spec,
    mixing_matrix,
    noise_raw_moment,
    sample_features,
    sample_graph,
    save_model_spec,
    xi_bar,
)
from errors import ConfigError, DimensionError, EmptyClusterError

from conftest import two_class


# ---------------------------------------------------------------------
# model spec
# ---------------------------------------------------------------------
@pytest.mark.parametrize("changes", [
    {"B": [[0.5, 0.2], [0.1, 0.5]]},
    {"B": [[1.5, 0.2], [0.2, 0.5]]},
    {"pi": [0.6, 0.6]},
    {"pi": [1.0, 0.0]},
    {"sigma": -1.0},
    {"mu": [[1.0, 2.0, 3.0]]},
    {"noise": "cauchy"},
    {"n": 0},
])
def test_invalid_models_rejected(changes):
    spec, _ = two_class(10)
    with pytest.raises(ConfigError):
        spec.replace(**changes)


def test_model_file_round_trip(tmp_path, three_class):
    spec, _ = three_class
    path = save_model_spec(spec, tmp_path / "model.json")
    back = load_model_spec(path)
    np.testing.assert_array_equal(back.mu, spec.mu)
    np.testing.assert_array_equal(back.B, spec.B)
    assert (back.n, back.d, back.L, back.sigma) == (spec.n, spec.d, spec.L, spec.sigma)


def test_nu_n_is_n_times_pmax():
    spec, _ = two_class(100, p=0.3, q=0.1)
    assert spec.nu_n == pytest.approx(30.0)
    assert spec.p_max == 0.3


# ---------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------
def test_largest_remainder_rounding():
    spec = ModelSpec(n=10, d=1, L=3, B=np.full((3, 3), 0.1), pi=[0.33, 0.33, 0.34],
                     mu=[[0.0, 1.0, 2.0]], sigma=1.0)
    labels = assign_labels(spec)
    assert labels.n_ell.tolist() == [3, 3, 4]
    assert labels.y.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2, 2]
    assert [labels.class_of(i) for i in (0, 2, 3, 9)] == [0, 0, 1, 2]


def test_empty_cluster():
    spec = ModelSpec(n=5, d=1, L=3, B=np.full((3, 3), 0.1), pi=[0.9, 0.05, 0.05],
                     mu=[[0.0, 1.0, 2.0]], sigma=1.0)
    with pytest.raises(EmptyClusterError):
        assign_labels(spec)


def test_explicit_labels():
    labels = LabelAssignment.from_labels([1, 0, 1, 1], 2)
    assert labels.n_ell.tolist() == [1, 3]
    assert labels.members(1).tolist() == [0, 2, 3]
    np.testing.assert_array_equal(labels.class_sums(np.arange(4.0)[:, None]), [[1.0], [5.0]])


def test_mismatched_labels(small_model):
    spec, _ = small_model
    with pytest.raises(DimensionError):
        expected_adjacency(spec, assign_labels(spec.replace(n=9)))


# ---------------------------------------------------------------------
# block algebra
# ---------------------------------------------------------------------
def test_expected_adjacency_dense(three_class):
    spec, labels = three_class
    EA = expected_adjacency(spec, labels)
    P = spec.B[np.ix_(labels.y, labels.y)]
    np.testing.assert_allclose(EA.dense(), P - np.diag(np.diag(P)))
    np.testing.assert_allclose(EA.P.dense(), P)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 5])
def test_block_power_matches_dense(three_class, k):
    spec, labels = three_class
    EA = expected_adjacency(spec, labels)
    dense = np.linalg.matrix_power(EA.dense(), k)
    np.testing.assert_allclose(EA.power(k).dense(), dense, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(EA.power(k).row_norms()[labels.y], np.linalg.norm(dense, axis=1), rtol=1e-10)


def test_block_matvec_and_spectrum(three_class):
    spec, labels = three_class
    EA = expected_adjacency(spec, labels)
    X = np.random.default_rng(0).normal(size=(spec.n, 2))
    np.testing.assert_allclose(EA.matvec(X), EA.dense() @ X, atol=1e-12)
    expected = np.linalg.eigvalsh(EA.dense())
    got = EA.spectrum()
    assert np.max(np.abs(got)) == pytest.approx(np.max(np.abs(expected)))
    assert all(np.min(np.abs(expected - g)) < 1e-10 for g in got)


def test_block_rows_and_offdiag_norms(three_class):
    spec, labels = three_class
    M = expected_adjacency(spec, labels).power(2)
    dense = M.dense()
    for ell, i in enumerate(labels.anchors()):
        np.testing.assert_allclose(M.row(int(i)), dense[i])
        off = np.delete(dense[i], i)
        assert M.offdiag_row_norms()[ell] == pytest.approx(np.linalg.norm(off))


def test_block_shape_mismatch(three_class):
    _, labels = three_class
    with pytest.raises(DimensionError):
        BlockMatrix(labels, np.zeros((2, 2)), np.zeros(2))


def test_mixing_matrix_and_xi_bar():
    spec, labels = two_class(100, p=0.4, q=0.1)
    np.testing.assert_allclose(mixing_matrix(spec, labels), [[0.5, 0.125], [0.125, 0.5]])
    np.testing.assert_allclose(xi_bar(spec, labels, 2), spec.mu @ np.linalg.matrix_power(mixing_matrix(spec, labels), 2))


# ---------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------
def test_sample_graph_reproducible(three_class):
    spec, labels = three_class
    a = sample_graph(spec, labels, 5, trial=2)
    b = sample_graph(spec, labels, 5, trial=2)
    assert a.to_edge_list_text() == b.to_edge_list_text()
    assert a.to_edge_list_text() != sample_graph(spec, labels, 5, trial=3).to_edge_list_text()


def test_sample_graph_is_simple(three_class):
    spec, labels = three_class
    g = sample_graph(spec, labels, 1)
    A = g.dense()
    np.testing.assert_array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)
    np.testing.assert_array_equal(g.degrees(), A.sum(axis=1))
    assert SparseGraph.from_edge_list_text(g.to_edge_list_text(), spec.n).num_edges == g.num_edges


def test_edge_frequencies_match_B():
    spec, labels = two_class(60, p=0.3, q=0.05)
    total = np.zeros((60, 60))
    trials = 400
    for t in range(trials):
        total += sample_graph(spec, labels, 11, t).dense()
    freq = total / trials
    inside = freq[:30, :30][~np.eye(30, dtype=bool)].mean()
    across = freq[:30, 30:].mean()
    assert inside == pytest.approx(0.3, abs=0.01)
    assert across == pytest.approx(0.05, abs=0.01)


def test_complete_and_empty_blocks():
    spec = ModelSpec(n=6, d=1, L=2, B=[[1.0, 0.0], [0.0, 1.0]], pi=[0.5, 0.5], mu=[[1.0, -1.0]], sigma=0.0)
    g = sample_graph(spec, assign_labels(spec), 0)
    assert g.num_edges == 6


def test_zero_sigma_features_are_means(small_model):
    spec, labels = small_model
    spec = spec.replace(sigma=0.0)
    np.testing.assert_array_equal(sample_features(spec, labels, 3), feature_means(spec, labels))


@pytest.mark.parametrize("noise", ["gaussian", "rademacher", "uniform"])
def test_noise_moments(noise):
    spec, labels = two_class(20000, p=0.01, q=0.01, mu=(0.5, 0.5), sigma=1.5)
    spec = spec.replace(noise=noise)
    x = sample_features(spec, labels, 9)[:, 0]
    for a in (1, 2, 4):
        exact = float(noise_raw_moment(noise, np.array([0.5]), 1.5, a)[0])
        assert np.mean(x ** a) == pytest.approx(exact, rel=0.08)


@settings(max_examples=40, deadline=None)
@given(mean=st.floats(-3, 3), sigma=st.floats(0.0, 2.0))
def test_gaussian_second_moment(mean, sigma):
    value = float(noise_raw_moment("gaussian", np.array([mean]), sigma, 2)[0])
    assert value == pytest.approx(mean ** 2 + sigma ** 2, abs=1e-12)


# ---------------------------------------------------------------------
# assumptions
# ---------------------------------------------------------------------
def test_assumptions_identity_blocks():
    spec = ModelSpec(n=1_000_000, d=1, L=2, B=[[0.1, 0.0], [0.0, 0.1]], pi=[0.5, 0.5],
                     mu=[[1.0, -1.0]], sigma=1.0)
    report = check_assumptions(spec, assign_labels(spec))
    assert report.all_satisfied
    assert report.c_xi == pytest.approx(1.0)
    assert report.separation == pytest.approx(1.0)


def test_small_offdiagonal_fails_A1_with_infinite_delta():
    spec, labels = two_class(1000, p=0.1, q=0.02)
    report = check_assumptions(spec, labels)
    assert "A1" in report.failed()
    relaxed = check_assumptions(spec, labels, AssumptionConstants(delta=0.0, C_B=1.0))
    assert relaxed.checks["A1"].satisfied


def test_degenerate_means_fail_A5():
    spec, labels = two_class(1000, p=0.1, q=0.1, mu=(1.0, 1.0))
    report = check_assumptions(spec, labels)
    assert report.c_xi == 0.0
    assert not report.checks["A5"].satisfied


def test_dense_graph_fails_A2():
    spec, labels = two_class(100, p=0.95, q=0.95)
    assert not check_assumptions(spec, labels).checks["A2"].satisfied


def test_c_xi_decays_geometrically():
    spec, labels = two_class(1000, p=0.1, q=0.02, mu=(4.0, -4.0))
    seps = [check_assumptions(spec, labels, k=k).separation for k in range(1, 5)]
    ratios = [b / a for a, b in zip(seps, seps[1:])]
    assert ratios == pytest.approx([0.4] * 3)
    assert math.isclose(seps[0], 8.0 * 0.4)
