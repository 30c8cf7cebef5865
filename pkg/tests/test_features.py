import math

import numpy as np
import pytest

from csbm import expected_adjacency, feature_means, sample_features, sample_graph
from errors import ConfigError, DimensionError, NoSignalPairsError
from features import (
    TRIAL_COLUMNS,
    FeatureSet,
    build_feature_set,
    fit_linear_classifier,
    holdout_error,
    min_offdiagonal,
    misclassification,
    noise_split,
    pairwise_distances,
    population_centers,
    predict,
    sample_observed,
    signal_proxy,
    snr,
    trial_row,
)
from walks import expected_power

from conftest import two_class


# ---------------------------------------------------------------------
# observed set
# ---------------------------------------------------------------------
def test_observed_set_is_seeded():
    a = sample_observed(1000, 0.1, seed=7)
    assert a.size == 100
    assert np.all(np.diff(a) > 0)
    np.testing.assert_array_equal(a, sample_observed(1000, 0.1, seed=7))
    assert not np.array_equal(a, sample_observed(1000, 0.1, seed=7, trial=1))
    assert sample_observed(5, 0.01, seed=0).size == 1


@pytest.mark.parametrize("fraction", [0.0, -0.5, 1.5])
def test_observed_fraction_range(fraction):
    with pytest.raises(ConfigError):
        sample_observed(100, fraction, seed=0)


def test_feature_set_shapes(small_model):
    spec, labels = small_model
    X = np.zeros((spec.n, 1))
    with pytest.raises(DimensionError):
        FeatureSet(X, np.zeros((spec.n, 2)), labels.y, np.array([0]), 1)
    with pytest.raises(ConfigError):
        FeatureSet(X, X, labels.y, np.array([], dtype=np.int64), 1)
    fs = FeatureSet(X, X, labels.y, np.array([3, 1, 3]), 1)
    np.testing.assert_array_equal(fs.observed, [1, 3])
    assert fs.holdout.size == spec.n - 2


# ---------------------------------------------------------------------
# centers and signal
# ---------------------------------------------------------------------
def test_depth_zero_centers_are_means(three_class):
    spec, labels = three_class
    np.testing.assert_allclose(population_centers(spec, labels, 0), spec.mu)


def test_depth_one_centers(three_class):
    spec, labels = three_class
    P = expected_adjacency(spec, labels).dense()
    M = feature_means(spec, labels)
    centers = population_centers(spec, labels, 1)
    for ell in range(spec.L):
        rows = P[labels.members(ell)] @ M
        np.testing.assert_allclose(centers[:, ell], rows.mean(axis=0), rtol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_signal_proxy_scaling(three_class, k):
    spec, labels = three_class
    proxy = signal_proxy(spec, labels, k)
    np.testing.assert_allclose(proxy.xi_bar * spec.nu_n ** k, proxy.xi, rtol=1e-12)
    assert proxy.S_tilde.shape == (spec.L, spec.L)
    np.testing.assert_allclose(np.diag(proxy.S_tilde), 0.0)


def test_pairwise_distances():
    S = pairwise_distances(np.array([[0.0, 3.0], [0.0, 4.0]]))
    np.testing.assert_allclose(S, [[0.0, 5.0], [5.0, 0.0]])
    assert min_offdiagonal(S) == 5.0
    with pytest.raises(NoSignalPairsError):
        min_offdiagonal(np.zeros((1, 1)))


# ---------------------------------------------------------------------
# SNR and noise split
# ---------------------------------------------------------------------
def test_snr_zero_on_expected_graph():
    spec, labels = two_class(40, sigma=0.0)
    P = expected_adjacency(spec, labels).dense()
    X = sample_features(spec, labels, 0)
    report = snr(spec, labels, P, X, 1)
    assert report.dev == pytest.approx(0.0, abs=1e-12)
    assert report.rho == pytest.approx(0.0, abs=1e-12)
    assert report.S_min > 0.0


@pytest.mark.parametrize("k", [1, 2])
def test_snr_on_sampled_graph(three_class, k):
    spec, labels = three_class
    A = sample_graph(spec, labels, 11)
    X = sample_features(spec, labels, 11)
    E = expected_power(spec, labels, k)
    report = snr(spec, labels, A, X, k, E)
    phi = np.linalg.matrix_power(A.dense(), k) @ X
    mean_phi = E.dense() @ feature_means(spec, labels)
    dev = math.sqrt(float(np.mean(np.sum((phi - mean_phi) ** 2, axis=1))))
    assert report.dev == pytest.approx(dev, rel=1e-10)
    assert report.rho == pytest.approx(report.dev / report.S_min)
    assert report.rho_times_sqrt_nu == pytest.approx(report.rho * math.sqrt(spec.nu_n))

    split = noise_split(spec, labels, A, X, k, E)
    assert split.to_dict()["dev"] == pytest.approx(report.dev, rel=1e-10)


def test_trial_row_columns(small_model):
    spec, labels = small_model
    A = sample_graph(spec, labels, 1)
    X = sample_features(spec, labels, 1)
    report = snr(spec, labels, A, X, 1)
    row = trial_row(1, spec, report, 0.25, 0.1, "v0", "abc")
    assert tuple(row) == TRIAL_COLUMNS
    assert row["misclass_rate"] == 0.25


# ---------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------
def _separated(n=60):
    rng = np.random.default_rng(4)
    y = np.arange(n) % 3
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    X = centers[y] + rng.normal(scale=0.5, size=(n, 2))
    return FeatureSet(X, X, y, np.arange(0, n, 2), 0)


def test_classifier_separates_clusters():
    fs = _separated()
    assert holdout_error(fs) == 0.0
    clf = fit_linear_classifier(fs)
    assert clf.classes == 3
    np.testing.assert_array_equal(predict(clf, fs.phi_k), fs.y)


def test_classifier_needs_every_class():
    fs = _separated()
    only = FeatureSet(fs.X, fs.phi_k, fs.y, np.array([0, 3, 6]), 0)
    with pytest.raises(ConfigError):
        fit_linear_classifier(only)


def test_misclassification():
    pred = np.array([0, 1, 1, 0])
    truth = np.array([0, 1, 0, 0])
    assert misclassification(pred, truth) == 0.25
    assert misclassification(pred, truth, np.array([2])) == 1.0
    with pytest.raises(ConfigError):
        misclassification(pred, truth, np.array([], dtype=np.int64))
    with pytest.raises(DimensionError):
        misclassification(pred, truth[:3])


def test_build_feature_set(three_class):
    spec, labels = three_class
    A = sample_graph(spec, labels, 5)
    X = sample_features(spec, labels, 5)
    fs = build_feature_set(A, X, labels, 2, 0.2, seed=5)
    np.testing.assert_allclose(fs.phi_k, A.dense() @ A.dense() @ X, atol=1e-12)
    assert fs.observed.size == 6
    with pytest.raises(DimensionError):
        build_feature_set(A, X[:-1], labels, 1)
