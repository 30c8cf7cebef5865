import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import sparse

from config import Guards, UniversalConstants
from csbm import expected_adjacency, sample_graph
from errors import ConfigError, DimensionError
from linalg import (
    adjacency_power_entries,
    aggregate_power,
    check_EAk_Pk,
    check_monomial_deviation,
    concentration_constant,
    concentration_rate,
    holds,
    mc_Ak_concentration,
    opnorm,
    power_difference_operator,
)

from conftest import two_class

MATRIX_DIMENSION = 6


# ---------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------
@pytest.mark.parametrize("k", [0, 1, 2, 4])
@pytest.mark.parametrize("threads", [1, 3])
def test_aggregate_power_matches_dense(three_class, k, threads):
    spec, labels = three_class
    g = sample_graph(spec, labels, 2)
    X = np.random.default_rng(1).normal(size=(spec.n, 5))
    expected = np.linalg.matrix_power(g.dense(), k) @ X
    np.testing.assert_allclose(aggregate_power(g, X, k, threads), expected, rtol=1e-10, atol=1e-10)


def test_aggregate_power_thread_independent_bytes(three_class):
    spec, labels = three_class
    g = sample_graph(spec, labels, 2)
    X = np.random.default_rng(1).normal(size=(spec.n, 7))
    assert aggregate_power(g, X, 3, 1).tobytes() == aggregate_power(g, X, 3, 4).tobytes()


def test_aggregate_power_operand_kinds(three_class):
    spec, labels = three_class
    g = sample_graph(spec, labels, 4)
    x = np.arange(spec.n, dtype=float)
    reference = aggregate_power(g, x, 2)
    assert reference.shape == (spec.n,)
    np.testing.assert_allclose(aggregate_power(g.dense(), x, 2), reference)
    np.testing.assert_allclose(aggregate_power(sparse.csr_matrix(g.dense()), x, 2), reference)


def test_aggregate_power_bad_input(three_class):
    spec, labels = three_class
    g = sample_graph(spec, labels, 0)
    with pytest.raises(DimensionError):
        aggregate_power(g, np.ones((spec.n + 1, 1)), 1)
    with pytest.raises(ConfigError):
        aggregate_power(g, np.ones(spec.n), -1)


def test_power_entries(three_class):
    spec, labels = three_class
    g = sample_graph(spec, labels, 6)
    dense3 = np.linalg.matrix_power(g.dense(), 3)
    np.testing.assert_allclose(adjacency_power_entries(g, 3, [0, 7, 29]), dense3[[0, 7, 29]])
    EA = expected_adjacency(spec, labels)
    np.testing.assert_allclose(adjacency_power_entries(EA, 2, [3]),
                               np.linalg.matrix_power(EA.dense(), 2)[[3]], atol=1e-14)


def test_power_difference_operator(three_class):
    spec, labels = three_class
    g = sample_graph(spec, labels, 3)
    EA = expected_adjacency(spec, labels)
    op = power_difference_operator(g, EA, 2)
    v = np.random.default_rng(0).normal(size=spec.n)
    expected = (np.linalg.matrix_power(g.dense(), 2) - np.linalg.matrix_power(EA.dense(), 2)) @ v
    np.testing.assert_allclose(op.matvec(v), expected, atol=1e-12)


# ---------------------------------------------------------------------
# operator norm
# ---------------------------------------------------------------------
def test_opnorm_block_is_exact(three_class):
    spec, labels = three_class
    EA = expected_adjacency(spec, labels).power(3)
    est = opnorm(EA)
    assert est.method == "block"
    assert est.value == pytest.approx(float(np.linalg.norm(EA.dense(), 2)), rel=1e-10)


def test_opnorm_arpack_matches_lapack():
    spec, labels = two_class(500, p=0.05, q=0.01)
    g = sample_graph(spec, labels, 8)
    arpack = opnorm(g, Guards(dense_cutoff=100))
    lapack = opnorm(g, Guards(dense_cutoff=1000))
    assert arpack.method == "eigsh" and lapack.method == "lapack"
    assert arpack.value == pytest.approx(lapack.value, rel=1e-6)


def test_opnorm_nonsymmetric_uses_singular_value():
    M = np.array([[0.0, 2.0], [0.0, 0.0]])
    assert opnorm(M).value == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(
    entries=arrays(np.float64, (MATRIX_DIMENSION, MATRIX_DIMENSION), elements=st.floats(-1.0, 1.0)),
    noise=arrays(np.float64, (MATRIX_DIMENSION, MATRIX_DIMENSION), elements=st.floats(-0.5, 0.5)),
    k=st.integers(1, 4),
)
def test_monomial_deviation_property(entries, noise, k):
    U = (entries + entries.T) / 2.0
    rec = check_monomial_deviation(U, U + noise, k)
    assert rec.satisfied
    assert rec.extra["satisfied_dev"] and rec.extra["satisfied_max"]


def test_monomial_deviation_equal_operands():
    U = np.diag([1.0, 2.0, 3.0])
    rec = check_monomial_deviation(U, U, 3)
    assert rec.lhs == 0.0 and rec.rhs == 0.0 and rec.satisfied


def test_monomial_deviation_k1_is_tight():
    U, V = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    rec = check_monomial_deviation(U, V, 1)
    assert rec.lhs == pytest.approx(rec.rhs)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_EAk_Pk(three_class, k):
    spec, labels = three_class
    rec = check_EAk_Pk(spec, labels, k)
    assert rec.satisfied
    assert rec.lhs == pytest.approx(rec.extra["dense_lhs"], rel=1e-9, abs=1e-12)


def test_holds_tolerance():
    assert holds(1.0, 1.0)
    assert holds(1.0 + 1e-12, 1.0)
    assert not holds(1.01, 1.0)


# ---------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------
def test_concentration_constant():
    u = UniversalConstants(C=3.0, c=1.0, c_nu_prime=1.0)
    assert concentration_constant(1, u) == pytest.approx(2.0 * (3.0 + math.sqrt(2.0)))
    assert concentration_constant(2, u) == pytest.approx(8.0 * (3.0 + math.sqrt(3.0)) ** 2)


@pytest.mark.slow
def test_mc_concentration_below_bound():
    records = []
    for n in (100, 200, 400):
        spec, labels = two_class(n, p=0.2, q=0.05)
        rec = mc_Ak_concentration(spec, labels, 2, 10, seed=5)
        assert rec.precondition
        assert rec.satisfied
        assert rec.ratio < concentration_constant(2, UniversalConstants())
        records.append(rec)
    assert math.isfinite(concentration_rate(records)["slope"])


def test_mc_concentration_thread_independent():
    spec, labels = two_class(60, p=0.3, q=0.1)
    a = mc_Ak_concentration(spec, labels, 2, 6, seed=1, threads=1)
    b = mc_Ak_concentration(spec, labels, 2, 6, seed=1, threads=3)
    assert a.values == b.values
