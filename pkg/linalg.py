"""
Adjacency Powers and Operator Norms

Flow:
  1. aggregate_power          - phi = A^k X as k successive SpMMs (A^k never formed)
  2. adjacency_power_entries  - selected rows of M^k via basis-vector products
  3. opnorm                   - spectral norm: exact L x L reduction for block
                                matrices, LAPACK for small dense, ARPACK above
  4. perturbation checks      - ||U^k - V^k||, ||E[A]^k - P^k||, Monte Carlo
                                E||A^k - E[A]^k|| against C_k nu^(k - 1/2)

Operands may be a SparseGraph, a scipy sparse matrix, a dense array or a
BlockMatrix; all of them are reduced to a "step" (X -> M X) here.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, aslinearoperator, eigsh, svds

from config import DEFAULT_CONFIG, Guards, LabConfig, UniversalConstants
from csbm import BlockMatrix, LabelAssignment, ModelSpec, SparseGraph, expected_adjacency, sample_graph
from errors import ConfigError, DimensionError
from montecarlo import loglog_slope, mean_se, run_trials

log = logging.getLogger(__name__)

CHECK_RTOL = 1e-9


# =============================================================================
# SECTION 1: OPERANDS
# =============================================================================

def _order(M: Any) -> int:
    if isinstance(M, (SparseGraph, BlockMatrix)):
        return M.n
    shape = M.shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionError(f"expected a square operator, got shape {shape}")
    return int(shape[0])


def _step(M: Any, transpose: bool = False) -> Callable[[np.ndarray], np.ndarray]:
    """X -> M X (or M^T X) for every supported operand kind."""
    if isinstance(M, SparseGraph):
        adj = M.adjacency
        return lambda X: adj @ X
    if isinstance(M, BlockMatrix):
        if transpose:
            M = BlockMatrix(M.labels, M.C.T, M.c, source=M.source)
        return M.matvec
    if isinstance(M, LinearOperator):
        op = M.H if transpose else M
        return lambda X: op.matmat(X) if X.ndim == 2 else op.matvec(X)
    if sparse.issparse(M):
        csr = sparse.csr_array(M.T if transpose else M)
        return lambda X: csr @ X
    dense = np.asarray(M, dtype=float)
    if transpose:
        dense = dense.T
    return lambda X: dense @ X


def as_operator(M: Any) -> LinearOperator:
    if isinstance(M, LinearOperator):
        return M
    if isinstance(M, SparseGraph):
        return aslinearoperator(M.adjacency)
    if isinstance(M, BlockMatrix):
        fwd, back = _step(M), _step(M, transpose=True)
        return LinearOperator(M.shape, matvec=fwd, rmatvec=back, matmat=fwd, dtype=float)
    if sparse.issparse(M):
        return aslinearoperator(sparse.csr_array(M))
    return aslinearoperator(np.asarray(M, dtype=float))


def as_dense(M: Any) -> np.ndarray:
    if isinstance(M, (SparseGraph, BlockMatrix)):
        return M.dense()
    if isinstance(M, LinearOperator):
        return M @ np.eye(M.shape[1])
    if sparse.issparse(M):
        return M.toarray().astype(float)
    return np.asarray(M, dtype=float)


# =============================================================================
# SECTION 2: POWERS
# =============================================================================

def aggregate_power(A: Any, X: Any, k: int, threads: int = 1) -> np.ndarray:
    """
    phi^(k) = A^k X by k successive sparse-times-dense products.

    Columns are split into blocks handled on the thread pool. Each column's
    arithmetic is the same whatever the block width, so the result does not
    depend on the thread count for sparse operands.
    """
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    n = _order(A)
    X = np.asarray(X, dtype=float)
    flat = X.ndim == 1
    X2 = X.reshape(X.shape[0], -1)
    if X2.shape[0] != n:
        raise DimensionError(f"X has {X2.shape[0]} rows, operator is {n}x{n}")
    if k == 0:
        return X.copy()

    step = _step(A)

    def run(block: np.ndarray) -> np.ndarray:
        cur = block
        for _ in range(k):
            cur = np.asarray(step(cur), dtype=float)
        return cur

    width = X2.shape[1]
    if threads <= 1 or width <= 1:
        out = run(X2)
    else:
        cols = np.array_split(np.arange(width), min(threads, width))
        parts = run_trials(lambda b: run(np.ascontiguousarray(X2[:, cols[b]])), len(cols), threads)
        out = np.hstack(parts)
    return out.ravel() if flat else out


def adjacency_power_entries(M: Any, k: int, rows: Sequence[int]) -> np.ndarray:
    """Rows (M^k)[rows, :] as a len(rows) x n array."""
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    if rows.size == 0:
        raise ConfigError("adjacency_power_entries needs at least one row")
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    n = _order(M)
    if rows.min() < 0 or rows.max() >= n:
        raise DimensionError(f"row index out of range for an {n}x{n} operator")

    if isinstance(M, BlockMatrix):
        Mk = M.power(k)
        return np.vstack([Mk.row(int(i)) for i in rows])

    basis = np.zeros((n, rows.size))
    basis[rows, np.arange(rows.size)] = 1.0
    # (M^k)^T e_i is row i of M^k
    step = _step(M, transpose=True)
    cur = basis
    for _ in range(k):
        cur = np.asarray(step(cur), dtype=float)
    return cur.T.copy()


def power_difference_operator(M1: Any, M2: Any, k: int) -> LinearOperator:
    """v -> M1^k v - M2^k v without forming either power."""
    n = _order(M1)
    if _order(M2) != n:
        raise DimensionError(f"operands are {n}x{n} and {_order(M2)}x{_order(M2)}")
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    f1, f2 = _step(M1), _step(M2)
    b1, b2 = _step(M1, transpose=True), _step(M2, transpose=True)

    def apply(first: Callable, second: Callable, v: np.ndarray) -> np.ndarray:
        a, b = v, v
        for _ in range(k):
            a, b = first(a), second(b)
        return np.asarray(a, dtype=float) - np.asarray(b, dtype=float)

    return LinearOperator(
        (n, n),
        matvec=lambda v: apply(f1, f2, v),
        rmatvec=lambda v: apply(b1, b2, v),
        matmat=lambda V: apply(f1, f2, V),
        dtype=float,
    )


# =============================================================================
# SECTION 3: OPERATOR NORM
# =============================================================================

@dataclass(frozen=True)
class OpNormEstimate:
    value: float
    iterations: int
    residual: float
    converged: bool = True
    method: str = "exact"


class _CountingOperator(LinearOperator):
    def __init__(self, inner: LinearOperator):
        super().__init__(dtype=float, shape=inner.shape)
        self.inner = inner
        self.calls = 0

    def _matvec(self, v):
        self.calls += 1
        return self.inner.matvec(v)

    def _rmatvec(self, v):
        self.calls += 1
        return self.inner.rmatvec(v)


def _is_symmetric(M: Any) -> bool:
    if isinstance(M, SparseGraph):
        return True
    if isinstance(M, BlockMatrix):
        return M.is_symmetric()
    if isinstance(M, LinearOperator):
        return bool(getattr(M, "symmetric", True))
    if sparse.issparse(M):
        diff = sparse.csr_array(M) - sparse.csr_array(M).T
        return diff.count_nonzero() == 0 or float(abs(diff).max()) == 0.0
    dense = np.asarray(M, dtype=float)
    return bool(np.allclose(dense, dense.T, rtol=1e-13, atol=0.0))


def opnorm(M: Any, guards: Optional[Guards] = None, symmetric: Optional[bool] = None) -> OpNormEstimate:
    """
    Spectral norm ||M||.

    Symmetric BlockMatrix: exact, from the L x L reduction plus the
    class-diagonal eigenvalues. Up to guards.dense_cutoff: LAPACK. Beyond:
    ARPACK (eigsh / svds) with a deterministic start vector; a run that does
    not converge comes back flagged with its residual.
    """
    guards = guards or DEFAULT_CONFIG.guards
    sym = _is_symmetric(M) if symmetric is None else symmetric
    n = _order(M)

    if isinstance(M, BlockMatrix) and sym:
        return OpNormEstimate(float(np.max(np.abs(M.spectrum()))), 0, 0.0, True, "block")

    if n <= guards.dense_cutoff:
        dense = as_dense(M)
        if sym:
            value = float(np.max(np.abs(np.linalg.eigvalsh(dense)))) if n else 0.0
        else:
            value = float(np.linalg.norm(dense, 2)) if n else 0.0
        return OpNormEstimate(value, 0, 0.0, True, "lapack")

    op = _CountingOperator(as_operator(M))
    v0 = np.ones(n) / math.sqrt(n)
    failed = False
    try:
        if sym:
            vals, vecs = eigsh(op, k=1, which="LM", tol=guards.opnorm_tol,
                               maxiter=guards.opnorm_max_iter, v0=v0)
            lam, vec = float(vals[0]), vecs[:, 0]
            value = abs(lam)
            resid_vec = op.inner.matvec(vec) - lam * vec
        else:
            u, s, vt = svds(op, k=1, tol=guards.opnorm_tol, maxiter=guards.opnorm_max_iter, v0=v0)
            value = float(s[0])
            resid_vec = op.inner.matvec(vt[0]) - value * u[:, 0]
    except ArpackNoConvergence as e:
        failed = True
        vals = np.asarray(e.eigenvalues)
        value = float(np.max(np.abs(vals))) if vals.size else float("nan")
        resid_vec = np.array([np.inf])
        log.warning("ARPACK did not converge after %d products (n=%d)", op.calls, n)

    residual = float(np.linalg.norm(resid_vec) / value) if value > 0 else 0.0
    converged = (not failed) and residual <= guards.opnorm_tol
    return OpNormEstimate(value, op.calls, residual, converged, "eigsh" if sym else "svds")


# =============================================================================
# SECTION 4: PERTURBATION CHECKS
# =============================================================================

@dataclass(frozen=True)
class InequalityRecord:
    name: str
    lhs: float
    rhs: float
    margin: float
    satisfied: bool
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "satisfied": self.satisfied, **self.extra}


def holds(lhs: float, rhs: float, rtol: float = CHECK_RTOL) -> bool:
    return lhs <= rhs + rtol * max(abs(rhs), 1.0)


def check_monomial_deviation(U: Any, V: Any, k: int, guards: Optional[Guards] = None) -> InequalityRecord:
    """||U^k - V^k|| against k 2^(k-2) ||U-V|| (||U-V||^(k-1) + ||V||^(k-1)) and k ||U-V|| max(||U||,||V||)^(k-1)."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    n = _order(U)
    if _order(V) != n:
        raise DimensionError(f"U is {n}x{n}, V is {_order(V)}x{_order(V)}")
    guards = guards or DEFAULT_CONFIG.guards

    if n <= guards.dense_cutoff:
        Ud, Vd = as_dense(U), as_dense(V)
        norm = lambda X: float(np.linalg.norm(X, 2)) if X.size else 0.0
        diff = norm(Ud - Vd)
        nu, nv = norm(Ud), norm(Vd)
        lhs = norm(np.linalg.matrix_power(Ud, k) - np.linalg.matrix_power(Vd, k))
    else:
        opU, opV = as_operator(U), as_operator(V)
        diff = opnorm(opU - opV, guards, symmetric=False).value
        nu = opnorm(opU, guards, symmetric=False).value
        nv = opnorm(opV, guards, symmetric=False).value
        lhs = opnorm(power_difference_operator(U, V, k), guards, symmetric=False).value

    rhs_dev = k * 2.0 ** (k - 2) * diff * (diff ** (k - 1) + nv ** (k - 1))
    rhs_max = k * diff * max(nu, nv) ** (k - 1)
    ok_dev, ok_max = holds(lhs, rhs_dev), holds(lhs, rhs_max)
    rhs = min(rhs_dev, rhs_max)
    return InequalityRecord(
        "monomial-deviation", lhs, rhs, rhs - lhs, ok_dev and ok_max,
        {"k": k, "norm_diff": diff, "norm_U": nu, "norm_V": nv,
         "rhs_dev": rhs_dev, "rhs_max": rhs_max, "satisfied_dev": ok_dev, "satisfied_max": ok_max},
    )


def check_EAk_Pk(spec: ModelSpec, labels: LabelAssignment, k: int,
                 guards: Optional[Guards] = None) -> InequalityRecord:
    """||E[A]^k - P^k|| <= k nu^k / n, both sides exact through the block algebra."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    guards = guards or DEFAULT_CONFIG.guards
    EA = expected_adjacency(spec, labels)
    D = EA.power(k) - EA.P.power(k)
    lhs = opnorm(D, guards).value
    rhs = k * spec.nu_n ** k / spec.n
    extra: Dict[str, Any] = {"k": k, "n": spec.n, "nu_n": spec.nu_n}
    if spec.n <= 300:
        extra["dense_lhs"] = float(np.max(np.abs(np.linalg.eigvalsh(D.dense()))))
    return InequalityRecord("EAk-Pk", lhs, rhs, rhs - lhs, holds(lhs, rhs), extra)


def concentration_constant(k: int, universal: UniversalConstants) -> float:
    """C_k = k 2^k (C + sqrt((c / c'_nu)(k + 1)))^k."""
    u = universal
    return k * 2.0 ** k * (u.C + math.sqrt((u.c / u.c_nu_prime) * (k + 1))) ** k


@dataclass(frozen=True)
class ConcentrationRecord:
    n: int
    k: int
    nu_n: float
    trials: int
    estimate: float
    stderr: float
    bound: float
    ratio: float
    precondition: bool
    satisfied: bool
    values: List[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "k": self.k, "nu_n": self.nu_n, "trials": self.trials,
                "estimate": self.estimate, "stderr": self.stderr, "bound": self.bound,
                "ratio": self.ratio, "precondition": self.precondition, "satisfied": self.satisfied}


def mc_Ak_concentration(
    spec: ModelSpec,
    labels: LabelAssignment,
    k: int,
    trials: int,
    seed: int,
    threads: int = 1,
    config: Optional[LabConfig] = None,
) -> ConcentrationRecord:
    """Monte Carlo E||A^k - E[A]^k|| over independent graphs."""
    if k < 1 or trials < 1:
        raise ConfigError(f"need k >= 1 and trials >= 1, got k={k}, trials={trials}")
    config = config or DEFAULT_CONFIG
    guards = config.guards
    EA = expected_adjacency(spec, labels)
    EAk_dense = EA.power(k).dense() if spec.n <= guards.dense_cutoff else None

    def one(trial: int) -> float:
        A = sample_graph(spec, labels, seed, trial)
        if EAk_dense is not None:
            D = np.linalg.matrix_power(A.dense(), k) - EAk_dense
            return float(np.max(np.abs(np.linalg.eigvalsh(D))))
        est = opnorm(power_difference_operator(A, EA, k), guards, symmetric=True)
        if not est.converged:
            log.warning("trial %d: norm estimate flagged (residual %.2e)", trial, est.residual)
        return est.value

    values = run_trials(one, trials, threads)
    estimate, se = mean_se(values)
    nu = spec.nu_n
    scale = nu ** (k - 0.5) if nu > 0 else 1.0
    bound = concentration_constant(k, config.universal) * scale
    precondition = nu >= config.universal.c_nu_prime * math.log(spec.n)
    log.debug("n=%d k=%d: E||A^k - E[A]^k|| = %.4g +- %.2g", spec.n, k, estimate, se)
    return ConcentrationRecord(
        n=spec.n, k=k, nu_n=nu, trials=trials, estimate=estimate, stderr=se,
        bound=bound, ratio=estimate / scale, precondition=precondition,
        satisfied=estimate <= bound, values=list(values),
    )


def concentration_rate(records: Sequence[ConcentrationRecord]) -> Dict[str, float]:
    """Slope of log(ratio) against log(n); near 0 when the nu^(k - 1/2) rate is right."""
    return loglog_slope([r.n for r in records], [r.ratio for r in records])
