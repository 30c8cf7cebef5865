"""
Contextual Stochastic Block Model

Flow:
  1. ModelSpec            - n, d, L, B, pi, mu, sigma, k (+ noise sampler name)
  2. assign_labels        - deterministic contiguous labels from pi (largest remainder)
  3. expected_adjacency   - E[A] = P - diag(P), P = Z B Z^T, kept as an L x L BlockMatrix
  4. sample_graph         - independent Bernoulli(B[y_i, y_j]) per unordered pair i < j
  5. sample_features      - x_i = mu[:, y_i] + noise, noise stream independent of the graph
  6. check_assumptions    - A1..A5 with explicit constants and binding margins

Classes are 0-indexed (0..L-1). Derived quantities (Pi, xi_bar, c_xi) use
the realized class proportions n_l / n.

Files: a ModelSpec reads from TOML or JSON with keys n, d, L, B (row-major),
pi, mu (list of L columns, each of length d), sigma, k and optional noise.
"""

import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import sparse

from config import DEFAULT_CONFIG, AssumptionConstants, check_keys, read_document
from errors import ConfigError, ConsistencyError, DimensionError, EmptyClusterError
from montecarlo import stream

log = logging.getLogger(__name__)

NOISE_SAMPLERS = ("gaussian", "rademacher", "uniform")
MODEL_KEYS = ("n", "d", "L", "B", "pi", "mu", "sigma", "k", "noise")
SPEC_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


# =============================================================================
# SECTION 1: MODEL SPEC
# =============================================================================

@dataclass(frozen=True, eq=False)
class ModelSpec:
    n: int
    d: int
    L: int
    B: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    sigma: float
    k: int = 1
    noise: str = "gaussian"

    def __post_init__(self):
        for name in ("n", "d", "L"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if int(self.k) != self.k or self.k < 0:
            raise ConfigError(f"k must be a non-negative integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

        B = np.array(self.B, dtype=float)
        if B.shape != (self.L, self.L):
            raise ConfigError(f"B must be {self.L}x{self.L}, got shape {B.shape}")
        if not np.all(np.isfinite(B)) or B.min() < 0.0 or B.max() > 1.0:
            raise ConfigError("B entries must lie in [0, 1]")
        if np.max(np.abs(B - B.T)) > SPEC_TOL:
            raise ConfigError("B must be symmetric")
        object.__setattr__(self, "B", _frozen(B))

        pi = np.array(self.pi, dtype=float).reshape(-1)
        if pi.shape != (self.L,):
            raise ConfigError(f"pi must have {self.L} entries, got {pi.size}")
        if np.any(pi <= 0.0) or abs(pi.sum() - 1.0) > SPEC_TOL:
            raise ConfigError(f"pi must be positive and sum to 1, got {pi.tolist()}")
        object.__setattr__(self, "pi", _frozen(pi))

        mu = np.array(self.mu, dtype=float)
        if mu.ndim == 1 and self.d == 1:
            mu = mu.reshape(1, -1)
        if mu.shape != (self.d, self.L):
            raise ConfigError(f"mu must be {self.d}x{self.L} (d x L), got shape {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise ConfigError("mu must be finite")
        object.__setattr__(self, "mu", _frozen(mu))

        if not math.isfinite(self.sigma) or self.sigma < 0.0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma!r}")
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.noise not in NOISE_SAMPLERS:
            raise ConfigError(f"noise must be one of {NOISE_SAMPLERS}, got {self.noise!r}")

    @property
    def p_max(self) -> float:
        return float(self.B.max())

    @property
    def nu_n(self) -> float:
        return self.n * self.p_max

    def replace(self, **changes: Any) -> "ModelSpec":
        data = {name: getattr(self, name) for name in MODEL_KEYS}
        data.update(changes)
        return ModelSpec(**data)

    @classmethod
    def two_class(cls, n: int, p: float, q: float, mu: Any, sigma: float, k: int = 1,
                  pi: Tuple[float, float] = (0.5, 0.5), noise: str = "gaussian") -> "ModelSpec":
        """The (p, q) model: p within classes, q across."""
        mu = np.asarray(mu, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(1, -1)
        return cls(n=n, d=mu.shape[0], L=2, B=[[p, q], [q, p]], pi=pi, mu=mu,
                   sigma=sigma, k=k, noise=noise)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "d": self.d,
            "L": self.L,
            "B": self.B.tolist(),
            "pi": self.pi.tolist(),
            "mu": self.mu.T.tolist(),
            "sigma": self.sigma,
            "k": self.k,
            "noise": self.noise,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        check_keys(data, MODEL_KEYS, "model")
        missing = [key for key in MODEL_KEYS[:-1] if key not in data]
        if missing:
            raise ConfigError(f"model: missing key(s) {missing}")
        try:
            columns = np.asarray(data["mu"], dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"model.mu: {e}") from e
        if columns.ndim != 2:
            raise ConfigError("model.mu must be a list of L columns")
        return cls(n=data["n"], d=data["d"], L=data["L"], B=data["B"], pi=data["pi"],
                   mu=columns.T, sigma=float(data["sigma"]), k=data["k"],
                   noise=data.get("noise", "gaussian"))


def load_model_spec(path: Any) -> ModelSpec:
    return ModelSpec.from_dict(read_document(path))


def save_model_spec(spec: ModelSpec, path: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# =============================================================================
# SECTION 2: LABELS
# =============================================================================

@dataclass(frozen=True, eq=False)
class LabelAssignment:
    """
    Class labels. Built from per-class counts (contiguous blocks, nothing of
    size n is materialized until asked for) or from an explicit label vector.
    """
    n_ell: np.ndarray
    explicit_y: Optional[np.ndarray] = None

    def __post_init__(self):
        counts = np.array(self.n_ell, dtype=np.int64).reshape(-1)
        if counts.size == 0 or np.any(counts < 0):
            raise ConfigError(f"invalid class counts {counts.tolist()}")
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise EmptyClusterError(f"empty cluster: class(es) {empty.tolist()} have no nodes")
        object.__setattr__(self, "n_ell", _frozen(counts))
        if self.explicit_y is not None:
            y = np.array(self.explicit_y, dtype=np.int64)
            if y.shape != (int(counts.sum()),):
                raise DimensionError("label vector length does not match class counts")
            object.__setattr__(self, "explicit_y", _frozen(y))

    @classmethod
    def from_labels(cls, y: Any, L: int) -> "LabelAssignment":
        y = np.asarray(y, dtype=np.int64)
        if y.ndim != 1 or y.size == 0:
            raise ConfigError("labels must be a non-empty vector")
        if y.min() < 0 or y.max() >= L:
            raise ConfigError(f"labels must lie in 0..{L - 1}")
        return cls(np.bincount(y, minlength=L), y)

    @property
    def n(self) -> int:
        return int(self.n_ell.sum())

    @property
    def L(self) -> int:
        return int(self.n_ell.size)

    @property
    def contiguous(self) -> bool:
        return self.explicit_y is None

    @cached_property
    def offsets(self) -> np.ndarray:
        return _frozen(np.concatenate(([0], np.cumsum(self.n_ell))))

    @cached_property
    def y(self) -> np.ndarray:
        if self.explicit_y is not None:
            return self.explicit_y
        return _frozen(np.repeat(np.arange(self.L, dtype=np.int64), self.n_ell))

    @cached_property
    def Z(self) -> np.ndarray:
        Z = np.zeros((self.n, self.L), dtype=np.int8)
        Z[np.arange(self.n), self.y] = 1
        return _frozen(Z)

    @property
    def proportions(self) -> np.ndarray:
        return self.n_ell / self.n

    def class_of(self, i: int) -> int:
        if self.explicit_y is not None:
            return int(self.explicit_y[i])
        return int(np.searchsorted(self.offsets, i, side="right") - 1)

    def members(self, ell: int) -> np.ndarray:
        if self.contiguous:
            return np.arange(self.offsets[ell], self.offsets[ell + 1], dtype=np.int64)
        return np.flatnonzero(self.y == ell)

    def anchors(self) -> np.ndarray:
        """One representative node per class."""
        return np.array([self.members(ell)[0] for ell in range(self.L)], dtype=np.int64)

    def class_sums(self, X: np.ndarray) -> np.ndarray:
        """Z^T X."""
        X = np.asarray(X, dtype=float)
        if self.contiguous and X.ndim == 2:
            return np.add.reduceat(X, self.offsets[:-1], axis=0)
        out = np.zeros((self.L,) + X.shape[1:])
        np.add.at(out, self.y, X)
        return out


def assign_labels(spec: ModelSpec) -> LabelAssignment:
    """Largest-remainder rounding of pi * n, ties to the lower class index."""
    raw = spec.pi * spec.n
    counts = np.floor(raw).astype(np.int64)
    short = spec.n - int(counts.sum())
    order = sorted(range(spec.L), key=lambda ell: (-(raw[ell] - counts[ell]), ell))
    for ell in order[:short]:
        counts[ell] += 1
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise EmptyClusterError(f"empty cluster: class(es) {empty} get no nodes at n={spec.n}")
    return LabelAssignment(counts)


def check_consistent(spec: ModelSpec, labels: LabelAssignment) -> None:
    if labels.n != spec.n or labels.L != spec.L:
        raise DimensionError(
            f"labels (n={labels.n}, L={labels.L}) do not match model (n={spec.n}, L={spec.L})")


# =============================================================================
# SECTION 3: BLOCK MATRICES  (P, E[A], E[A^k])
# =============================================================================

@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """
    The n x n matrix Z C Z^T + diag(c[y]).

    Entry (i, j) is C[y_i, y_j] off the diagonal and C[y_i, y_i] + c[y_i] on
    it. The family is closed under +, - and @, so powers of P and E[A] stay
    L x L. tree_diag optionally carries the part of the diagonal contributed
    by closed walks whose graph is a tree.
    """
    labels: LabelAssignment
    C: np.ndarray
    c: np.ndarray
    tree_diag: Optional[np.ndarray] = None
    source: str = "block"

    def __post_init__(self):
        L = self.labels.L
        C = np.array(self.C, dtype=float)
        c = np.array(self.c, dtype=float).reshape(-1)
        if C.shape != (L, L) or c.shape != (L,):
            raise DimensionError(f"block tables must be {L}x{L} and {L}, got {C.shape} and {c.shape}")
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "c", _frozen(c))
        if self.tree_diag is not None:
            object.__setattr__(self, "tree_diag", _frozen(np.array(self.tree_diag, dtype=float)))

    @classmethod
    def from_tables(cls, labels: LabelAssignment, off: np.ndarray, diag: np.ndarray,
                    **kwargs: Any) -> "BlockMatrix":
        off = np.asarray(off, dtype=float)
        return cls(labels, off, np.asarray(diag, dtype=float) - np.diagonal(off), **kwargs)

    @classmethod
    def identity(cls, labels: LabelAssignment) -> "BlockMatrix":
        return cls(labels, np.zeros((labels.L, labels.L)), np.ones(labels.L), source="I")

    @property
    def n(self) -> int:
        return self.labels.n

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.n)

    @property
    def off(self) -> np.ndarray:
        return self.C

    @property
    def diag(self) -> np.ndarray:
        return np.diagonal(self.C) + self.c

    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.C, self.C.T, rtol=1e-12, atol=0.0))

    def entry(self, i: int, j: int) -> float:
        a, b = self.labels.class_of(i), self.labels.class_of(j)
        return float(self.C[a, a] + self.c[a]) if i == j else float(self.C[a, b])

    def row(self, i: int) -> np.ndarray:
        a = self.labels.class_of(i)
        out = self.C[a][self.labels.y].astype(float)
        out[i] += self.c[a]
        return out

    def dense(self) -> np.ndarray:
        y = self.labels.y
        out = self.C[np.ix_(y, y)].astype(float)
        out[np.diag_indices_from(out)] += self.c[y]
        return out

    def matvec(self, X: Any) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        flat = X.ndim == 1
        X2 = X.reshape(X.shape[0], -1)
        if X2.shape[0] != self.n:
            raise DimensionError(f"operand has {X2.shape[0]} rows, matrix is {self.n}x{self.n}")
        sums = self.labels.class_sums(X2)
        y = self.labels.y
        out = (self.C @ sums)[y] + self.c[y][:, None] * X2
        return out.ravel() if flat else out

    def _same_labels(self, other: "BlockMatrix") -> None:
        if other.labels is not self.labels and not np.array_equal(other.labels.n_ell, self.labels.n_ell):
            raise DimensionError("block matrices over different label assignments")

    def __matmul__(self, other: Any) -> Any:
        if isinstance(other, BlockMatrix):
            self._same_labels(other)
            N = self.labels.n_ell.astype(float)
            C = (self.C * N[None, :]) @ other.C + self.C * other.c[None, :] + self.c[:, None] * other.C
            return BlockMatrix(self.labels, C, self.c * other.c, source="product")
        return self.matvec(other)

    def __add__(self, other: "BlockMatrix") -> "BlockMatrix":
        self._same_labels(other)
        return BlockMatrix(self.labels, self.C + other.C, self.c + other.c, source="sum")

    def __sub__(self, other: "BlockMatrix") -> "BlockMatrix":
        self._same_labels(other)
        return BlockMatrix(self.labels, self.C - other.C, self.c - other.c, source="difference")

    def __mul__(self, scalar: float) -> "BlockMatrix":
        return BlockMatrix(self.labels, self.C * scalar, self.c * scalar, source=self.source)

    __rmul__ = __mul__

    def power(self, k: int) -> "BlockMatrix":
        if k < 0:
            raise ConfigError(f"power must be >= 0, got {k}")
        out = BlockMatrix.identity(self.labels)
        for _ in range(k):
            out = out @ self
        return out

    def reduced(self) -> np.ndarray:
        """diag(sqrt n_l) C diag(sqrt n_l) + diag(c): carries the non-trivial spectrum."""
        root = np.sqrt(self.labels.n_ell.astype(float))
        return root[:, None] * self.C * root[None, :] + np.diag(self.c)

    def spectrum(self) -> np.ndarray:
        """All distinct eigenvalues (symmetric case): the reduced ones plus c_l for classes of size >= 2."""
        if not self.is_symmetric():
            raise ConsistencyError("spectrum() needs a symmetric block matrix")
        eig = np.linalg.eigvalsh(self.reduced())
        extra = self.c[self.labels.n_ell >= 2]
        return np.concatenate((eig, extra))

    def class_row_sums(self) -> np.ndarray:
        """R[l, l'] = sum over j in class l' of M[i, j], for any i in class l."""
        N = self.labels.n_ell.astype(float)
        return self.C * N[None, :] + np.diag(self.c)

    def offdiag_row_norms(self) -> np.ndarray:
        """(sum_{j != i} M[i, j]^2)^(1/2) per class of i."""
        N = self.labels.n_ell.astype(float)
        counts = N[None, :] - np.eye(self.labels.L)
        return np.sqrt(np.sum(counts * self.C ** 2, axis=1))

    def row_norms(self) -> np.ndarray:
        return np.sqrt(self.offdiag_row_norms() ** 2 + self.diag ** 2)


class ExpectedAdjacency(BlockMatrix):
    """E[A] = P - diag(P); .P gives P = Z B Z^T."""

    @property
    def P(self) -> BlockMatrix:
        return BlockMatrix(self.labels, self.C, np.zeros_like(self.c), source="P")


def expected_adjacency(spec: ModelSpec, labels: LabelAssignment) -> ExpectedAdjacency:
    check_consistent(spec, labels)
    return ExpectedAdjacency(labels, spec.B, -np.diagonal(spec.B), source="E[A]")


def mixing_matrix(spec: ModelSpec, labels: LabelAssignment) -> np.ndarray:
    """Pi n B / nu_n, the growth-normalized class mixing matrix."""
    if spec.nu_n <= 0.0:
        raise ConfigError("nu_n = 0: the mixing matrix is undefined for B = 0")
    return labels.proportions[:, None] * (spec.n * spec.B) / spec.nu_n


def xi_bar(spec: ModelSpec, labels: LabelAssignment, k: Optional[int] = None) -> np.ndarray:
    """d x L matrix of growth-normalized k-aggregated population vectors."""
    k = spec.k if k is None else k
    return spec.mu @ np.linalg.matrix_power(mixing_matrix(spec, labels), k)


def min_pairwise_distance(columns: np.ndarray) -> float:
    L = columns.shape[1]
    if L < 2:
        return math.inf
    return float(min(np.linalg.norm(columns[:, a] - columns[:, b])
                     for a in range(L) for b in range(a + 1, L)))


# =============================================================================
# SECTION 4: SAMPLING
# =============================================================================

@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected simple graph; each edge stored once as (rows[e], cols[e]) with rows < cols."""
    n: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.int64).reshape(-1)
        cols = np.array(self.cols, dtype=np.int64).reshape(-1)
        if rows.shape != cols.shape:
            raise DimensionError("edge endpoint arrays differ in length")
        if rows.size:
            if np.any(rows >= cols):
                raise ConfigError("edges must satisfy i < j (no self-loops)")
            if rows.min() < 0 or cols.max() >= self.n:
                raise ConfigError(f"edge endpoint outside 0..{self.n - 1}")
            key = rows * self.n + cols
            if np.unique(key).size != key.size:
                raise ConfigError("duplicate edge")
        object.__setattr__(self, "rows", _frozen(rows))
        object.__setattr__(self, "cols", _frozen(cols))

    @property
    def num_edges(self) -> int:
        return int(self.rows.size)

    @cached_property
    def adjacency(self) -> sparse.csr_array:
        src = np.concatenate((self.rows, self.cols))
        dst = np.concatenate((self.cols, self.rows))
        data = np.ones(src.size, dtype=float)
        A = sparse.csr_array((data, (src, dst)), shape=(self.n, self.n))
        A.sort_indices()
        return A

    def degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.n) + np.bincount(self.cols, minlength=self.n)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = 1.0
        out[self.cols, self.rows] = 1.0
        return out

    def to_edge_list_text(self) -> str:
        order = np.lexsort((self.cols, self.rows))
        return "".join(f"{i} {j}\n" for i, j in zip(self.rows[order], self.cols[order]))

    @classmethod
    def from_edge_list_text(cls, text: str, n: int) -> "SparseGraph":
        rows, cols = [], []
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"edge list line {number}: expected 'i j', got {line!r}")
            i, j = int(parts[0]), int(parts[1])
            rows.append(min(i, j))
            cols.append(max(i, j))
        return cls(n, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))

    @classmethod
    def from_dense(cls, M: np.ndarray) -> "SparseGraph":
        M = np.asarray(M)
        i, j = np.nonzero(np.triu(M, 1))
        return cls(M.shape[0], i, j)


def _triangle_pairs(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Invert t = b(b-1)/2 + a for 0 <= a < b."""
    t = t.astype(np.int64)
    b = np.floor((1.0 + np.sqrt(1.0 + 8.0 * t)) / 2.0).astype(np.int64)
    b = np.where(b * (b - 1) // 2 > t, b - 1, b)
    b = np.where((b + 1) * b // 2 <= t, b + 1, b)
    return t - b * (b - 1) // 2, b


def _pick_pairs(rng: np.random.Generator, total: int, p: float) -> np.ndarray:
    """Indices of successes among `total` independent Bernoulli(p) pairs."""
    if total <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    m = int(rng.binomial(total, p))
    if m == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(total, size=m, replace=False)).astype(np.int64)


def sample_graph(spec: ModelSpec, labels: LabelAssignment, seed: int, trial: int = 0) -> SparseGraph:
    check_consistent(spec, labels)
    rng = stream(seed, "graph", trial)
    rows, cols = [], []
    for a in range(spec.L):
        ia = labels.members(a)
        for b in range(a, spec.L):
            p = float(spec.B[a, b])
            if a == b:
                picks = _pick_pairs(rng, ia.size * (ia.size - 1) // 2, p)
                u, v = _triangle_pairs(picks)
                r, c = ia[u], ia[v]
            else:
                ib = labels.members(b)
                picks = _pick_pairs(rng, ia.size * ib.size, p)
                u, v = np.divmod(picks, ib.size)
                r, c = ia[u], ib[v]
            rows.append(np.minimum(r, c))
            cols.append(np.maximum(r, c))
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    order = np.lexsort((cols, rows))
    return SparseGraph(spec.n, rows[order], cols[order])


def draw_noise(kind: str, rng: np.random.Generator, shape: Tuple[int, ...], sigma: float) -> np.ndarray:
    if kind == "gaussian":
        return sigma * rng.standard_normal(shape)
    if kind == "rademacher":
        return sigma * (2.0 * rng.integers(0, 2, size=shape) - 1.0)
    if kind == "uniform":
        half = sigma * math.sqrt(3.0)
        return rng.uniform(-half, half, size=shape)
    raise ConfigError(f"unknown noise sampler {kind!r}")


def noise_raw_moment(kind: str, mean: Any, sigma: float, a: int) -> np.ndarray:
    """Exact E[(mean + noise)^a] for the provided samplers (variance sigma^2)."""
    mean = np.asarray(mean, dtype=float)
    if a == 0:
        return np.ones_like(mean)
    if kind == "gaussian":
        total = np.zeros_like(mean)
        for e in range(0, a + 1, 2):
            total = total + math.comb(a, e) * mean ** (a - e) * sigma ** e * math.prod(range(e - 1, 0, -2))
        return total
    if kind == "rademacher":
        return 0.5 * ((mean + sigma) ** a + (mean - sigma) ** a)
    if kind == "uniform":
        half = sigma * math.sqrt(3.0)
        if half == 0.0:
            return mean ** a
        return ((mean + half) ** (a + 1) - (mean - half) ** (a + 1)) / (2.0 * half * (a + 1))
    raise ConfigError(f"unknown noise sampler {kind!r}")


def feature_means(spec: ModelSpec, labels: LabelAssignment) -> np.ndarray:
    """n x d matrix M^T with rows mu_{y_i}."""
    return spec.mu[:, labels.y].T


def sample_features(spec: ModelSpec, labels: LabelAssignment, seed: int, trial: int = 0) -> np.ndarray:
    check_consistent(spec, labels)
    means = feature_means(spec, labels)
    if spec.sigma == 0.0:
        return means.copy()
    rng = stream(seed, "features", trial)
    return means + draw_noise(spec.noise, rng, means.shape, spec.sigma)


# =============================================================================
# SECTION 5: ASSUMPTIONS
# =============================================================================

@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    satisfied: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    checks: Dict[str, AssumptionCheck]
    constants: AssumptionConstants
    k: int
    xi_bar: Optional[np.ndarray]
    separation: float
    c_xi: float

    @property
    def all_satisfied(self) -> bool:
        return all(check.satisfied for check in self.checks.values())

    def failed(self) -> Tuple[str, ...]:
        return tuple(name for name, check in self.checks.items() if not check.satisfied)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "c_xi": self.c_xi,
            "separation": self.separation,
            "constants": dict(self.constants.__dict__),
            "checks": {name: dict(check.__dict__) for name, check in self.checks.items()},
        }


def _a1(spec: ModelSpec, const: AssumptionConstants) -> AssumptionCheck:
    nu = spec.nu_n
    nB = spec.n * spec.B
    cap = const.C_B * nu ** (1.0 - const.delta) if nu > 0 else 0.0
    margins, members = [], []
    for ell in range(spec.L):
        inside = nB[ell] >= const.c_B * nu * (1.0 - SPEC_TOL)
        members.append(np.flatnonzero(inside).tolist())
        if not inside.any():
            margins.append(float(nB[ell].max() - const.c_B * nu))
            continue
        outside = nB[ell][~inside]
        if outside.size:
            margins.append(float(np.min(cap - outside)))
    margin = min(margins) if margins else math.inf
    return AssumptionCheck("A1", margin >= 0.0, margin, f"I_l = {members}")


def check_assumptions(spec: ModelSpec, labels: LabelAssignment,
                      constants: Optional[AssumptionConstants] = None,
                      k: Optional[int] = None) -> AssumptionReport:
    check_consistent(spec, labels)
    const = constants or DEFAULT_CONFIG.assumptions
    k = spec.k if k is None else k
    n, L, d, nu = spec.n, spec.L, spec.d, spec.nu_n
    checks: Dict[str, AssumptionCheck] = {}

    checks["A1"] = _a1(spec, const)

    margin = (1.0 - const.c_nu) * n - nu
    checks["A2"] = AssumptionCheck("A2", margin >= 0.0 and nu > 0.0, margin,
                                   f"nu_n = {nu:.6g}, (1 - c_nu) n = {(1.0 - const.c_nu) * n:.6g}")

    props = labels.proportions
    lower = float(np.min(L * props) - const.c_pi)
    upper = float(const.C_pi - math.sqrt(L) * np.linalg.norm(props))
    checks["A3"] = AssumptionCheck("A3", lower >= 0.0 and upper >= 0.0, min(lower, upper),
                                   f"min L pi_l = {np.min(L * props):.6g}, sqrt(L)|pi| = {math.sqrt(L) * np.linalg.norm(props):.6g}")

    op = float(np.linalg.norm(spec.mu, 2))
    margin = const.C_mu * math.sqrt(d) - op
    checks["A4"] = AssumptionCheck("A4", margin >= 0.0, margin, f"|mu|_op = {op:.6g}")

    if nu <= 0.0:
        xb, separation, detail = None, 0.0, "nu_n = 0"
    elif L < 2:
        xb, separation, detail = xi_bar(spec, labels, k), 0.0, "fewer than two classes"
    else:
        xb = xi_bar(spec, labels, k)
        separation = min_pairwise_distance(xb) / math.sqrt(d)
        detail = f"unclamped separation {separation:.6g} at k={k}"
    c_xi = min(separation, 1.0)
    checks["A5"] = AssumptionCheck("A5", separation > SPEC_TOL, separation, detail)

    report = AssumptionReport(checks, const, k, xb, separation, c_xi)
    if not report.all_satisfied:
        log.debug("assumptions failing: %s", ", ".join(report.failed()))
    return report
