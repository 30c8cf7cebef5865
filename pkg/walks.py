"""
Walk Combinatorics

Exact desk-scale oracles over k-walks on the complete graph K_n.

Flow:
  1. Walk / WalkSequence  - vertex tuples with cached [w], <w> and Gamma(w)
  2. enumeration          - lexicographic k-walks; rooted census by (end, t, cyclic)
  3. counting             - |N_t(i,j)| and closed-walk counts against their bounds
  4. E[A^k]               - walk-sum oracle (one anchor per class) and the
                            class-pattern oracle (walk shapes x class counts)
  5. moments              - exhaustive r-tuple scan: rho, (t, v) census,
                            Theta_hi / Theta_lo, N_* structure, Theta_hi proxy
  6. sampled moments      - Monte Carlo E[Delta^r] with a bootstrap CI, exact E[Dev^2]

Vertices and labels are 0-indexed. A walk is "cyclic" when G(w) has a cycle,
i.e. |[w]| >= |<w>|; every other walk traces a tree.

Guards (config.Guards): raw enumeration size, walk-oracle n/k limits. Going
over a guard raises GuardExceeded; nothing is truncated silently.
"""

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Tuple

import networkx as nx
import numpy as np
from scipy import stats
from sympy import binomial, catalan, factorial, factorial2, ff
from sympy.functions.combinatorial.numbers import stirling

from config import DEFAULT_CONFIG, Guards
from csbm import (
    BlockMatrix,
    LabelAssignment,
    ModelSpec,
    check_consistent,
    draw_noise,
    expected_adjacency,
    feature_means,
    noise_raw_moment,
)
from errors import ConfigError, ConsistencyError, GuardExceeded
from linalg import InequalityRecord, holds
from montecarlo import bootstrap_mean_ci, mean_se, run_trials, stream

log = logging.getLogger(__name__)

Edge = Tuple[int, int]


# =============================================================================
# SECTION 1: WALKS AND WALK SEQUENCES
# =============================================================================

def edge_key(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Walk:
    """A k-walk (i_1, ..., i_{k+1}) with i_l != i_{l+1}."""
    vertices: Tuple[int, ...]

    def __post_init__(self):
        verts = tuple(int(v) for v in self.vertices)
        if len(verts) < 2:
            raise ConfigError("a walk needs at least one step")
        if min(verts) < 0:
            raise ConfigError(f"negative vertex in {verts}")
        for a, b in zip(verts, verts[1:]):
            if a == b:
                raise ConfigError(f"self-loop step {a} -> {b} in {verts}")
        object.__setattr__(self, "vertices", verts)

    @property
    def k(self) -> int:
        return len(self.vertices) - 1

    @property
    def root(self) -> int:
        return self.vertices[0]

    @property
    def endpoint(self) -> int:
        return self.vertices[-1]

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(zip(self.vertices, self.vertices[1:]))

    @cached_property
    def unique_edges(self) -> FrozenSet[Edge]:
        return frozenset(edge_key(a, b) for a, b in self.edges)

    @cached_property
    def vertex_set(self) -> FrozenSet[int]:
        return frozenset(self.vertices)

    @property
    def t(self) -> int:
        return len(self.unique_edges)

    @property
    def has_cycle(self) -> bool:
        return self.t >= len(self.vertex_set)

    @property
    def is_tree(self) -> bool:
        return len(self.vertex_set) == self.t + 1

    @property
    def first_edge(self) -> Edge:
        return edge_key(self.vertices[0], self.vertices[1])


@dataclass(frozen=True)
class WalkSequence:
    """An ordered r-tuple of walks sharing their root."""
    walks: Tuple[Walk, ...]

    def __post_init__(self):
        walks = tuple(w if isinstance(w, Walk) else Walk(tuple(w)) for w in self.walks)
        if not walks:
            raise ConfigError("empty walk sequence")
        if len({w.root for w in walks}) != 1:
            raise ConfigError("walks in a sequence must share their root")
        object.__setattr__(self, "walks", walks)

    @property
    def r(self) -> int:
        return len(self.walks)

    @property
    def root(self) -> int:
        return self.walks[0].root

    @property
    def k(self) -> int:
        return self.walks[0].k

    @cached_property
    def unique_edges(self) -> FrozenSet[Edge]:
        return frozenset().union(*(w.unique_edges for w in self.walks))

    @cached_property
    def vertex_set(self) -> FrozenSet[int]:
        return frozenset().union(*(w.vertex_set for w in self.walks))

    @property
    def t(self) -> int:
        return len(self.unique_edges)

    @property
    def v(self) -> int:
        return len(self.vertex_set)

    @cached_property
    def partition(self) -> Tuple[Tuple[Tuple[int, ...], ...], bool]:
        return gamma_partition(self)

    @property
    def gamma(self) -> Tuple[Tuple[int, ...], ...]:
        return self.partition[0]

    @property
    def overlapping(self) -> bool:
        return self.partition[1]

    @property
    def j_vector(self) -> Tuple[Optional[int], ...]:
        """Shared first-step vertex of each Gamma component (None if the walks disagree)."""
        out = []
        for comp in self.gamma:
            firsts = {self.walks[s].vertices[1] for s in comp}
            out.append(firsts.pop() if len(firsts) == 1 else None)
        return tuple(out)


def gamma_partition(ws: WalkSequence) -> Tuple[Tuple[Tuple[int, ...], ...], bool]:
    """
    Gamma(w): s ~ s' through chains of walks sharing an edge. Components are
    0-based index tuples ordered by their smallest element; the flag is True
    when every component has at least two walks.
    """
    G = nx.Graph()
    G.add_nodes_from(range(ws.r))
    for s, s2 in itertools.combinations(range(ws.r), 2):
        if ws.walks[s].unique_edges & ws.walks[s2].unique_edges:
            G.add_edge(s, s2)
    comps = sorted((tuple(sorted(c)) for c in nx.connected_components(G)), key=lambda c: c[0])
    return tuple(comps), all(len(c) >= 2 for c in comps)


def random_walk(n: int, k: int, root: int, rng: np.random.Generator) -> Walk:
    verts = [root]
    for step in rng.integers(0, n - 1, size=k):
        verts.append(int(step) + (step >= verts[-1]))
    return Walk(tuple(verts))


def random_walk_sequence(n: int, k: int, r: int, root: int, rng: np.random.Generator) -> WalkSequence:
    return WalkSequence(tuple(random_walk(n, k, root, rng) for _ in range(r)))


# =============================================================================
# SECTION 2: ENUMERATION
# =============================================================================

def _check_walk_args(n: int, k: int, start: int) -> None:
    if n < 2 or k < 1:
        raise ConfigError(f"walk enumeration needs n >= 2 and k >= 1, got n={n}, k={k}")
    if not 0 <= start < n:
        raise ConfigError(f"start vertex {start} outside 0..{n - 1}")


def _check_guard(size: int, guards: Guards, what: str) -> None:
    if size > guards.max_enumeration:
        raise GuardExceeded(f"{what}: {size:.3g} items exceed the enumeration guard {guards.max_enumeration:.3g}")


def enumerate_walks(n: int, k: int, start: int, end: Optional[int] = None,
                    closed: bool = False) -> Iterator[Walk]:
    """Stream k-walks from `start` (optionally ending at `end`, or closed) in lexicographic order."""
    _check_walk_args(n, k, start)
    if closed:
        if end is not None and end != start:
            raise ConfigError("closed walks end where they start")
        end = start
    if end is not None and not 0 <= end < n:
        raise ConfigError(f"end vertex {end} outside 0..{n - 1}")

    path = [start]

    def extend(depth: int) -> Iterator[Walk]:
        last = path[-1]
        if depth == k - 1:
            if end is not None:
                if end != last:
                    yield Walk(tuple(path) + (end,))
                return
            for v in range(n):
                if v != last:
                    yield Walk(tuple(path) + (v,))
            return
        for v in range(n):
            if v == last:
                continue
            path.append(v)
            yield from extend(depth + 1)
            path.pop()

    yield from extend(0)


def _release(counts: Dict[int, int], key: int) -> None:
    left = counts[key] - 1
    if left:
        counts[key] = left
    else:
        del counts[key]


@lru_cache(maxsize=32)
def _census(n: int, k: int, root: int) -> Tuple[Tuple[Tuple[int, int, bool], int], ...]:
    edges: Dict[int, int] = {}
    verts: Dict[int, int] = {root: 1}
    census: Counter = Counter()

    def go(last: int, depth: int) -> None:
        if depth == k:
            t = len(edges)
            census[(last, t, t >= len(verts))] += 1
            return
        for v in range(n):
            if v == last:
                continue
            key = last * n + v if last < v else v * n + last
            edges[key] = edges.get(key, 0) + 1
            verts[v] = verts.get(v, 0) + 1
            go(v, depth + 1)
            _release(edges, key)
            _release(verts, v)

    go(root, 0)
    return tuple(sorted(census.items()))


def rooted_census(n: int, k: int, root: int = 0, guards: Optional[Guards] = None) -> Dict[Tuple[int, int, bool], int]:
    """Counts of rooted k-walks keyed by (endpoint, |[w]|, cyclic)."""
    _check_walk_args(n, k, root)
    _check_guard((n - 1) ** k, guards or DEFAULT_CONFIG.guards, "rooted census")
    return dict(_census(n, k, root))


# =============================================================================
# SECTION 3: WALK COUNTS
# =============================================================================

@dataclass(frozen=True)
class CountRecord:
    n: int
    k: int
    t: int
    count: int
    bound: int
    satisfied: bool
    equality: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ClosedCountRecord:
    n: int
    k: int
    t: int
    looped: int
    loopless: int
    looped_bound: int
    loopless_bound: int
    crude_bound: float
    equality: Optional[bool]
    satisfied: bool

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def count_Nt(n: int, k: int, i: int, j: int, t: int, guards: Optional[Guards] = None) -> CountRecord:
    """|N_t(i,j)| (k-walks i -> j with t unique edges) against C(n-2, t-1) t^(k-1)."""
    if i == j:
        raise ConfigError("count_Nt needs distinct endpoints")
    if not 1 <= t <= k:
        raise ConfigError(f"t must lie in 1..{k}, got {t}")
    if not 0 <= j < n:
        raise ConfigError(f"end vertex {j} outside 0..{n - 1}")
    census = rooted_census(n, k, i, guards)
    count = sum(c for (end, tt, _), c in census.items() if end == j and tt == t)
    bound = int(binomial(n - 2, t - 1) * t ** (k - 1))
    ok = count <= bound
    if not ok:
        log.warning("|N_%d(i,j)| = %d exceeds %d at n=%d, k=%d", t, count, bound, n, k)
    return CountRecord(n, k, t, count, bound, ok, (count == bound) if k == 1 else None)


def count_closed(n: int, k: int, i: int, t: int, guards: Optional[Guards] = None) -> ClosedCountRecord:
    """
    Closed k-walks at i with t unique edges, split into cyclic ("looped") and
    tree ("loopless") walks, each against its bound. At k = 2t the loopless
    count must hit the Catalan-Stirling bound exactly.
    """
    if k < 2:
        raise ConfigError(f"closed-walk counts need k >= 2, got {k}")
    if not 1 <= t <= k:
        raise ConfigError(f"t must lie in 1..{k}, got {t}")
    census = rooted_census(n, k, i, guards)
    looped = census.get((i, t, True), 0)
    loopless = census.get((i, t, False), 0)
    if k % 2 and loopless:
        raise ConsistencyError(f"{loopless} tree-shaped closed walks of odd length {k}")

    looped_bound = int(binomial(n - 1, t - 1) * t ** (k - 1))
    if k % 2 == 0:
        loopless_bound = int(catalan(t) * binomial(n - 1, t) * factorial(t) * stirling(k // 2, t))
        crude = (2.0 * math.e ** 2 * n) ** t * float(t) ** (k / 2 - t - 1)
    else:
        loopless_bound, crude = 0, 0.0

    equality = (loopless == loopless_bound) if k == 2 * t else None
    ok = (looped <= looped_bound and loopless <= loopless_bound
          and holds(loopless, crude, 1e-12) and equality is not False)
    if not ok:
        log.warning("closed-walk counts off at n=%d k=%d t=%d: looped %d/%d, loopless %d/%d",
                    n, k, t, looped, looped_bound, loopless, loopless_bound)
    return ClosedCountRecord(n, k, t, looped, loopless, looped_bound, loopless_bound, crude, equality, ok)


# =============================================================================
# SECTION 4: E[A^k] ORACLES
# =============================================================================

@lru_cache(maxsize=None)
def walk_shapes(k: int) -> Tuple[Tuple[int, ...], ...]:
    """
    Restricted growth strings s_0..s_k with s_0 = 0 and s_l != s_{l+1}: one per
    pattern of vertex coincidences of a k-walk. There are Bell(k) of them.
    """
    out: List[Tuple[int, ...]] = []

    def grow(seq: List[int], top: int) -> None:
        if len(seq) == k + 1:
            out.append(tuple(seq))
            return
        for b in range(top + 2):
            if b != seq[-1]:
                seq.append(b)
                grow(seq, max(top, b))
                seq.pop()

    grow([0], 0)
    return tuple(out)


def _falling(m: float, r: int) -> float:
    if m < r:
        return 0.0
    out = 1.0
    for s in range(r):
        out *= m - s
    return out


def _identity_power(labels: LabelAssignment) -> BlockMatrix:
    return BlockMatrix(labels, np.zeros((labels.L, labels.L)), np.ones(labels.L),
                       tree_diag=np.ones(labels.L), source="I")


def class_pattern_EAk(spec: ModelSpec, labels: LabelAssignment, k: int,
                      guards: Optional[Guards] = None) -> BlockMatrix:
    """
    Exact E[A^k] in block form for any n.

    A walk's expectation is the product of B over its distinct edges, which
    only depends on its shape and on the classes of its distinct vertices.
    Summing shapes x class assignments x injective labelings (falling
    factorials of the class sizes) gives every entry from counts alone.
    """
    guards = guards or DEFAULT_CONFIG.guards
    check_consistent(spec, labels)
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    if k > guards.class_oracle_max_k:
        raise GuardExceeded(f"class-pattern oracle limited to k <= {guards.class_oracle_max_k}, got {k}")
    if k == 0:
        return _identity_power(labels)

    L, B = spec.L, spec.B
    N = labels.n_ell.astype(float)
    off = np.zeros((L, L))
    diag = np.zeros(L)
    tree = np.zeros(L)

    for shape in walk_shapes(k):
        blocks = max(shape) + 1
        edges = sorted({edge_key(a, b) for a, b in zip(shape, shape[1:])})
        closed = shape[-1] == 0
        is_tree = len(edges) == blocks - 1
        fixed = (0,) if closed else (0, shape[-1])
        free = [b for b in range(blocks) if b not in fixed]
        for ci in range(L):
            for cj in ([ci] if closed else range(L)):
                if not closed and ci == cj and N[ci] < 2:
                    continue
                cls = [0] * blocks
                cls[0] = ci
                used = Counter({ci: 1})
                if not closed:
                    cls[shape[-1]] = cj
                    used[cj] += 1
                total = 0.0
                for assign in itertools.product(range(L), repeat=len(free)):
                    for b, c in zip(free, assign):
                        cls[b] = c
                    weight = 1.0
                    for a, b in edges:
                        weight *= B[cls[a], cls[b]]
                        if weight == 0.0:
                            break
                    if weight == 0.0:
                        continue
                    for c, need in Counter(assign).items():
                        weight *= _falling(N[c] - used[c], need)
                    total += weight
                if closed:
                    diag[ci] += total
                    if is_tree:
                        tree[ci] += total
                else:
                    off[ci, cj] += total

    return BlockMatrix.from_tables(labels, off, diag, tree_diag=tree, source="class-pattern")


def _anchor_row(P: List[List[float]], n: int, k: int, root: int) -> Tuple[np.ndarray, float]:
    """Row `root` of E[A^k] by DFS over k-walks, plus the tree part of its diagonal."""
    row = [0.0] * n
    tree_total = 0.0
    edges: Dict[int, int] = {}
    verts: Dict[int, int] = {root: 1}

    def go(last: int, depth: int, prod: float) -> None:
        nonlocal tree_total
        if depth == k:
            row[last] += prod
            if last == root and len(verts) == len(edges) + 1:
                tree_total += prod
            return
        p_last = P[last]
        for v in range(n):
            if v == last:
                continue
            key = last * n + v if last < v else v * n + last
            seen = edges.get(key, 0)
            q = prod if seen else prod * p_last[v]
            if q == 0.0:
                continue
            edges[key] = seen + 1
            verts[v] = verts.get(v, 0) + 1
            go(v, depth + 1, q)
            _release(edges, key)
            _release(verts, v)

    go(root, 0, 1.0)
    return np.asarray(row), tree_total


def walk_oracle_EAk(spec: ModelSpec, labels: LabelAssignment, k: int,
                    guards: Optional[Guards] = None) -> BlockMatrix:
    """E[A^k] from walk sums at one anchor per class; rows must be constant within classes."""
    guards = guards or DEFAULT_CONFIG.guards
    check_consistent(spec, labels)
    if k == 0:
        return _identity_power(labels)
    _check_guard(labels.L * (spec.n - 1) ** k, guards, "walk oracle")

    P = expected_adjacency(spec, labels).dense().tolist()
    L = labels.L
    off = np.zeros((L, L))
    diag = np.zeros(L)
    tree = np.zeros(L)
    for ell, anchor in enumerate(labels.anchors()):
        i = int(anchor)
        row, tree[ell] = _anchor_row(P, spec.n, k, i)
        diag[ell] = row[i]
        for b in range(L):
            members = labels.members(b)
            members = members[members != i]
            if members.size == 0:
                continue
            vals = row[members]
            if not np.allclose(vals, vals[0], rtol=guards.anchor_rtol, atol=0.0):
                raise ConsistencyError(f"E[A^{k}] row {i} is not constant on class {b}")
            off[ell, b] = vals[0]
    return BlockMatrix.from_tables(labels, off, diag, tree_diag=tree, source="walk-sum")


def _observable(labels: LabelAssignment) -> np.ndarray:
    mask = ~np.eye(labels.L, dtype=bool)
    mask |= np.diag(labels.n_ell >= 2)
    return mask


def cross_check(first: BlockMatrix, second: BlockMatrix, rtol: float) -> None:
    mask = _observable(first.labels)
    pairs = [
        (first.off[mask], second.off[mask], "off-diagonal"),
        (first.diag, second.diag, "diagonal"),
    ]
    if first.tree_diag is not None and second.tree_diag is not None:
        pairs.append((first.tree_diag, second.tree_diag, "tree diagonal"))
    for a, b, what in pairs:
        scale = max(float(np.max(np.abs(b))) if b.size else 0.0, 1e-300)
        gap = float(np.max(np.abs(a - b))) if a.size else 0.0
        if gap > rtol * scale:
            raise ConsistencyError(
                f"{first.source} and {second.source} disagree on the {what} entries (gap {gap:.3g})")


def exact_EAk(spec: ModelSpec, labels: LabelAssignment, k: int,
              guards: Optional[Guards] = None) -> np.ndarray:
    """Dense E[A^k] from walk enumeration, cross-checked against the class-pattern oracle."""
    guards = guards or DEFAULT_CONFIG.guards
    if spec.n > guards.walk_oracle_max_n or k > guards.walk_oracle_max_k:
        raise GuardExceeded(
            f"walk enumeration limited to n <= {guards.walk_oracle_max_n}, k <= {guards.walk_oracle_max_k}"
            f" (got n={spec.n}, k={k})")
    walk = walk_oracle_EAk(spec, labels, k, guards)
    cross_check(walk, class_pattern_EAk(spec, labels, k, guards), guards.consistency_rtol)
    return walk.dense()


def expected_power(spec: ModelSpec, labels: LabelAssignment, k: int,
                   guards: Optional[Guards] = None, source: str = "auto") -> BlockMatrix:
    """
    E[A^k] as a BlockMatrix. source: "walk" (enumeration, cross-checked),
    "pattern" (class patterns) or "auto" (walk enumeration when cheap).
    """
    guards = guards or DEFAULT_CONFIG.guards
    if k == 0:
        return _identity_power(labels)
    if source not in ("auto", "walk", "pattern"):
        raise ConfigError(f"unknown E[A^k] source {source!r}")
    cheap = (spec.n <= guards.walk_oracle_max_n and k <= guards.walk_oracle_max_k
             and labels.L * (spec.n - 1) ** k <= guards.walk_oracle_budget)
    if source == "walk" or (source == "auto" and cheap):
        walk = walk_oracle_EAk(spec, labels, k, guards)
        if k <= guards.class_oracle_max_k:
            cross_check(walk, class_pattern_EAk(spec, labels, k, guards), guards.consistency_rtol)
        return walk
    return class_pattern_EAk(spec, labels, k, guards)


@dataclass(frozen=True)
class GrowthRecord:
    k: int
    nu_n: float
    p_max: float
    precondition: bool
    entry_margin: float
    row_margin: float
    satisfied: bool
    max_offdiag: float
    max_diag: float
    max_row_norm: float
    dyck: Tuple[float, ...]
    path: Tuple[float, ...]
    cyclic: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        out = dict(self.__dict__)
        for key in ("dyck", "path", "cyclic"):
            out[key] = list(out[key])
        return out


def check_Akij_growth(spec: ModelSpec, labels: LabelAssignment, k: int,
                      guards: Optional[Guards] = None,
                      expected: Optional[BlockMatrix] = None) -> GrowthRecord:
    """
    Entrywise E[A^k]_ij <= 2 p_max nu^(k-1) + 2 nu^(k/2) [i = j, k even] and
    row norms <= 4 nu^(k - 1/2). The bounds are claimed under nu >= k e^(2(k-1)),
    reported as `precondition`.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    E = expected if expected is not None else expected_power(spec, labels, k, guards)
    nu, pmax = spec.nu_n, spec.p_max
    precondition = nu >= k * math.exp(2 * (k - 1))

    bound_off = 2.0 * pmax * nu ** (k - 1)
    bound_diag = bound_off + (2.0 * nu ** (k / 2) if k % 2 == 0 else 0.0)
    mask = _observable(labels)
    off_vals = E.off[mask]
    entry_margin = min(
        float(np.min(bound_off - off_vals)) if off_vals.size else math.inf,
        float(np.min(bound_diag - E.diag)),
    )
    norms = E.row_norms()
    row_margin = float(np.min(4.0 * nu ** (k - 0.5) - norms))

    dyck = E.tree_diag if E.tree_diag is not None else E.diag
    ok = entry_margin >= -1e-12 * max(bound_diag, 1.0) and row_margin >= -1e-12 * max(4.0 * nu ** (k - 0.5), 1.0)
    if precondition and not ok:
        log.warning("E[A^%d] growth bound violated (entry margin %.3g, row margin %.3g)", k, entry_margin, row_margin)
    return GrowthRecord(
        k=k, nu_n=nu, p_max=pmax, precondition=precondition,
        entry_margin=entry_margin, row_margin=row_margin, satisfied=ok,
        max_offdiag=float(np.max(off_vals)) if off_vals.size else 0.0,
        max_diag=float(np.max(E.diag)), max_row_norm=float(np.max(norms)),
        dyck=tuple(float(x) for x in dyck),
        path=tuple(float(x) for x in E.offdiag_row_norms()),
        cyclic=tuple(float(x) for x in E.diag - dyck),
    )


# =============================================================================
# SECTION 5: WALK-SEQUENCE MOMENTS
# =============================================================================

@dataclass(frozen=True, eq=False)
class RootedWalkTable:
    """All (n-1)^k rooted k-walks as arrays: vertices, unique edge ids (-1 padded), endpoints."""
    n: int
    k: int
    root: int
    verts: np.ndarray
    edges: np.ndarray
    ends: np.ndarray

    @property
    def size(self) -> int:
        return int(self.verts.shape[0])


def _unique_rows(ids: np.ndarray) -> np.ndarray:
    """Sort along the last axis and replace repeats by -1."""
    out = np.sort(ids, axis=-1)
    dup = np.zeros(out.shape, dtype=bool)
    dup[..., 1:] = out[..., 1:] == out[..., :-1]
    out[dup] = -1
    return out


def _edge_products(p_flat: np.ndarray, ids: np.ndarray) -> np.ndarray:
    return np.prod(np.where(ids >= 0, p_flat[np.maximum(ids, 0)], 1.0), axis=-1)


@lru_cache(maxsize=16)
def rooted_walk_table(n: int, k: int, root: int) -> RootedWalkTable:
    _check_walk_args(n, k, root)
    steps = np.indices((n - 1,) * k).reshape(k, -1).T
    verts = np.empty((steps.shape[0], k + 1), dtype=np.int64)
    verts[:, 0] = root
    for s in range(k):
        step = steps[:, s]
        verts[:, s + 1] = step + (step >= verts[:, s])
    a, b = verts[:, :-1], verts[:, 1:]
    ids = _unique_rows(np.minimum(a, b) * n + np.maximum(a, b))
    for arr in (verts, ids):
        arr.flags.writeable = False
    return RootedWalkTable(n, k, root, verts, ids, verts[:, -1])


@dataclass(frozen=True, eq=False)
class _Scan:
    table: RootedWalkTable
    r: int
    p_flat: np.ndarray
    pw: np.ndarray
    chunk: int

    @property
    def raw(self) -> int:
        return self.table.size ** self.r

    @property
    def chunks(self) -> int:
        return -(-self.raw // self.chunk)


def _prepare_scan(spec: ModelSpec, labels: LabelAssignment, i: int, r: int, k: int,
                  guards: Guards) -> _Scan:
    check_consistent(spec, labels)
    if r < 1 or k < 1:
        raise ConfigError(f"need r >= 1 and k >= 1, got r={r}, k={k}")
    if not 0 <= i < spec.n:
        raise ConfigError(f"node {i} outside 0..{spec.n - 1}")
    _check_guard(((spec.n - 1) ** k) ** r, guards, f"r={r} tuples of {k}-walks")
    table = rooted_walk_table(spec.n, k, i)
    p_flat = expected_adjacency(spec, labels).dense().ravel()
    return _Scan(table, r, p_flat, _edge_products(p_flat, table.edges), guards.chunk_size)


def _overlapping(scan: _Scan, b: int) -> Tuple[np.ndarray, np.ndarray]:
    """Chunk b of the r-tuples, restricted to overlapping ones: (walk indices, edge ids)."""
    start = b * scan.chunk
    stop = min(scan.raw, start + scan.chunk)
    r = scan.r
    W = scan.table.size
    T = np.stack(np.unravel_index(np.arange(start, stop, dtype=np.int64), (W,) * r), axis=1)
    EE = scan.table.edges[T]
    if r == 1:
        return T[:0], EE[:0]
    valid = EE >= 0
    covered = np.zeros(T.shape, dtype=bool)
    for s, s2 in itertools.combinations(range(r), 2):
        share = ((EE[:, s, :, None] == EE[:, s2, None, :]) & valid[:, s, :, None]).any(axis=(1, 2))
        covered[:, s] |= share
        covered[:, s2] |= share
    keep = covered.all(axis=1)
    return T[keep], EE[keep]


def _rho1(scan: _Scan, T: np.ndarray, EE: np.ndarray) -> np.ndarray:
    """E prod_s (A_{w_s} - E A_{w_s}) by signed expansion over subsets."""
    c, r = T.shape
    pw = scan.pw[T]
    total = np.zeros(c)
    for mask in range(1 << r):
        inside = [s for s in range(r) if mask >> s & 1]
        rest = [s for s in range(r) if not mask >> s & 1]
        joint = _edge_products(scan.p_flat, _unique_rows(EE[:, inside, :].reshape(c, -1))) if inside else 1.0
        others = np.prod(pw[:, rest], axis=1) if rest else 1.0
        total += (-1.0) ** len(rest) * joint * others
    return total


def _rho2(R: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """E prod_s x_{end_s} from raw moments R[j, a] of each endpoint."""
    c, r = ends.shape
    out = np.ones(c)
    for s in range(r):
        same = ends == ends[:, s:s + 1]
        first = ~same[:, :s].any(axis=1) if s else np.ones(c, dtype=bool)
        mult = same.sum(axis=1)
        out *= np.where(first, R[ends[:, s], mult], 1.0)
    return out


def _tv(scan: _Scan, T: np.ndarray, EE: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    c = T.shape[0]
    t = (_unique_rows(EE.reshape(c, -1)) >= 0).sum(axis=1)
    v = (_unique_rows(scan.table.verts[T].reshape(c, -1)) >= 0).sum(axis=1)
    return t, v


def nstar_violations(ws: WalkSequence) -> List[str]:
    """Names of the dominant-tree clauses a sequence fails (empty list: all hold)."""
    out = []
    i, k = ws.root, ws.k
    comps = ws.gamma
    if ws.r % 2 or any(len(c) != 2 for c in comps):
        out.append("perfect-matching")

    G = nx.Graph()
    G.add_edges_from(ws.unique_edges)
    if not nx.is_tree(G):
        out.append("rooted-tree")

    branches = [frozenset().union(*(ws.walks[s].vertex_set for s in c)) for c in comps]
    if any(a & b != {i} for a, b in itertools.combinations(branches, 2)):
        out.append("disjoint-branches")

    for comp in comps:
        if len(comp) != 2:
            continue
        w, w2 = ws.walks[comp[0]], ws.walks[comp[1]]
        j = w.vertices[1]
        paths = all(x.t == k and len(x.vertex_set) == k + 1 for x in (w, w2))
        if (not paths or w.first_edge != w2.first_edge
                or w.unique_edges & w2.unique_edges != {w.first_edge}
                or w.vertex_set & w2.vertex_set != {i, j}):
            out.append("paired-branch")
            break

    js = ws.j_vector
    if None in js or len(set(js)) != len(js):
        out.append("core-star")
    return out


@dataclass(frozen=True)
class CensusCell:
    r: int
    t: int
    v: int
    count: int
    bound: int
    sum_rho: float

    @property
    def within_bound(self) -> bool:
        return self.count <= self.bound


@dataclass(frozen=True, eq=False)
class MomentTable:
    n: int
    k: int
    r: int
    i: int
    m: int
    t_star: Optional[int]
    cells: Dict[Tuple[int, int], CensusCell]
    moment: float
    theta_hi: float
    theta_lo: float
    raw: int
    overlapping: int
    nstar_count: int
    nstar_expected: int
    matchings: int
    matchings_expected: int

    @property
    def bounds_ok(self) -> bool:
        return all(cell.within_bound for cell in self.cells.values())

    def census_rows(self) -> List[Dict[str, Any]]:
        return [{"r": c.r, "t": c.t, "v": c.v, "count": c.count, "bound": c.bound, "sum_rho": c.sum_rho}
                for _, c in sorted(self.cells.items())]


def moment_decomposition(spec: ModelSpec, labels: LabelAssignment, i: int, m: int, r: int, k: int,
                         guards: Optional[Guards] = None, threads: int = 1) -> MomentTable:
    """
    Exact E[Delta_im^r] by an exhaustive pass over r-tuples of rooted k-walks.

    Only overlapping tuples contribute. Each is binned by (t, v); the cell
    (t_*, t_*+1), t_* = r(2k-1)/2, is Theta_hi and everything else Theta_lo.
    Every tuple in that cell must satisfy the dominant-tree clauses, and the
    cell must hold exactly (r-1)!! (n-1)_{t_*} tuples.
    """
    guards = guards or DEFAULT_CONFIG.guards
    if not 0 <= m < spec.d:
        raise ConfigError(f"feature index {m} outside 0..{spec.d - 1}")
    scan = _prepare_scan(spec, labels, i, r, k, guards)
    n = spec.n
    means = spec.mu[m, labels.y]
    R = np.stack([noise_raw_moment(spec.noise, means, spec.sigma, a) for a in range(r + 1)], axis=1)

    even = r % 2 == 0
    t_star = r * (2 * k - 1) // 2 if even else None
    shape = (r * k + 1, r * (k + 1) + 2)

    def work(b: int):
        T, EE = _overlapping(scan, b)
        counts = np.zeros(shape, dtype=np.int64)
        sums = np.zeros(shape)
        if T.shape[0] == 0:
            return counts, sums, 0.0, T
        t, v = _tv(scan, T, EE)
        rho = _rho1(scan, T, EE) * _rho2(R, scan.table.ends[T])
        np.add.at(counts, (t, v), 1)
        np.add.at(sums, (t, v), rho)
        star = T[(t == t_star) & (v == t_star + 1)] if even else T[:0]
        return counts, sums, float(rho.sum()), star

    parts = run_trials(work, scan.chunks, threads)
    counts = np.zeros(shape, dtype=np.int64)
    sums = np.zeros(shape)
    moment = 0.0
    for c, s, total, _ in parts:
        counts += c
        sums += s
        moment += total
    stars = np.concatenate([p[3] for p in parts]) if parts else np.empty((0, r), dtype=np.int64)

    t_cap = r * k - (r + 1) // 2
    cells: Dict[Tuple[int, int], CensusCell] = {}
    for t, v in zip(*np.nonzero(counts)):
        t, v = int(t), int(v)
        if t > t_cap or v > t + 1:
            raise ConsistencyError(f"census cell (t={t}, v={v}) should be empty at r={r}, k={k}")
        bound = int((v - 1) ** (r * k) * binomial(n - 1, v - 1))
        cells[(t, v)] = CensusCell(r, t, v, int(counts[t, v]), bound, float(sums[t, v]))

    theta_hi = float(sums[t_star, t_star + 1]) if even else 0.0
    lo_mask = np.ones(shape, dtype=bool)
    if even:
        lo_mask[t_star, t_star + 1] = False
    theta_lo = float(sums[lo_mask].sum())
    if abs(theta_hi + theta_lo - moment) > 1e-9 * max(abs(moment), float(np.abs(sums).sum()), 1e-300):
        raise ConsistencyError(f"Theta_hi + Theta_lo = {theta_hi + theta_lo!r} but the moment is {moment!r}")

    nstar_expected = int(factorial2(r - 1) * ff(n - 1, t_star)) if even else 0
    if stars.shape[0] != nstar_expected:
        raise ConsistencyError(f"|N_*| = {stars.shape[0]}, expected {nstar_expected}")
    matchings = set()
    verts = scan.table.verts
    for row in stars:
        ws = WalkSequence(tuple(Walk(tuple(verts[w].tolist())) for w in row))
        bad = nstar_violations(ws)
        if bad:
            raise ConsistencyError(f"sequence {[w.vertices for w in ws.walks]} in N_* fails {bad}")
        matchings.add(ws.gamma)
    matchings_expected = int(factorial2(r - 1)) if even else 0
    if stars.shape[0] and len(matchings) != matchings_expected:
        raise ConsistencyError(f"{len(matchings)} matchings realized in N_*, expected {matchings_expected}")

    log.debug("E[Delta^%d] at i=%d m=%d k=%d: %.6g over %d overlapping tuples",
              r, i, m, k, moment, int(counts.sum()))
    return MomentTable(
        n=n, k=k, r=r, i=i, m=m, t_star=t_star, cells=cells, moment=moment,
        theta_hi=theta_hi, theta_lo=theta_lo, raw=scan.raw, overlapping=int(counts.sum()),
        nstar_count=int(stars.shape[0]), nstar_expected=nstar_expected,
        matchings=len(matchings), matchings_expected=matchings_expected,
    )


def walk_pair_covariance(spec: ModelSpec, labels: LabelAssignment, i: int, k: int,
                         guards: Optional[Guards] = None, threads: int = 1) -> np.ndarray:
    """Cov((A^k)_ij, (A^k)_il) for all j, l, from overlapping walk pairs rooted at i."""
    guards = guards or DEFAULT_CONFIG.guards
    scan = _prepare_scan(spec, labels, i, 2, k, guards)
    n = spec.n

    def work(b: int) -> Tuple[np.ndarray, np.ndarray]:
        T, EE = _overlapping(scan, b)
        if not T.shape[0]:
            return np.empty((0, 2), dtype=np.int64), np.empty(0)
        return scan.table.ends[T], _rho1(scan, T, EE)

    cov = np.zeros((n, n))
    for ends, values in run_trials(work, scan.chunks, threads):
        np.add.at(cov, (ends[:, 0], ends[:, 1]), values)
    return cov


# -----------------------------------------------------------------------------
# single sequences
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class RhoTerms:
    rho1: float
    rho2: float
    rho: float


def _walk_expectation(EA: BlockMatrix, edges) -> float:
    out = 1.0
    for a, b in edges:
        out *= EA.entry(a, b)
    return out


def rho_terms(ws: WalkSequence, spec: ModelSpec, labels: LabelAssignment, m: int) -> RhoTerms:
    EA = expected_adjacency(spec, labels)
    r = ws.r
    # inclusion-exclusion of prod_s (A_{w_s} - E[A_{w_s}]); a walk sharing no edge cancels to 0
    single = [_walk_expectation(EA, w.unique_edges) for w in ws.walks]
    rho1 = 0.0
    for mask in range(1 << r):
        inside = [ws.walks[s].unique_edges for s in range(r) if mask >> s & 1]
        rest = [single[s] for s in range(r) if not mask >> s & 1]
        joint = _walk_expectation(EA, frozenset().union(*inside)) if inside else 1.0
        rho1 += (-1.0) ** len(rest) * joint * math.prod(rest)
    rho2 = 1.0
    for j, a in Counter(w.endpoint for w in ws.walks).items():
        mean = spec.mu[m, labels.class_of(j)]
        rho2 *= float(noise_raw_moment(spec.noise, mean, spec.sigma, a))
    return RhoTerms(rho1, rho2, rho1 * rho2)


@dataclass(frozen=True)
class RhoControl:
    rho1: float
    rho2: float
    rho1_bound: float
    rho1_pmax_bound: float
    rho2_bound: float
    satisfied: bool


def rho_control(ws: WalkSequence, spec: ModelSpec, labels: LabelAssignment, m: int,
                C1: Optional[float] = None) -> RhoControl:
    """|rho1| <= 2^r E[A_w] <= 2^r p_max^t and |rho2| <= (2 max{C1 sigma sqrt(r), |mu_m.|_inf})^r."""
    C1 = DEFAULT_CONFIG.universal.C1 if C1 is None else C1
    terms = rho_terms(ws, spec, labels, m)
    EA = expected_adjacency(spec, labels)
    r = ws.r
    b1 = 2.0 ** r * _walk_expectation(EA, ws.unique_edges)
    b1_pmax = 2.0 ** r * spec.p_max ** ws.t
    b2 = (2.0 * max(C1 * spec.sigma * math.sqrt(r), float(np.max(np.abs(spec.mu[m]))))) ** r
    ok = holds(abs(terms.rho1), b1) and holds(b1, b1_pmax) and holds(abs(terms.rho2), b2)
    return RhoControl(terms.rho1, terms.rho2, b1, b1_pmax, b2, ok)


# -----------------------------------------------------------------------------
# Theta_hi proxy
# -----------------------------------------------------------------------------

def _elementary_symmetric(a: np.ndarray, q: int) -> float:
    e = np.zeros(q + 1)
    e[0] = 1.0
    for x in a:
        e[1:] = e[1:] + x * e[:-1]
    return float(e[q])


def theta_hi_proxy(spec: ModelSpec, labels: LabelAssignment, i: int, m: int, r: int, k: int,
                   method: str = "esp") -> float:
    """
    (r-1)!! sum over ordered distinct (r/2)-tuples j (j_q != i) of
    prod_q p_ij (1 - p_ij) (e_j^T E[A]^(k-1) M_m)^2.

    method "esp" uses (r/2)! e_{r/2}(a); "tuples" walks the tuples directly.
    """
    if r < 2 or r % 2:
        raise ConfigError(f"the Theta_hi proxy needs an even r >= 2, got {r}")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    EA = expected_adjacency(spec, labels)
    g = EA.power(k - 1).matvec(spec.mu[m, labels.y].astype(float))
    p = EA.row(i)
    a = p * (1.0 - p) * g ** 2
    a[i] = 0.0
    q = r // 2
    if method == "esp":
        total = float(factorial(q)) * _elementary_symmetric(a, q)
    elif method == "tuples":
        others = [j for j in range(spec.n) if j != i]
        total = sum(math.prod(a[list(js)]) for js in itertools.permutations(others, q))
    else:
        raise ConfigError(f"unknown method {method!r}")
    return float(factorial2(r - 1)) * total


def proxy_gap_bound(spec: ModelSpec, m: int, r: int, k: int) -> float:
    """(r-1)!! t_*^2 |mu_m.|_inf^r p_max nu^(t_* - 1)."""
    t_star = r * (2 * k - 1) // 2
    mu_inf = float(np.max(np.abs(spec.mu[m])))
    return float(factorial2(r - 1)) * t_star ** 2 * mu_inf ** r * spec.p_max * spec.nu_n ** (t_star - 1)


def proxy_coverage(n: int, r: int, k: int) -> Dict[str, float]:
    """|N_*(Gamma, j)| / |W(Gamma, j)| against 1 - t_*^2 / n."""
    if r < 2 or r % 2:
        raise ConfigError(f"r must be even, got {r}")
    t_star = r * (2 * k - 1) // 2
    ratio = float(ff(n - 1 - r // 2, r * k - r)) / float((n - 1) ** ((k - 1) * r))
    lower = 1.0 - t_star ** 2 / n
    return {"n": n, "r": r, "k": k, "ratio": ratio, "lower": lower, "satisfied": ratio >= lower - 1e-12}


@dataclass(frozen=True)
class ThetaReport:
    i: int
    m: int
    r: int
    k: int
    theta_hi: float
    theta_lo: float
    theta_hi_proxy: float
    proxy_gap_bound: float
    passed: bool

    @property
    def relative_gap(self) -> float:
        if self.theta_hi_proxy == 0.0:
            return 0.0 if self.theta_hi == 0.0 else math.inf
        return abs(self.theta_hi - self.theta_hi_proxy) / abs(self.theta_hi_proxy)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def theta_report(spec: ModelSpec, labels: LabelAssignment, i: int, m: int, r: int, k: int,
                 guards: Optional[Guards] = None, threads: int = 1) -> ThetaReport:
    """
    Theta_hi, Theta_lo and the proxy, judged against the proxy gap bound at
    every k. At k = 1 paired walks share their endpoint, so Theta_hi keeps a
    sigma^2 sum_j p_ij (1 - p_ij) term the proxy lacks and sigma > 0 can fail.
    """
    table = moment_decomposition(spec, labels, i, m, r, k, guards, threads)
    proxy = theta_hi_proxy(spec, labels, i, m, r, k)
    bound = proxy_gap_bound(spec, m, r, k)
    passed = holds(abs(table.theta_hi - proxy), bound)
    return ThetaReport(i, m, r, k, table.theta_hi, table.theta_lo, proxy, bound, passed)


# -----------------------------------------------------------------------------
# auxiliary moment inequalities
# -----------------------------------------------------------------------------

def check_edge_moment_inequality(spec: ModelSpec, labels: LabelAssignment, r: int, k: int,
                                 root: int = 0, guards: Optional[Guards] = None) -> InequalityRecord:
    """E[A_{w^V}] prod_{u in U} E[A_{w^u}] <= E[A_{w^(U+V)}] for every r-tuple and every U, V."""
    guards = guards or DEFAULT_CONFIG.guards
    scan = _prepare_scan(spec, labels, root, r, k, guards)
    W = scan.table.size
    T = np.stack(np.unravel_index(np.arange(scan.raw, dtype=np.int64), (W,) * r), axis=1)
    EE = scan.table.edges[T]
    c = T.shape[0]
    pw = scan.pw[T]
    joint = {}
    for mask in range(1 << r):
        inside = [s for s in range(r) if mask >> s & 1]
        joint[mask] = (_edge_products(scan.p_flat, _unique_rows(EE[:, inside, :].reshape(c, -1)))
                       if inside else np.ones(c))

    worst, violations, checks = -math.inf, 0, 0
    for U in range(1 << r):
        left = np.prod(pw[:, [s for s in range(r) if U >> s & 1]], axis=1)
        for V in range(1 << r):
            lhs = joint[V] * left
            rhs = joint[U | V]
            violations += int(np.count_nonzero(lhs > rhs * (1.0 + 1e-12)))
            worst = max(worst, float(np.max(lhs - rhs)))
            checks += c
    return InequalityRecord("edge-moment", worst, 0.0, -worst, violations == 0,
                            {"r": r, "k": k, "n": spec.n, "checks": checks, "violations": violations})


def _abs_moment(loc: float, scale: float, a: float) -> float:
    return float(stats.norm.expect(lambda x: abs(x) ** a, loc=loc, scale=scale))


def check_mixed_moment_inequality(seed: int, cases: int = 100, max_vars: int = 4) -> InequalityRecord:
    """prod_i E|X_i|^(a_i) <= max_i E|X_i|^a (a = sum a_i) on random Gaussians mu + sigma Z."""
    rng = stream(seed, "mixed-moment")
    worst = 0.0
    for _ in range(cases):
        size = int(rng.integers(2, max_vars + 1))
        locs = rng.normal(0.0, 2.0, size)
        scales = rng.uniform(0.2, 2.0, size)
        weights = rng.uniform(0.2, 3.0, size)
        a = float(weights.sum())
        lhs = math.prod(_abs_moment(locs[j], scales[j], weights[j]) for j in range(size))
        rhs = max(_abs_moment(locs[j], scales[j], a) for j in range(size))
        worst = max(worst, lhs / rhs)
    return InequalityRecord("mixed-moment", worst, 1.0, 1.0 - worst, worst <= 1.0 + 1e-6,
                            {"cases": cases, "max_vars": max_vars})


# =============================================================================
# SECTION 6: SAMPLED AND EXACT DEVIATION MOMENTS
# =============================================================================

@dataclass(frozen=True)
class DeltaMoment:
    i: int
    m: int
    r: int
    k: int
    trials: int
    mean: float
    stderr: float
    ci_low: float
    ci_high: float

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def mc_delta_moments(spec: ModelSpec, labels: LabelAssignment, i: int, m: int, r: int, k: int,
                     trials: int, seed: int, threads: int = 1, batch: int = 4000,
                     confidence: float = 0.99, guards: Optional[Guards] = None) -> DeltaMoment:
    """Monte Carlo E[Delta_im^r] on dense sampled graphs, with a bootstrap CI."""
    guards = guards or DEFAULT_CONFIG.guards
    if r < 2 or r % 2:
        raise ConfigError(f"r must be even, got {r}")
    if trials < 1000:
        raise ConfigError(f"use at least 1000 trials, got {trials}")
    n = spec.n
    if n > guards.mc_dense_max_n:
        raise GuardExceeded(f"dense Monte Carlo limited to n <= {guards.mc_dense_max_n}, got {n}")
    if not 0 <= i < n or not 0 <= m < spec.d:
        raise ConfigError(f"(i, m) = ({i}, {m}) out of range")

    iu = np.triu_indices(n, 1)
    p_up = expected_adjacency(spec, labels).dense()[iu]
    row = expected_power(spec, labels, k, guards).row(i)
    means = spec.mu[m, labels.y].astype(float)
    batch = max(1, min(batch, 2_000_000 // (n * n)))
    batches = -(-trials // batch)

    def draw(b: int) -> np.ndarray:
        size = min(batch, trials - b * batch)
        rng = stream(seed, "mc-delta", b)
        A = np.zeros((size, n, n))
        A[:, iu[0], iu[1]] = rng.random((size, p_up.size)) < p_up
        A += A.transpose(0, 2, 1)
        x = np.broadcast_to(means, (size, n)).copy()
        if spec.sigma > 0.0:
            x += draw_noise(spec.noise, rng, (size, n), spec.sigma)
        v = x
        for _ in range(k):
            v = np.einsum("bij,bj->bi", A, v)
        return (v[:, i] - x @ row) ** r

    values = np.concatenate(run_trials(draw, batches, threads))
    mean, se = mean_se(values)
    lo, hi = bootstrap_mean_ci(values, confidence, rng=stream(seed, "bootstrap", i, m, r, k))
    return DeltaMoment(i, m, r, k, trials, mean, se, lo, hi)


@dataclass(frozen=True)
class DevMoment:
    """E[Dev^2] = n^-1 sum_{i,m} (E Delta_im^2 + E (Delta^eps_im)^2), per class and overall."""
    k: int
    graph_term: float
    feature_term: float
    total: float
    per_class: Tuple[float, ...]


def exact_dev_second_moment(spec: ModelSpec, labels: LabelAssignment, k: int,
                            guards: Optional[Guards] = None, threads: int = 1) -> DevMoment:
    guards = guards or DEFAULT_CONFIG.guards
    check_consistent(spec, labels)
    EAk = expected_power(spec, labels, k, guards)
    feature = spec.d * spec.sigma ** 2 * EAk.row_norms() ** 2
    graph = np.zeros(labels.L)
    if k >= 1:
        M = feature_means(spec, labels)
        for ell, anchor in enumerate(labels.anchors()):
            cov = walk_pair_covariance(spec, labels, int(anchor), k, guards, threads)
            graph[ell] = float(np.sum(M * (cov @ M))) + spec.d * spec.sigma ** 2 * float(np.trace(cov))
    props = labels.proportions
    per_class = graph + feature
    return DevMoment(
        k=k,
        graph_term=float(props @ graph),
        feature_term=float(props @ feature),
        total=float(props @ per_class),
        per_class=tuple(float(x) for x in per_class),
    )
