"""Weighted undirected graphs, exact distances and hop-limited distances.

Topology is fixed at construction; neighbouring inputs differ only in the
weight vector. Weights live in a float64 array aligned with the edge
endpoints ``u[i] -- v[i]``; ``+inf`` marks unreachable pairs everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .mechanisms import laplace_noise

INF = math.inf


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=np.int64).reshape(-1)
        v = np.asarray(self.v, dtype=np.int64).reshape(-1)
        w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if not (u.shape == v.shape == w.shape):
            raise ValueError("edge arrays must have equal length")
        if u.size:
            if u.min() < 0 or v.min() < 0 or u.max() >= self.n or v.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(u == v):
                raise ValueError("self-loops are not allowed")
            lo, hi = np.minimum(u, v), np.maximum(u, v)
            keys = lo * self.n + hi
            if np.unique(keys).size != keys.size:
                raise ValueError("duplicate edges are not allowed")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        for name, arr in (("u", u), ("v", v), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> WeightedGraph:
        edges = list(edges)
        if not edges:
            return cls(n, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
        u, v, w = zip(*edges)
        return cls(n, np.array(u), np.array(v), np.array(w, dtype=float))

    @property
    def m(self) -> int:
        return int(self.w.size)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.u, self.v, self.w)]

    def with_weights(self, w: np.ndarray) -> WeightedGraph:
        """Same topology, new weights (which may be negative)."""
        return WeightedGraph(self.n, self.u, self.v, np.asarray(w, dtype=float))

    def adjacency(self) -> sp.csr_matrix:
        # Explicit zeros are kept by csgraph as zero-weight edges.
        return sp.csr_matrix((self.w, (self.u, self.v)), shape=(self.n, self.n))

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        k, _ = connected_components(self.adjacency(), directed=False)
        return k == 1


def exact_apsd(g: WeightedGraph) -> np.ndarray:
    """Exact all-pairs distances by repeated Dijkstra; ``inf`` if unreachable."""
    if g.m and g.w.min() < 0:
        raise ValueError("exact_apsd needs nonnegative weights")
    if g.n == 0:
        return np.zeros((0, 0))
    if g.m == 0:
        d = np.full((g.n, g.n), INF)
        np.fill_diagonal(d, 0.0)
        return d
    return shortest_path(g.adjacency(), method="D", directed=False)


def single_source_distances(g: WeightedGraph, sources: Iterable[int]) -> np.ndarray:
    """Rows of the exact distance matrix for the given sources only."""
    sources = np.asarray(list(sources), dtype=np.int64)
    if g.m and g.w.min() < 0:
        raise ValueError("Dijkstra needs nonnegative weights")
    if g.m == 0:
        d = np.full((sources.size, g.n), INF)
        d[np.arange(sources.size), sources] = 0.0
        return d
    return shortest_path(g.adjacency(), method="D", directed=False, indices=sources)


@dataclass(frozen=True, eq=False)
class HopLimitedDistances:
    t: int
    matrix: np.ndarray


@numba.njit(cache=True)
def _hop_dp(src, dst, wt, n, t):  # pragma: no cover - compiled
    cur = np.full((n, n), np.inf)
    for i in range(n):
        cur[i, i] = 0.0
    nxt = cur.copy()
    for _ in range(t):
        nxt[:, :] = cur
        for e in range(src.shape[0]):
            a = src[e]
            b = dst[e]
            we = wt[e]
            row_a = nxt[a]
            row_b = cur[b]
            for j in range(n):
                c = we + row_b[j]
                if c < row_a[j]:
                    row_a[j] = c
        cur, nxt = nxt, cur
    return cur


def t_hop_distances(g: WeightedGraph, t: int) -> HopLimitedDistances:
    """Minimum weight over walks with at most ``t`` edges.

    Runs the recurrence ``d_i(u, x) = min(d_{i-1}(u, x),
    min_{(u,y) in E} w(u,y) + d_{i-1}(y, x))``. Negative weights are fine:
    the hop bound keeps every value finite, though walks may revisit an
    edge when that lowers the total.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    src = np.concatenate([g.u, g.v])
    dst = np.concatenate([g.v, g.u])
    wt = np.concatenate([g.w, g.w])
    return HopLimitedDistances(int(t), _hop_dp(src, dst, wt, g.n, int(t)))


def perturb_weights(g: WeightedGraph, epsilon: float, rng: np.random.Generator) -> WeightedGraph:
    """Add independent ``Lap(1/epsilon)`` noise to every weight; no clamping."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return g.with_weights(g.w + laplace_noise(1.0 / epsilon, g.m, rng))


# --- generators -----------------------------------------------------------

def parse_weight_law(spec: str) -> tuple[str, tuple[float, ...]]:
    """Parse ``const:c`` or ``uniform:a,b``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    try:
        args = tuple(float(x) for x in rest.split(",") if x.strip())
    except ValueError as exc:
        raise ValueError(f"bad weight law {spec!r}") from exc
    if kind in ("const", "constant") and len(args) == 1:
        return "constant", args
    if kind == "uniform" and len(args) == 2:
        return "uniform", args
    raise ValueError(f"bad weight law {spec!r}; use const:c or uniform:a,b")


def _draw_weights(law: tuple[str, tuple[float, ...]], m: int, rng: np.random.Generator) -> np.ndarray:
    kind, args = law
    if kind == "constant":
        if args[0] < 0:
            raise ValueError("weights must be nonnegative")
        return np.full(m, args[0])
    a, b = args
    if a > b or a < 0:
        raise ValueError("uniform weights need 0 <= a <= b")
    return rng.uniform(a, b, m)


def _largest_component(n: int, u: np.ndarray, v: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    if n == 0:
        return 0, u, v
    adj = sp.csr_matrix((np.ones(u.size), (u, v)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    counts = np.bincount(labels)
    keep = labels == np.argmax(counts)
    new_id = np.cumsum(keep) - 1
    mask = keep[u] & keep[v]
    return int(keep.sum()), new_id[u[mask]], new_id[v[mask]]


def generate(
    kind: str,
    n: int,
    weights: str | tuple[str, tuple[float, ...]],
    rng: np.random.Generator,
    p: float | None = None,
) -> WeightedGraph:
    """Build a test graph.

    ``kind`` is one of ``path``, ``cycle``, ``grid`` (a ``⌊√n⌋ × ⌈n/⌊√n⌋⌉``
    lattice truncated to ``n`` vertices), ``erdos_renyi`` (needs ``p``) or
    ``complete``. Erdős–Rényi graphs are cut down to their largest connected
    component, so the vertex count can be smaller than ``n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    law = parse_weight_law(weights) if isinstance(weights, str) else weights
    kind = kind.lower().replace("-", "_")
    if kind == "path":
        u = np.arange(n - 1)
        v = u + 1
    elif kind == "cycle":
        if n < 3:
            raise ValueError("a cycle needs n >= 3")
        u = np.arange(n)
        v = (u + 1) % n
    elif kind == "grid":
        cols = max(1, math.isqrt(n))
        idx = np.arange(n)
        r, c = idx // cols, idx % cols
        right = idx[(c + 1 < cols) & (idx + 1 < n)]
        down = idx[idx + cols < n]
        u = np.concatenate([right, down])
        v = np.concatenate([right + 1, down + cols])
    elif kind == "complete":
        u, v = np.triu_indices(n, k=1)
    elif kind in ("erdos_renyi", "er", "gnp"):
        if p is None or not 0.0 <= p <= 1.0:
            raise ValueError("erdos_renyi needs p in [0, 1]")
        iu, iv = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < p
        n, u, v = _largest_component(n, iu[keep], iv[keep])
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    return WeightedGraph(n, u, v, _draw_weights(law, u.size, rng))


# --- text formats ---------------------------------------------------------

def write_graph(g: WeightedGraph, path: str | Path) -> None:
    lines = [f"{g.n} {g.m}"]
    lines += [f"{a} {b} {c:.17g}" for a, b, c in zip(g.u.tolist(), g.v.tolist(), g.w.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path: str | Path) -> WeightedGraph:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: header must be 'n m'")
    n, m = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != m:
        raise ValueError(f"{path}: header says {m} edges, found {len(body)}")
    edges = []
    for row in body:
        if len(row) != 3:
            raise ValueError(f"{path}: bad edge line {' '.join(row)!r}")
        w = float(row[2])
        if not math.isfinite(w):
            raise ValueError(f"{path}: non-finite weight")
        edges.append((int(row[0]), int(row[1]), w))
    return WeightedGraph.from_edges(n, edges)


def write_matrix(matrix: np.ndarray, path: str | Path) -> None:
    """n lines of n space-separated decimals (``inf`` for unreachable)."""
    with open(path, "w") as fh:
        for row in np.asarray(matrix):
            fh.write(" ".join(f"{x:.17g}" for x in row.tolist()) + "\n")


def read_matrix(path: str | Path) -> np.ndarray:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    return np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(len(rows), -1)
