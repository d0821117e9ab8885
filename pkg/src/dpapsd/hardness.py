"""Lower-bound instances: point-line systems and the linear-query reduction.

A planar point-line system (PPLS) is stored in compressed form: an
``(N, 2)`` integer point array plus CSR arrays ``line_ptr``/``line_idx``
listing each line's point indices in lexicographic order of the points.
Integer grids stand in for the extremal constructions, and every line is
maximal (it lists all system points it contains).

The reduction splits each point ``p`` into ``p_in -- p_out`` carrying the
private bit ``z_p`` and joins ``p_out -- q_in`` for each metrization edge
with ``p ≺ q``. A line's unique shortest path then has weight
``offset + <row, z>``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .graph import WeightedGraph, exact_apsd

# Largest column count accepted by the exhaustive discrepancy search.
BRUTE_FORCE_MAX_N = 18


@dataclass(frozen=True, eq=False)
class PointLineSystem:
    points: np.ndarray
    line_ptr: np.ndarray
    line_idx: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        ptr = np.asarray(self.line_ptr, dtype=np.int64)
        idx = np.asarray(self.line_idx, dtype=np.int64)
        if ptr.size == 0 or ptr[0] != 0 or ptr[-1] != idx.size or np.any(np.diff(ptr) < 0):
            raise ValueError("malformed line pointer array")
        if idx.size and (idx.min() < 0 or idx.max() >= len(pts)):
            raise ValueError("line refers to a missing point")
        for name, arr in (("points", pts), ("line_ptr", ptr), ("line_idx", idx)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_lines(cls, points, lines) -> PointLineSystem:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        rank = lexicographic_rank(pts)
        ordered = [sorted(set(int(i) for i in ln), key=lambda i: rank[i]) for ln in lines]
        ptr = np.zeros(len(ordered) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(ln) for ln in ordered])
        idx = np.array([i for ln in ordered for i in ln], dtype=np.int64)
        return cls(pts, ptr, idx)

    @property
    def N(self) -> int:
        return int(self.points.shape[0])

    @property
    def D(self) -> int:
        return int(self.line_ptr.size - 1)

    def line(self, j: int) -> np.ndarray:
        return self.line_idx[self.line_ptr[j] : self.line_ptr[j + 1]]

    @property
    def lines(self) -> list[list[int]]:
        return [self.line(j).tolist() for j in range(self.D)]

    @property
    def line_sizes(self) -> np.ndarray:
        return np.diff(self.line_ptr)

    def validate(self) -> None:
        """Check sizes, collinearity, distinctness and maximality."""
        sizes = self.line_sizes
        if np.any(sizes < 2):
            raise ValueError("every line needs at least two points")
        seen = set()
        for j in range(self.D):
            ln = self.line(j)
            key = tuple(sorted(ln.tolist()))
            if key in seen:
                raise ValueError(f"line {j} is listed twice")
            seen.add(key)
            p0, p1 = self.points[ln[0]], self.points[ln[1]]
            d = p1 - p0
            rel = self.points - p0
            on = rel[:, 0] * d[1] - rel[:, 1] * d[0] == 0
            if not np.all(on[ln]):
                raise ValueError(f"line {j} is not collinear")
            if on.sum() != ln.size:
                raise ValueError(f"line {j} omits a collinear system point")


def lexicographic_rank(points: np.ndarray) -> np.ndarray:
    order = np.lexsort((points[:, 1], points[:, 0]))
    rank = np.empty(len(points), dtype=np.int64)
    rank[order] = np.arange(len(points))
    return rank


def _group_by_direction(points: np.ndarray, directions) -> tuple[np.ndarray, np.ndarray]:
    """All maximal collinear groups (≥ 2 points) along the given directions."""
    rank = lexicographic_rank(points)
    sizes: list[np.ndarray] = []
    members: list[np.ndarray] = []
    for a, b in directions:
        key = b * points[:, 0] - a * points[:, 1]
        order = np.lexsort((rank, key))
        ks = key[order]
        cut = np.flatnonzero(np.diff(ks)) + 1
        starts = np.concatenate([[0], cut])
        lens = np.diff(np.concatenate([starts, [ks.size]]))
        keep = lens >= 2
        if not keep.any():
            continue
        mask = np.repeat(keep, lens)
        members.append(order[mask])
        sizes.append(lens[keep])
    if not sizes:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    lens = np.concatenate(sizes)
    ptr = np.zeros(lens.size + 1, dtype=np.int64)
    np.cumsum(lens, out=ptr[1:])
    return ptr, np.concatenate(members).astype(np.int64)


def _primitive_directions(diffs: np.ndarray) -> list[tuple[int, int]]:
    dx, dy = diffs[:, 0], diffs[:, 1]
    g = np.gcd(np.abs(dx), np.abs(dy))
    dx, dy = dx // g, dy // g
    flip = (dx < 0) | ((dx == 0) & (dy < 0))
    dx = np.where(flip, -dx, dx)
    dy = np.where(flip, -dy, dy)
    uniq = np.unique(np.stack([dx, dy], axis=1), axis=0)
    return [(int(a), int(b)) for a, b in uniq]


def collinear_groups(points) -> tuple[np.ndarray, np.ndarray]:
    """Every maximal line through ≥ 2 of ``points`` as CSR arrays.

    Directions come from all pairwise differences, so this is O(N²) and
    meant for small systems; :func:`grid_ppls` enumerates grid directions
    directly.
    """
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(pts) < 2:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    i, j = np.triu_indices(len(pts), k=1)
    return _group_by_direction(pts, _primitive_directions(pts[j] - pts[i]))


def grid_ppls(m: int) -> PointLineSystem:
    """The ``m × m`` integer grid with all its lines through ≥ 2 points.

    Points are indexed ``x*m + y`` (lexicographic order). Lines are listed
    direction by direction (primitive ``(a, b)`` sorted), then by offset.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    xs, ys = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.int64)
    dirs = [
        (a, b)
        for a in range(0, m)
        for b in range(-(m - 1), m)
        if (a > 0 or b > 0) and math.gcd(a, abs(b)) == 1
    ]
    ptr, idx = _group_by_direction(pts, dirs)
    return PointLineSystem(pts, ptr, idx)


def incidence_matrix(ppls: PointLineSystem, sparse: bool = False):
    """0/1 matrix with rows = lines, columns = points."""
    data = np.ones(ppls.line_idx.size, dtype=np.int8)
    mat = sp.csr_matrix((data, ppls.line_idx, ppls.line_ptr), shape=(ppls.D, ppls.N))
    return mat if sparse else mat.toarray()


# --- PPLS text format -----------------------------------------------------

def write_ppls(ppls: PointLineSystem, path: str | Path) -> None:
    out = [f"{ppls.N} {ppls.D}"]
    out += [f"{x} {y}" for x, y in ppls.points.tolist()]
    out += [" ".join(map(str, ln)) for ln in ppls.lines]
    Path(path).write_text("\n".join(out) + "\n")


def read_ppls(path: str | Path) -> PointLineSystem:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    N, D = int(rows[0][0]), int(rows[0][1])
    if len(rows) != 1 + N + D:
        raise ValueError(f"{path}: expected {N} points and {D} lines")
    pts = [(int(r[0]), int(r[1])) for r in rows[1 : 1 + N]]
    lines = [[int(x) for x in r] for r in rows[1 + N :]]
    return PointLineSystem.from_lines(pts, lines)


# --- path systems and metrization -----------------------------------------

@dataclass(frozen=True, eq=False)
class OrderedPathSystem:
    n_vertices: int
    paths: list[np.ndarray]
    rank: np.ndarray  # rank[u] is u's position in the total order

    def respects_order(self) -> bool:
        return all(np.all(np.diff(self.rank[p]) > 0) and np.unique(p).size == p.size for p in self.paths)

    def incidence(self) -> np.ndarray:
        A = np.zeros((len(self.paths), self.n_vertices), dtype=np.int64)
        for i, p in enumerate(self.paths):
            A[i, p] = 1
        return A


def path_system_from_ppls(ppls: PointLineSystem) -> OrderedPathSystem:
    rank = lexicographic_rank(ppls.points)
    paths = [ln[np.argsort(rank[ln], kind="stable")].copy() for ln in (ppls.line(j) for j in range(ppls.D))]
    return OrderedPathSystem(ppls.N, paths, rank)


@dataclass(frozen=True, eq=False)
class Metrization:
    H: WeightedGraph
    scale: float
    gap: float  # minimum (second simple path - path) over all paths, after scaling
    path_weights: np.ndarray


def _adjacency(g: WeightedGraph, drop: int | None = None) -> sp.csr_matrix:
    keep = np.ones(g.m, dtype=bool)
    if drop is not None:
        keep[drop] = False
    return sp.csr_matrix((g.w[keep], (g.u[keep], g.v[keep])), shape=(g.n, g.n))


def path_gaps(H: WeightedGraph, paths: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per path: its weight, the exact shortest distance, and the weight of
    the best simple alternative (found by deleting each path edge in turn)."""
    edge_of = {}
    for e, (a, b) in enumerate(zip(H.u.tolist(), H.v.tolist())):
        edge_of[(a, b)] = e
        edge_of[(b, a)] = e
    weights = np.empty(len(paths))
    shortest = np.empty(len(paths))
    second = np.empty(len(paths))
    full = _adjacency(H)
    for i, p in enumerate(paths):
        es = [edge_of[(int(a), int(b))] for a, b in zip(p[:-1], p[1:])]
        weights[i] = math.fsum(H.w[es])
        a, b = int(p[0]), int(p[-1])
        shortest[i] = dijkstra(full, directed=False, indices=a)[b]
        second[i] = min(dijkstra(_adjacency(H, e), directed=False, indices=a)[b] for e in es)
    return weights, shortest, second


class MetrizationError(RuntimeError):
    pass


def metrize(ppls: PointLineSystem, gap_target: float | None = None, safety: float = 1.01) -> Metrization:
    """Euclidean visibility graph on the points, rescaled so that every
    line's path beats its best simple alternative by ``gap_target``
    (default ``N + 1``)."""
    N = ppls.N
    gap_target = float(N + 1) if gap_target is None else float(gap_target)
    ptr, idx = collinear_groups(ppls.points)
    us, vs = [], []
    for j in range(ptr.size - 1):
        grp = idx[ptr[j] : ptr[j + 1]]
        us.extend(grp[:-1].tolist())
        vs.extend(grp[1:].tolist())
    us, vs = np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)
    d = ppls.points[vs] - ppls.points[us]
    H = WeightedGraph(N, us, vs, np.hypot(d[:, 0], d[:, 1]))
    system = path_system_from_ppls(ppls)
    weights, shortest, second = path_gaps(H, system.paths)
    if np.any(shortest < weights - 1e-9):
        raise MetrizationError("some line is not a shortest path in the visibility graph")
    g = float(np.min(second - weights)) if len(weights) else math.inf
    if not g > 1e-12:
        raise MetrizationError(f"some line is not the unique shortest path (gap {g})")
    scale = safety * gap_target / g if math.isfinite(g) else 1.0
    scale = max(scale, 1.0)
    Hs = H.with_weights(H.w * scale)
    weights, _, second = path_gaps(Hs, system.paths)
    gap = float(np.min(second - weights)) if len(weights) else math.inf
    if gap < gap_target - 1e-9:
        raise MetrizationError(f"post-scaling gap {gap} below target {gap_target}")
    return Metrization(Hs, scale, gap, weights)


# --- reduction ------------------------------------------------------------

@dataclass(frozen=True)
class PathEntry:
    pi_index: int
    u_in: int
    v_out: int
    offset: float
    row: tuple[int, ...]  # point indices on the path

    def query(self, z: np.ndarray) -> float:
        return float(np.sum(z[list(self.row)]))


@dataclass(eq=False)
class ReductionInstance:
    graph: WeightedGraph
    z: np.ndarray
    paths: list[PathEntry]
    n_points: int

    def to_json(self) -> list[dict]:
        table = []
        for p in self.paths:
            row = [0] * self.n_points
            for i in p.row:
                row[i] = 1
            table.append(
                {"pi_index": p.pi_index, "u_in": p.u_in, "v_out": p.v_out, "offset": float(f"{p.offset:.17g}"), "row": row}
            )
        return table

    def write_sidecar(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")


def split_in(u: int) -> int:
    return 2 * u


def split_out(u: int) -> int:
    return 2 * u + 1


def _as_bits(z, n: int) -> np.ndarray:
    z = np.asarray(z)
    if z.shape != (n,):
        raise ValueError(f"z must have length {n}")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("z must be a 0/1 vector")
    return z.astype(np.int64)


def reduce_to_apsd(system: OrderedPathSystem, metrization: Metrization, z) -> ReductionInstance:
    """Vertex-splitting graph on ``2|U|`` vertices with split weights ``z``.

    Vertex ``u`` becomes ``2u`` (in) and ``2u + 1`` (out). Split edges come
    first, in vertex order, then crossing edges in metrization-edge order.
    """
    H = metrization.H
    N = system.n_vertices
    z = _as_bits(z, N)
    rank = system.rank
    lo = np.where(rank[H.u] < rank[H.v], H.u, H.v)
    hi = np.where(rank[H.u] < rank[H.v], H.v, H.u)
    u = np.concatenate([2 * np.arange(N), 2 * lo + 1])
    v = np.concatenate([2 * np.arange(N) + 1, 2 * hi])
    w = np.concatenate([z.astype(float), H.w])
    G = WeightedGraph(2 * N, u, v, w)
    weight_of = {}
    for a, b, c in zip(H.u.tolist(), H.v.tolist(), H.w.tolist()):
        weight_of[(a, b)] = weight_of[(b, a)] = c
    entries = []
    for i, p in enumerate(system.paths):
        offset = math.fsum(weight_of[(int(a), int(b))] for a, b in zip(p[:-1], p[1:]))
        entries.append(PathEntry(i, split_in(int(p[0])), split_out(int(p[-1])), offset, tuple(int(x) for x in p)))
    return ReductionInstance(G, z, entries, N)


def instantiate(instance: ReductionInstance, z) -> ReductionInstance:
    """Same reduction with a different private vector."""
    z = _as_bits(z, instance.n_points)
    w = instance.graph.w.copy()
    w[: instance.n_points] = z
    return ReductionInstance(instance.graph.with_weights(w), z, instance.paths, instance.n_points)


@dataclass
class ReductionCheck:
    ok: bool
    failures: list[tuple[int, float, float]] = field(default_factory=list)  # (pi, observed, expected)

    def __bool__(self) -> bool:
        return self.ok


def verify_reduction(instance: ReductionInstance, z=None, tol: float = 1e-9) -> ReductionCheck:
    """Check ``dist(u_in, v_out) - offset == <row, z>`` for every path."""
    z = instance.z if z is None else _as_bits(z, instance.n_points)
    d = exact_apsd(instance.graph)
    fails = []
    for p in instance.paths:
        got = d[p.u_in, p.v_out] - p.offset
        want = p.query(z)
        if not math.isclose(got, want, rel_tol=0.0, abs_tol=tol * max(1.0, abs(p.offset))):
            fails.append((p.pi_index, float(got), want))
    return ReductionCheck(not fails, fails)


def linear_query_error(
    apsd_algorithm: Callable[[WeightedGraph, np.random.Generator], object],
    instance: ReductionInstance,
    rng: np.random.Generator,
    z=None,
) -> float:
    """``max_π |est(u_in, v_out) - offset - <row, z>|`` for one private run.

    ``apsd_algorithm(graph, rng)`` returns a matrix or an object with a
    ``matrix`` attribute.
    """
    z = instance.z if z is None else _as_bits(z, instance.n_points)
    inst = instance if z is instance.z else instantiate(instance, z)
    out = apsd_algorithm(inst.graph, rng)
    est = np.asarray(getattr(out, "matrix", out))
    errs = [abs(est[p.u_in, p.v_out] - p.offset - p.query(z)) for p in inst.paths]
    return float(max(errs)) if errs else 0.0


# --- exact discrepancy ----------------------------------------------------

def brute_force_disc(A, gamma: float = 1.0) -> float:
    """Exact ``min ||A z||_∞`` over ``z ∈ {-1,0,1}^N`` with ``||z||_1 >= γN``.

    Depth-first search with a row-wise bound; only for ``N <= 18``.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    if A.ndim != 2:
        raise ValueError("A must be a matrix")
    D, N = A.shape
    if N > BRUTE_FORCE_MAX_N:
        raise ValueError(
            f"brute force handles at most {BRUTE_FORCE_MAX_N} columns (got {N}); "
            "use dpapsd.discrepancy.full_coloring / gamma_coloring instead"
        )
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if N == 0 or D == 0:
        return 0.0
    need = math.ceil(gamma * N - 1e-12)
    max_zeros = N - need
    order = sorted(range(N), key=lambda c: -np.count_nonzero(A[:, c]))
    cols = [[(r, float(A[r, c])) for r in np.flatnonzero(A[:, c])] for c in order]
    sums = [0.0] * D
    remaining = [float(x) for x in np.abs(A).sum(axis=1)]
    best = [math.inf]

    def lower_bound() -> float:
        return max(abs(s) - rem for s, rem in zip(sums, remaining))

    def dfs(pos: int, zeros: int, signed: bool) -> None:
        if pos == N:
            val = max(abs(s) for s in sums)
            if val < best[0]:
                best[0] = val
            return
        if lower_bound() >= best[0]:
            return
        entries = cols[pos]
        for r, a in entries:
            remaining[r] -= abs(a)
        # The first nonzero may be fixed to +1 by the z -> -z symmetry.
        choices = (1, -1, 0) if signed else (1, 0)
        for val in choices:
            if val == 0:
                if zeros >= max_zeros:
                    continue
                dfs(pos + 1, zeros + 1, signed)
            else:
                for r, a in entries:
                    sums[r] += val * a
                dfs(pos + 1, zeros, True)
                for r, a in entries:
                    sums[r] -= val * a
            if best[0] == 0:
                break
        for r, a in entries:
            remaining[r] += abs(a)

    dfs(0, 0, False)
    return float(best[0])


def triple_collinear_lines(points) -> set[frozenset[int]]:
    """Independent O(N³) oracle: maximal collinear sets of size ≥ 2."""
    pts = [tuple(p) for p in np.asarray(points).tolist()]
    out = set()
    for i, j in itertools.combinations(range(len(pts)), 2):
        (x0, y0), (x1, y1) = pts[i], pts[j]
        on = frozenset(
            k for k, (x, y) in enumerate(pts) if (x - x0) * (y1 - y0) - (y - y0) * (x1 - x0) == 0
        )
        out.add(on)
    return out
