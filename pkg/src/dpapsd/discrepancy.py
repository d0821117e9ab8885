"""Constructive discrepancy: partial coloring, full and γ-colorings.

The partial-coloring engine is a constrained random walk. Each step draws
a Gaussian direction over the free coordinates, projects out the span of
the tight constraints, and moves by at most ``step`` while never crossing
a cube face or a constraint boundary; whatever it hits becomes frozen or
tight. Results are verified against both postconditions before they are
returned, so the walk itself carries no correctness burden.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .hardness import PointLineSystem, incidence_matrix

# Values within this distance of a boundary count as on it.
_TIGHT = 1e-9
# Relative tolerance used when verifying postconditions.
_VERIFY_TOL = 1e-7
DEFAULT_STEP = 0.05
DEFAULT_RESIDUAL = 8


class PartialColoringError(RuntimeError):
    """Every retry failed; ``best`` holds the attempt with most frozen coordinates."""

    def __init__(self, message: str, best: Coloring | None):
        super().__init__(message)
        self.best = best


class InfeasibleProblemError(ValueError):
    pass


@dataclass(eq=False)
class Coloring:
    x: np.ndarray
    frozen: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.frozen = np.asarray(self.frozen, dtype=bool)
        if np.any(np.abs(self.x) > 1 + 1e-12):
            raise ValueError("coloring leaves the cube")
        if np.any(np.abs(np.abs(self.x[self.frozen]) - 1) > 1e-12):
            raise ValueError("frozen coordinates must be exactly ±1")


@dataclass(eq=False)
class PartialColoringProblem:
    """Constraint rows ``vectors`` (dense or sparse, m × n), thresholds ``c``
    and a start point in the cube. ``unsquared`` switches the feasibility
    test from ``exp(-c²/16)`` to ``exp(-c/16)``."""

    vectors: np.ndarray | sp.spmatrix
    c: np.ndarray
    start: np.ndarray
    unsquared: bool = False

    def __post_init__(self) -> None:
        self.start = np.asarray(self.start, dtype=float).reshape(-1)
        n = self.start.size
        V = self.vectors
        if not sp.issparse(V):
            V = np.asarray(V, dtype=float).reshape(-1, n)
        V = sp.csr_matrix(V, dtype=float)
        if V.shape[1] != n:
            raise ValueError("constraint vectors must match the start point's length")
        self.vectors = V
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.size != V.shape[0]:
            raise ValueError("need one threshold per constraint")
        if np.any(self.c <= 0):
            raise ValueError("thresholds must be positive")
        if np.any(np.abs(self.start) > 1):
            raise ValueError("start point must lie in [-1, 1]^n")

    @property
    def n(self) -> int:
        return int(self.start.size)

    @property
    def m(self) -> int:
        return int(self.vectors.shape[0])

    def feasibility_sum(self) -> float:
        expo = self.c if self.unsquared else self.c**2
        return math.fsum(np.exp(-expo / 16.0))

    def feasible(self) -> bool:
        return self.feasibility_sum() <= self.n / 16.0

    def norms(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.vectors.multiply(self.vectors).sum(axis=1)).ravel())


def check_partial_coloring(problem: PartialColoringProblem, x: np.ndarray, scale: float = 1.0) -> tuple[bool, bool]:
    """Postconditions (threshold bounds, at least half the coordinates at ±1)."""
    x = np.asarray(x, dtype=float)
    move = np.abs(problem.vectors @ (x - problem.start))
    bound = scale * problem.c * problem.norms()
    ok_i = bool(np.all(move <= bound + _VERIFY_TOL * np.maximum(1.0, bound)))
    ok_ii = int(np.sum(np.abs(x) == 1.0)) * 2 >= problem.n and bool(np.all(np.abs(x) <= 1.0))
    return ok_i, ok_ii


def _orthonormal_basis(M: np.ndarray) -> np.ndarray:
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    keep = sv > 1e-10 * max(1.0, sv[0])
    return U[:, keep]


def _walk(
    V: sp.csr_matrix,
    bound: np.ndarray,
    start: np.ndarray,
    rng: np.random.Generator,
    max_iters: int,
    step: float,
) -> tuple[np.ndarray, int]:
    n = start.size
    x = start.copy()
    x[np.abs(x) >= 1 - _TIGHT] = np.sign(x[np.abs(x) >= 1 - _TIGHT])
    free = np.abs(x) < 1
    tight = np.zeros(V.shape[0], dtype=bool)
    Vc = V.tocsc()
    basis = None
    it = 0
    while it < max_iters:
        F = np.flatnonzero(free)
        if F.size == 0:
            break
        if basis is None:
            T = np.flatnonzero(tight)
            M = Vc[:, F][T].toarray().T if T.size else np.zeros((F.size, 0))
            basis = _orthonormal_basis(M)
            if basis.shape[1] >= F.size:
                break
        g = rng.standard_normal(F.size)
        if basis.shape[1]:
            g -= basis @ (basis.T @ g)
        norm = np.linalg.norm(g)
        if norm < 1e-12:
            break
        # Unit RMS movement per free coordinate.
        d_free = g * (math.sqrt(F.size) / norm)
        d = np.zeros(n)
        d[F] = d_free
        lam = step
        with np.errstate(divide="ignore", invalid="ignore"):
            face = np.where(d_free > 0, (1 - x[F]) / d_free, np.where(d_free < 0, (-1 - x[F]) / d_free, np.inf))
        lam = min(lam, float(face.min()))
        if V.shape[0]:
            cur = V @ (x - start)
            rate = V @ d
            open_ = ~tight & (np.abs(rate) > 1e-14)
            with np.errstate(divide="ignore", invalid="ignore"):
                hit = np.where(rate > 0, (bound - cur) / rate, (-bound - cur) / rate)
            if np.any(open_):
                lam = min(lam, float(np.maximum(hit[open_], 0.0).min()))
        x += lam * d
        it += 1
        changed = False
        near = free & (np.abs(x) >= 1 - _TIGHT)
        if near.any():
            x[near] = np.sign(x[near])
            free &= ~near
            changed = True
        np.clip(x, -1.0, 1.0, out=x)
        if V.shape[0]:
            cur = V @ (x - start)
            newly = ~tight & (np.abs(cur) >= bound - _TIGHT * np.maximum(1.0, bound))
            if newly.any():
                tight |= newly
                changed = True
        if changed:
            basis = None
    return x, it


def partial_coloring(
    problem: PartialColoringProblem,
    rng: np.random.Generator,
    max_iters: int | None = None,
    *,
    step: float = DEFAULT_STEP,
    retries: int = 5,
    doublings: int = 3,
) -> Coloring:
    """Move ``start`` within the cube so that every ``|<x - start, v_j>|``
    stays within ``c_j ||v_j||`` and at least half the coordinates end at
    ±1. Both conditions are checked before returning.

    ``max_iters`` caps walk steps per attempt; it defaults to ``16 n²`` but
    never less than ``40 / step²`` so that small problems can finish.
    After ``retries`` failed attempts the thresholds are doubled, at most
    ``doublings`` times; ``meta["threshold_scale"]`` records the factor used.
    """
    if not problem.feasible():
        raise InfeasibleProblemError(
            f"feasibility sum {problem.feasibility_sum():.4g} exceeds n/16 = {problem.n / 16:.4g}"
        )
    n = problem.n
    if max_iters is None:
        max_iters = max(16 * n * n, math.ceil(40.0 / step**2))
    norms = problem.norms()
    best: Coloring | None = None
    attempts = 0
    for level in range(doublings + 1):
        scale = 2.0**level
        bound = scale * problem.c * norms
        for _ in range(retries):
            attempts += 1
            x, iters = _walk(problem.vectors, bound, problem.start, rng, max_iters, step)
            frozen = np.abs(x) == 1.0
            result = Coloring(x, frozen, {"threshold_scale": scale, "attempts": attempts, "iterations": iters})
            ok_i, ok_ii = check_partial_coloring(problem, x, scale)
            if ok_i and ok_ii:
                return result
            if ok_i and (best is None or frozen.sum() > best.frozen.sum()):
                best = result
    raise PartialColoringError(f"partial coloring failed after {attempts} attempts", best)


# --- full and γ-colorings -------------------------------------------------

@dataclass(eq=False)
class ColoringResult:
    x: np.ndarray
    value: float
    rounds: list[dict] = field(default_factory=list)


def _as_csr(A) -> sp.csr_matrix:
    if isinstance(A, PointLineSystem):
        return incidence_matrix(A, sparse=True).astype(float)
    return sp.csr_matrix(A, dtype=float)


def discrepancy_value(A, x) -> float:
    A = _as_csr(A)
    if A.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(A @ np.asarray(x, dtype=float))))


def _exhaustive_finish(A: sp.csr_matrix, x: np.ndarray, residual: np.ndarray, min_nonzero: int) -> np.ndarray:
    """Best assignment of the residual coordinates (values in {-1,0,1}, at
    least ``min_nonzero`` of them nonzero) minimising ``||A x||_∞``."""
    r = residual.size
    x = x.copy()
    x[residual] = 0.0
    if r == 0:
        return x
    vals = (1.0, -1.0) if min_nonzero >= r else (1.0, -1.0, 0.0)
    combos = np.array(list(itertools.product(vals, repeat=r)))
    combos = combos[np.count_nonzero(combos, axis=1) >= min_nonzero]
    base = A @ x
    sub = A[:, residual].toarray()
    touched = np.flatnonzero(np.any(sub != 0, axis=1))
    rest = np.abs(np.delete(base, touched)).max(initial=0.0)
    totals = base[touched][:, None] + sub[touched] @ combos.T
    score = np.maximum(np.abs(totals).max(axis=0, initial=0.0), rest)
    x[residual] = combos[int(np.argmin(score))]
    return x


def _round_problem(
    A: sp.csr_matrix, x: np.ndarray, active: np.ndarray, C: float, unsquared: bool
) -> tuple[PartialColoringProblem, float]:
    """Constraints for one round: rows meeting ≥ 2 active points whose
    threshold ``C n_t^{1/6}`` is not already implied by the cube. ``C`` is
    doubled until the feasibility test passes."""
    n_t = active.size
    sub = A[:, active].tocsr()
    k = np.diff(sub.indptr)
    load = np.abs(sub @ x[active])
    norms = np.sqrt(np.asarray(sub.multiply(sub).sum(axis=1)).ravel())
    while True:
        cap = C * n_t ** (1.0 / 6.0)
        # |<x_end - x_start, v>| <= k + |<x_start, v>| always holds.
        rows = np.flatnonzero((k >= 2) & (k + load > cap))
        c = cap / norms[rows]
        problem = PartialColoringProblem(sub[rows], c, x[active], unsquared)
        if problem.feasible():
            return problem, C
        C *= 2.0


def _iterate(
    A: sp.csr_matrix,
    stop_at: int,
    C: float,
    rng: np.random.Generator,
    residual_cutoff: int,
    unsquared: bool,
    min_colored: int,
    **walk_kw,
) -> ColoringResult:
    N = A.shape[1]
    x = np.zeros(N)
    rounds: list[dict] = []
    while True:
        active = np.flatnonzero(np.abs(x) < 1)
        if active.size <= stop_at:
            break
        if active.size <= residual_cutoff:
            need = max(0, min_colored - (N - active.size))
            x = _exhaustive_finish(A, x, active, need)
            rounds.append({"kind": "exhaustive", "active": int(active.size)})
            return ColoringResult(x, discrepancy_value(A, x), rounds)
        problem, C_t = _round_problem(A, x, active, C, unsquared)
        col = partial_coloring(problem, rng, **walk_kw)
        x[active] = col.x
        rounds.append(
            {
                "kind": "partial",
                "active": int(active.size),
                "constraints": problem.m,
                "C": C_t,
                "threshold_scale": col.meta["threshold_scale"],
                "frozen": int(col.frozen.sum()),
            }
        )
    x[np.abs(x) < 1] = 0.0
    return ColoringResult(x, discrepancy_value(A, x), rounds)


def full_coloring(
    A,
    rng: np.random.Generator,
    C: float = 1.0,
    *,
    residual_cutoff: int = DEFAULT_RESIDUAL,
    unsquared: bool = False,
    **walk_kw,
) -> ColoringResult:
    """Full ±1 coloring of the columns of ``A`` by repeated partial coloring.

    Each round works on the still-fractional columns with thresholds
    ``C n_t^{1/6}/||v||``; the last few columns are set by exhaustive search.
    """
    A = _as_csr(A)
    N = A.shape[1]
    return _iterate(A, 0, C, rng, residual_cutoff, unsquared, N, **walk_kw)


def full_coloring_ppls(ppls: PointLineSystem, C: float, rng: np.random.Generator, **kw) -> ColoringResult:
    return full_coloring(ppls, rng, C, **kw)


def gamma_coloring(
    A,
    gamma: float,
    C: float,
    rng: np.random.Generator,
    *,
    stop_uncolored: int | None = None,
    residual_cutoff: int = DEFAULT_RESIDUAL,
    **kw,
) -> ColoringResult:
    """Color at least ``γN`` columns with ±1 and zero the rest.

    Rounds run until at most ``stop_uncolored`` columns are fractional
    (default ``⌊(1-γ)N⌋``); those are then set to 0.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    A = _as_csr(A)
    N = A.shape[1]
    if gamma == 1.0:
        return full_coloring(A, rng, C, residual_cutoff=residual_cutoff, **kw)
    need = math.ceil(gamma * N - 1e-12)
    stop = N - need if stop_uncolored is None else min(int(stop_uncolored), N - need)
    return _iterate(A, stop, C, rng, residual_cutoff, kw.pop("unsquared", False), need, **kw)


# --- incidence counting ----------------------------------------------------

def st_count_check(ppls: PointLineSystem, k: int, c: float) -> tuple[int, float, bool]:
    """Lines with ≥ k points against the incidence bound ``c(N²/k³ + N/k)``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    N = ppls.N
    count = int(np.sum(ppls.line_sizes >= k))
    bound = c * (N * N / k**3 + N / k)
    return count, bound, count <= bound


# --- serialization ----------------------------------------------------------

def write_coloring(x, path: str | Path) -> None:
    vals = np.rint(np.asarray(x, dtype=float)).astype(int)
    if np.any(np.abs(vals) > 1):
        raise ValueError("coloring entries must be -1, 0 or 1")
    Path(path).write_text("\n".join(str(v) for v in vals.tolist()) + "\n")


def read_coloring(path: str | Path) -> np.ndarray:
    vals = np.array([int(t) for t in Path(path).read_text().split()], dtype=np.int64)
    if np.any(np.abs(vals) > 1):
        raise ValueError("coloring entries must be -1, 0 or 1")
    return vals
