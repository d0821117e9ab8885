"""Private Thorup–Zwick distance oracle over a hub set.

Bunches are grown by repeated exponential-mechanism selection of the
closest not-yet-chosen member of each level set; every selection also
releases a noisy distance. Queries walk alternately between the two
endpoints' pivots and only post-process the built state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dp_apsd import SPairEstimates
from .graph import WeightedGraph, single_source_distances
from .mechanisms import BudgetAccountant, PrivacyBudget, advanced_per_mechanism, select_index

_LEVEL_RESAMPLES = 1000


class OracleInvariantError(RuntimeError):
    """The query walk ended on a vertex missing from an endpoint's bunch."""


@dataclass(frozen=True)
class OracleParams:
    k: int
    q: float
    r: int
    eps_sel: float
    delta_share: float = 0.0

    @classmethod
    def derive(cls, s: int, n: int, k: int, budget: PrivacyBudget, variant: str) -> OracleParams:
        """``q = s^{-1/k}``, ``r = ⌈10 s^{1/k} ln n⌉`` (at least 1) and the
        per-selection epsilon for the chosen composition."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if s < 1:
            raise ValueError("hub set must be nonempty")
        q = s ** (-1.0 / k)
        r = max(1, math.ceil(10.0 * s ** (1.0 / k) * math.log(max(n, 1))))
        count = s * r * k
        if variant == "pure":
            return cls(k, q, r, budget.epsilon / count)
        if variant == "approx":
            per = advanced_per_mechanism(count, budget)
            return cls(k, q, r, per.epsilon, per.delta)
        raise ValueError(f"unknown oracle variant {variant!r}")


@dataclass(eq=False)
class Bunch:
    owner: int
    hdist: dict[int, float] = field(default_factory=dict)
    pivots: list[int | None] = field(default_factory=list)

    @property
    def members(self) -> set[int]:
        return set(self.hdist)

    def __contains__(self, x: int) -> bool:
        return x in self.hdist


@dataclass(eq=False)
class OracleState:
    hubs: np.ndarray
    params: OracleParams
    levels: list[np.ndarray]
    bunches: dict[int, Bunch]
    variant: str


def sample_levels(hubs: np.ndarray, k: int, q: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Nested ``A_0 = S ⊇ A_1 ⊇ … ⊇ A_{k-1}``, each kept with probability q.

    Resampled (data-independently) until the top level is nonempty, so
    every pivot exists.
    """
    for _ in range(_LEVEL_RESAMPLES):
        levels = [np.asarray(hubs, dtype=np.int64)]
        for _i in range(1, k):
            prev = levels[-1]
            levels.append(prev[rng.random(prev.size) < q])
        if levels[-1].size:
            return levels
    raise RuntimeError("could not draw a nonempty top level")


def build_oracle(
    g: WeightedGraph,
    hubs,
    k: int,
    budget: PrivacyBudget,
    variant: str,
    rng: np.random.Generator,
    accountant: BudgetAccountant | None = None,
) -> OracleState:
    """Grow bunches for every hub by ``r`` private selections per level.

    The whole ``s·r·k`` selection budget is charged up front; a level whose
    candidate pool runs dry stops early without refund.
    """
    hubs = np.unique(np.asarray(hubs, dtype=np.int64))
    if hubs.size == 0:
        raise ValueError("hub set must be nonempty")
    if variant == "approx" and budget.delta <= 0:
        raise ValueError("the approx oracle needs delta > 0")
    s = int(hubs.size)
    params = OracleParams.derive(s, g.n, k, budget, variant)
    count = s * params.r * k
    if accountant is not None:
        if variant == "pure":
            accountant.charge(params.eps_sel, 0.0, count=count, label="oracle selections")
        else:
            accountant.charge_advanced(count, budget, label="oracle selections")

    levels = sample_levels(hubs, k, params.q, rng)
    # Exact distances are only ever read through the selection mechanism.
    dist = single_source_distances(g, hubs)
    pos = {int(h): i for i, h in enumerate(hubs)}
    bunches: dict[int, Bunch] = {}
    for v in hubs.tolist():
        row = dist[pos[v]]
        bunch = Bunch(v)
        for level in levels:
            for _ in range(params.r):
                pool = np.array([u for u in level.tolist() if u not in bunch.hdist], dtype=np.int64)
                if pool.size == 0:
                    break
                i, noisy = select_index(row[pool], params.eps_sel, rng, pool)
                bunch.hdist[int(pool[i])] = noisy
        for level in levels:
            cands = [u for u in level.tolist() if u in bunch.hdist]
            bunch.pivots.append(min(cands, key=lambda u: (bunch.hdist[u], u)) if cands else None)
        bunches[v] = bunch
    return OracleState(hubs, params, levels, bunches, variant)


def oracle_query(state: OracleState, u: int, v: int) -> float:
    """Alternating pivot walk; returns ``hdist(w, u') + hdist(w, v')``."""
    b = state.bunches
    if u not in b or v not in b:
        raise ValueError("query endpoints must be hubs")
    cu, cv, w = u, v, u
    for i in range(1, state.params.k):
        if w in b[cv]:
            break
        cu, cv = cv, cu
        w = b[cu].pivots[i]
    if w is None or w not in b[cu] or w not in b[cv]:
        raise OracleInvariantError(f"walk for ({u}, {v}) ended at {w}, outside a bunch")
    return b[cu].hdist[w] + b[cv].hdist[w]


def oracle_all_pairs(state: OracleState) -> SPairEstimates:
    """All hub-pair answers, symmetrised by averaging; diagonal fixed at 0."""
    hubs = state.hubs.tolist()
    s = len(hubs)
    out = np.zeros((s, s))
    for i, a in enumerate(hubs):
        for j, c in enumerate(hubs):
            if i != j:
                out[i, j] = oracle_query(state, a, c)
    out = (out + out.T) / 2.0
    np.fill_diagonal(out, 0.0)
    return SPairEstimates(out)
