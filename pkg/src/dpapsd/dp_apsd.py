"""Private all-pairs shortest-path distances.

Two building blocks are combined through a random hub set ``S``:

* input perturbation: Laplace noise on every edge weight, then exact
  ``t``-hop distances in the noisy graph (error grows with ``t``);
* output perturbation: noisy exact distances between hub pairs only.

:func:`combine_estimates` stitches them together. :func:`apsd_pure`,
:func:`apsd_approx` and :func:`apsd_with_oracle` pick ``s`` and ``t``,
split the budget in half between the two parts and return an
:class:`ApsdEstimate`. All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import HopLimitedDistances, WeightedGraph, perturb_weights, single_source_distances, t_hop_distances
from .mechanisms import (
    BudgetAccountant,
    PrivacyBudget,
    gaussian_noise,
    gaussian_sigma,
    is_noise_off,
    laplace_noise,
)

MODES = ("pure", "approx", "oracle_pure", "oracle_approx", "input")


@dataclass(frozen=True, eq=False)
class HubSet:
    members: np.ndarray  # sorted vertex ids

    @property
    def s(self) -> int:
        return int(self.members.size)


@dataclass(frozen=True, eq=False)
class SPairEstimates:
    """Symmetric ``s × s`` estimates indexed like ``HubSet.members``."""

    estimates: np.ndarray


@dataclass(eq=False)
class ApsdEstimate:
    matrix: np.ndarray
    mode: str
    budget: PrivacyBudget
    s: int | None = None
    t: int | None = None
    k: int | None = None
    seed: int | None = None
    hubs: HubSet | None = None
    accountant: BudgetAccountant | None = field(default=None, repr=False)


@dataclass(frozen=True)
class AlgoConfig:
    """How to run one private APSD release.

    ``mode`` is ``pure``, ``approx``, ``oracle_pure``, ``oracle_approx``, or
    ``input`` (input perturbation alone with ``t = n - 1``, the baseline).
    """

    mode: str
    budget: PrivacyBudget
    k: int | None = None
    s: int | None = None
    t: int | None = None
    noise_off: bool = False
    clamp_nonnegative: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.mode.startswith("oracle"):
            if self.k is None or self.k < 1:
                raise ValueError("oracle modes need k >= 1")
        if self.mode in ("approx", "oracle_approx") and self.budget.delta <= 0:
            raise ValueError(f"mode {self.mode} needs delta > 0")
        if self.budget.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    @property
    def effective_budget(self) -> PrivacyBudget:
        if self.noise_off:
            return PrivacyBudget(math.inf, self.budget.delta)
        return self.budget


# --- parameter choices ----------------------------------------------------

def hop_bound(n: int, s: int) -> int:
    """``min(n - 1, ⌈10 (n/s) ln n⌉)``, at least 1."""
    if n <= 1:
        return 1
    return max(1, min(n - 1, math.ceil(10.0 * (n / s) * math.log(n))))


def hub_size_pure(n: int) -> int:
    """``⌈(n ln² n)^{1/3}⌉`` clamped to ``[1, n]``."""
    if n <= 1:
        return 1
    return max(1, min(n, math.ceil((n * math.log(n) ** 2) ** (1.0 / 3.0))))


def hub_size_approx(n: int, delta: float) -> int:
    """``⌈√n ln n / (ln(1/δ))^{1/4}⌉`` clamped to ``[1, n]``."""
    if n <= 1:
        return 1
    return max(1, min(n, math.ceil(math.sqrt(n) * math.log(n) / math.log(1.0 / delta) ** 0.25)))


def hub_size_oracle_pure(n: int, k: int) -> int:
    """``⌊(n/k²)^{k/(2k+1)}⌋`` clamped to ``[1, n]``."""
    return max(1, min(n, math.floor((n / k**2) ** (k / (2 * k + 1)))))


def hub_size_oracle_approx(n: int, k: int, delta: float) -> int:
    """``⌊(n √ln n / (k^{3/2} √ln(1/δ)))^{2k/(3k+1)}⌋`` clamped to ``[1, n]``."""
    if n <= 1:
        return 1
    base = n * math.sqrt(math.log(n)) / (k**1.5 * math.sqrt(math.log(1.0 / delta)))
    return max(1, min(n, math.floor(base ** (2 * k / (3 * k + 1)))))


def sample_hubs(n: int, s: int, rng: np.random.Generator) -> HubSet:
    if not 1 <= s <= n:
        raise ValueError(f"hub size must lie in [1, {n}], got {s}")
    return HubSet(np.sort(rng.choice(n, size=s, replace=False)).astype(np.int64))


def _charge(accountant: BudgetAccountant | None, epsilon: float, delta: float, label: str) -> None:
    if accountant is not None:
        accountant.charge(epsilon, delta, label=label)


# --- building blocks ------------------------------------------------------

def input_perturbation_apsd(
    g: WeightedGraph,
    epsilon: float,
    t: int,
    rng: np.random.Generator,
    accountant: BudgetAccountant | None = None,
) -> HopLimitedDistances:
    """``t``-hop distances of the Laplace-perturbed graph (one ε charge)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    _charge(accountant, epsilon, 0.0, "input perturbation")
    return t_hop_distances(perturb_weights(g, epsilon, rng), t)


def _hub_distances(g: WeightedGraph, hubs: HubSet) -> np.ndarray:
    if hubs.s == 0:
        raise ValueError("hub set must be nonempty")
    d = single_source_distances(g, hubs.members)[:, hubs.members]
    # Mirror the upper triangle: Dijkstra sums may differ in the last bit.
    upper = np.triu(d, 1)
    return upper + upper.T


def _symmetric_noise(s: int, draw) -> np.ndarray:
    iu = np.triu_indices(s, k=1)
    noise = np.zeros((s, s))
    noise[iu] = draw(iu[0].size)
    return noise + noise.T


def output_noise_scale_pure(s: int, epsilon: float) -> float:
    """Laplace scale ``C(s,2)/ε``: one sensitivity-1 value per hub pair."""
    if is_noise_off(epsilon):
        return 0.0
    return (s * (s - 1) / 2) / epsilon


def output_perturbation_pure(
    g: WeightedGraph,
    hubs: HubSet,
    epsilon: float,
    rng: np.random.Generator,
    accountant: BudgetAccountant | None = None,
) -> SPairEstimates:
    exact = _hub_distances(g, hubs)
    _charge(accountant, epsilon, 0.0, "output perturbation (Laplace)")
    scale = output_noise_scale_pure(hubs.s, epsilon)
    return SPairEstimates(exact + _symmetric_noise(hubs.s, lambda k: laplace_noise(scale, k, rng)))


def output_perturbation_gaussian(
    g: WeightedGraph,
    hubs: HubSet,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    accountant: BudgetAccountant | None = None,
) -> SPairEstimates:
    """Hub-pair distances plus Gaussian noise calibrated to ``Δ2 = s``.

    A unit ℓ1 change of the weights moves each hub-pair distance by at most
    1, so the ``C(s,2)`` released values move by at most ``√C(s,2) < s``
    in ℓ2; ``s`` is the conservative bound used here.
    """
    if delta <= 0:
        raise ValueError("Gaussian output perturbation needs delta > 0")
    exact = _hub_distances(g, hubs)
    sigma = gaussian_sigma(float(hubs.s), PrivacyBudget(epsilon, delta))
    _charge(accountant, epsilon, delta, "output perturbation (Gaussian)")
    return SPairEstimates(exact + _symmetric_noise(hubs.s, lambda k: gaussian_noise(sigma, k, rng)))


def combine_estimates(
    thop: HopLimitedDistances,
    spair: SPairEstimates,
    hubs: HubSet,
    clamp_nonnegative: bool = False,
) -> np.ndarray:
    """``min(thop(u,v), min_{w,z in S} thop(u,w) + spair(w,z) + thop(z,v))``.

    Pure post-processing. The hub diagonal is taken as exactly 0.
    """
    d = thop.matrix
    S = hubs.members
    pair = spair.estimates.copy()
    np.fill_diagonal(pair, 0.0)
    to_hub = d[:, S]  # n × s
    # via[u, z] = min_w thop(u, w) + spair(w, z)
    via = np.full((d.shape[0], S.size), np.inf)
    for j in range(S.size):
        np.minimum(via, to_hub[:, [j]] + pair[j][None, :], out=via)
    out = d.copy()
    for j in range(S.size):
        np.minimum(out, via[:, [j]] + d[S[j]][None, :], out=out)
    # thop is symmetric up to float round-off; make the release exactly so.
    out = np.minimum(out, out.T)
    if clamp_nonnegative:
        np.maximum(out, 0.0, out=out)
    return out


# --- end-to-end algorithms ------------------------------------------------

def _new_accountant(accountant: BudgetAccountant | None, total: PrivacyBudget) -> BudgetAccountant:
    return accountant if accountant is not None else BudgetAccountant(total)


def apsd_input_only(
    g: WeightedGraph,
    epsilon: float,
    rng: np.random.Generator,
    t: int | None = None,
    accountant: BudgetAccountant | None = None,
    seed: int | None = None,
) -> ApsdEstimate:
    """Baseline: input perturbation alone at the full budget, ``t = n - 1``."""
    acct = _new_accountant(accountant, PrivacyBudget(epsilon))
    t = max(1, g.n - 1) if t is None else t
    thop = input_perturbation_apsd(g, epsilon, t, rng, acct)
    m = np.minimum(thop.matrix, thop.matrix.T)
    return ApsdEstimate(m, "input", acct.spent, None, t, None, seed, None, acct)


def apsd_pure(
    g: WeightedGraph,
    epsilon: float,
    rng: np.random.Generator,
    s: int | None = None,
    t: int | None = None,
    clamp_nonnegative: bool = False,
    accountant: BudgetAccountant | None = None,
    seed: int | None = None,
) -> ApsdEstimate:
    """ε-DP APSD: Laplace hub pairs at ε/2, input perturbation at ε/2."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    acct = _new_accountant(accountant, PrivacyBudget(epsilon))
    s = hub_size_pure(g.n) if s is None else s
    t = hop_bound(g.n, s) if t is None else t
    hubs = sample_hubs(g.n, s, rng)
    spair = output_perturbation_pure(g, hubs, epsilon / 2, rng, acct)
    thop = input_perturbation_apsd(g, epsilon / 2, t, rng, acct)
    out = combine_estimates(thop, spair, hubs, clamp_nonnegative)
    return ApsdEstimate(out, "pure", acct.spent, s, t, None, seed, hubs, acct)


def apsd_approx(
    g: WeightedGraph,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    s: int | None = None,
    t: int | None = None,
    clamp_nonnegative: bool = False,
    accountant: BudgetAccountant | None = None,
    seed: int | None = None,
) -> ApsdEstimate:
    """(ε, δ)-DP APSD: Gaussian hub pairs at (ε/2, δ), input perturbation at ε/2."""
    if delta <= 0:
        raise ValueError("apsd_approx needs delta > 0")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    acct = _new_accountant(accountant, PrivacyBudget(epsilon, delta))
    s = hub_size_approx(g.n, delta) if s is None else s
    t = hop_bound(g.n, s) if t is None else t
    hubs = sample_hubs(g.n, s, rng)
    spair = output_perturbation_gaussian(g, hubs, epsilon / 2, delta, rng, acct)
    thop = input_perturbation_apsd(g, epsilon / 2, t, rng, acct)
    out = combine_estimates(thop, spair, hubs, clamp_nonnegative)
    return ApsdEstimate(out, "approx", acct.spent, s, t, None, seed, hubs, acct)


def apsd_with_oracle(
    g: WeightedGraph,
    k: int,
    epsilon: float,
    rng: np.random.Generator,
    delta: float = 0.0,
    s: int | None = None,
    t: int | None = None,
    clamp_nonnegative: bool = False,
    accountant: BudgetAccountant | None = None,
    seed: int | None = None,
) -> ApsdEstimate:
    """``(2k-1)``-stretch APSD with hub pairs answered by the private oracle.

    ``delta == 0`` selects the pure variant (basic composition inside the
    oracle); ``delta > 0`` the approximate one (advanced composition).
    """
    from .oracle import build_oracle, oracle_all_pairs

    if k < 1:
        raise ValueError("k must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    variant = "approx" if delta > 0 else "pure"
    acct = _new_accountant(accountant, PrivacyBudget(epsilon, delta))
    if s is None:
        s = hub_size_oracle_approx(g.n, k, delta) if variant == "approx" else hub_size_oracle_pure(g.n, k)
    t = hop_bound(g.n, s) if t is None else t
    hubs = sample_hubs(g.n, s, rng)
    state = build_oracle(g, hubs.members, k, PrivacyBudget(epsilon / 2, delta), variant, rng, acct)
    spair = oracle_all_pairs(state)
    thop = input_perturbation_apsd(g, epsilon / 2, t, rng, acct)
    out = combine_estimates(thop, spair, hubs, clamp_nonnegative)
    return ApsdEstimate(out, f"oracle_{variant}", acct.spent, s, t, k, seed, hubs, acct)


def run_config(g: WeightedGraph, config: AlgoConfig, rng: np.random.Generator, seed: int | None = None) -> ApsdEstimate:
    """Dispatch an :class:`AlgoConfig` to the matching algorithm."""
    b = config.effective_budget
    kw = dict(s=config.s, t=config.t, clamp_nonnegative=config.clamp_nonnegative, seed=seed)
    if config.mode == "pure":
        return apsd_pure(g, b.epsilon, rng, **kw)
    if config.mode == "approx":
        return apsd_approx(g, b.epsilon, b.delta, rng, **kw)
    if config.mode == "oracle_pure":
        return apsd_with_oracle(g, config.k, b.epsilon, rng, 0.0, **kw)
    if config.mode == "oracle_approx":
        return apsd_with_oracle(g, config.k, b.epsilon, rng, b.delta, **kw)
    est = apsd_input_only(g, b.epsilon, rng, t=config.t, seed=seed)
    if config.clamp_nonnegative:
        np.maximum(est.matrix, 0.0, out=est.matrix)
    return est
