"""Noise primitives, private selection and privacy-budget accounting.

Every randomized routine takes a :class:`numpy.random.Generator` as its
source of randomness, so a fixed seed replays every draw bit for bit.

Passing ``epsilon = math.inf`` (see :data:`NOISE_OFF`) disables noise in
every mechanism. This is the "noise-off" mode used by exactness tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

NOISE_OFF = math.inf

# Relative slack allowed when comparing floating-point budget sums.
_BUDGET_RTOL = 1e-9


class BudgetExceededError(RuntimeError):
    """Raised when a charge would push the accountant over its total."""


def make_rng(seed: int | None) -> np.random.Generator:
    """Seeded PCG64 generator; the seed is reduced to 64 bits."""
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)


def is_noise_off(epsilon: float) -> bool:
    return math.isinf(epsilon) and epsilon > 0


@dataclass(frozen=True)
class PrivacyBudget:
    """An ``(epsilon, delta)`` pair; ``delta == 0`` is pure DP.

    ``epsilon == inf`` is the noise-off sentinel. ``epsilon == 0`` is only
    produced by composing an empty list of spends.
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if math.isnan(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def pure(self) -> bool:
        return self.delta == 0.0

    def halve_epsilon(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon / 2.0, self.delta)


@dataclass(frozen=True)
class ScoredCandidate:
    id: Hashable
    score: float


@dataclass(frozen=True)
class Charge:
    """One ledger line: ``count`` mechanisms at ``(epsilon, delta)`` each.

    For ``composition == "advanced"`` the group composes, via advanced
    composition, to ``group_total`` rather than to the plain sum.
    """

    epsilon: float
    delta: float
    count: int = 1
    composition: str = "basic"
    group_total: PrivacyBudget | None = None
    label: str = ""

    def composed(self) -> PrivacyBudget:
        if self.composition == "advanced":
            assert self.group_total is not None
            return self.group_total
        return PrivacyBudget(_mul(self.epsilon, self.count), self.delta * self.count)


def _mul(x: float, k: int) -> float:
    # inf * 0 would be nan; a zero-count charge spends nothing.
    return 0.0 if k == 0 else x * k


def _le(a: float, b: float) -> bool:
    return a <= b or math.isclose(a, b, rel_tol=_BUDGET_RTOL, abs_tol=1e-15)


@dataclass
class BudgetAccountant:
    """Tracks spend against a total using basic composition across charges.

    A charge that would exceed the total raises *before* it is recorded,
    so callers charge first and draw noise afterwards.
    """

    total: PrivacyBudget
    ledger: list[Charge] = field(default_factory=list)

    @property
    def spent(self) -> PrivacyBudget:
        return compose_basic([c.composed() for c in self.ledger])

    @property
    def remaining(self) -> PrivacyBudget:
        s = self.spent
        eps = self.total.epsilon if math.isinf(self.total.epsilon) else max(self.total.epsilon - s.epsilon, 0.0)
        return PrivacyBudget(eps, max(self.total.delta - s.delta, 0.0))

    def _admit(self, charge: Charge) -> None:
        cost = charge.composed()
        spent = self.spent
        eps = spent.epsilon + cost.epsilon
        delta = spent.delta + cost.delta
        if not (_le(eps, self.total.epsilon) and _le(delta, self.total.delta)):
            raise BudgetExceededError(
                f"charge {charge.label or ''} ({cost.epsilon:.6g}, {cost.delta:.3g}) exceeds remaining "
                f"budget; spent ({spent.epsilon:.6g}, {spent.delta:.3g}) of "
                f"({self.total.epsilon:.6g}, {self.total.delta:.3g})"
            )
        self.ledger.append(charge)

    def charge(self, epsilon: float, delta: float = 0.0, *, count: int = 1, label: str = "") -> None:
        if count < 0:
            raise ValueError("count must be nonnegative")
        PrivacyBudget(epsilon, delta)
        self._admit(Charge(epsilon, delta, count, "basic", None, label))

    def charge_advanced(self, k: int, group_total: PrivacyBudget, *, label: str = "") -> PrivacyBudget:
        """Reserve ``k`` adaptive mechanisms composing to ``group_total``.

        Returns the per-mechanism budget each of them must respect.
        """
        per = advanced_per_mechanism(k, group_total)
        self._admit(Charge(per.epsilon, per.delta, k, "advanced", group_total, label))
        return per

    def verify(self) -> bool:
        """Recheck every advanced group against the composition formula."""
        for c in self.ledger:
            if c.composition == "advanced":
                expect = advanced_per_mechanism(c.count, c.group_total)
                if not (math.isclose(expect.epsilon, c.epsilon) and math.isclose(expect.delta, c.delta)):
                    return False
        s = self.spent
        return _le(s.epsilon, self.total.epsilon) and _le(s.delta, self.total.delta)


def sample_laplace(scale: float, rng: np.random.Generator) -> float:
    if scale < 0 or math.isnan(scale):
        raise ValueError(f"Laplace scale must be >= 0, got {scale}")
    if scale == 0:
        return 0.0
    return float(rng.laplace(0.0, scale))


def laplace_noise(scale: float, size: int | tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Vector form of :func:`sample_laplace`."""
    if scale < 0 or math.isnan(scale):
        raise ValueError(f"Laplace scale must be >= 0, got {scale}")
    if scale == 0:
        return np.zeros(size)
    return rng.laplace(0.0, scale, size)


def sample_gaussian(sigma: float, rng: np.random.Generator) -> float:
    if sigma < 0 or math.isnan(sigma):
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return 0.0
    return float(rng.normal(0.0, sigma))


def gaussian_noise(sigma: float, size: int | tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if sigma < 0 or math.isnan(sigma):
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.zeros(size)
    return rng.normal(0.0, sigma, size)


def gaussian_sigma(l2_sensitivity: float, budget: PrivacyBudget) -> float:
    """Classic Gaussian-mechanism calibration ``Δ2·sqrt(2 ln(1.25/δ))/ε``.

    Valid for ``ε <= 1``; ``ε = inf`` returns 0 (noise off).
    """
    if l2_sensitivity < 0:
        raise ValueError("l2 sensitivity must be >= 0")
    if budget.delta <= 0:
        raise ValueError("the Gaussian mechanism needs delta > 0")
    if is_noise_off(budget.epsilon):
        return 0.0
    if not 0 < budget.epsilon <= 1:
        raise ValueError(f"classic Gaussian calibration needs epsilon in (0, 1], got {budget.epsilon}")
    return l2_sensitivity * math.sqrt(2.0 * math.log(1.25 / budget.delta)) / budget.epsilon


def exponential_select(
    candidates: Sequence[ScoredCandidate],
    epsilon: float,
    rng: np.random.Generator,
) -> tuple[Hashable, float]:
    """Private argmin over sensitivity-1 scores, plus a noisy score.

    Half of ``epsilon`` pays for the selection, drawn with probability
    proportional to ``exp(-(epsilon/4) * score)``; the other half releases
    ``score + Lap(2/epsilon)``. With ``epsilon = inf`` the exact argmin is
    returned (ties go to the smallest id) together with its exact score.
    """
    if not candidates:
        raise ValueError("exponential_select needs at least one candidate")
    ids = [c.id for c in candidates]
    scores = np.array([c.score for c in candidates], dtype=float)
    i, noisy = select_index(scores, epsilon, rng, ids)
    return ids[i], noisy


def select_index(
    scores: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    ids: Sequence | np.ndarray | None = None,
) -> tuple[int, float]:
    """Array form of :func:`exponential_select`; returns a position."""
    if scores.size == 0:
        raise ValueError("exponential_select needs at least one candidate")
    if not np.all(np.isfinite(scores)):
        raise ValueError("candidate scores must be finite")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if is_noise_off(epsilon):
        best = scores.min()
        tied = np.flatnonzero(scores == best)
        if ids is None or len(tied) == 1:
            i = int(tied[0])
        else:
            i = int(min(tied, key=lambda j: ids[j]))
        return i, float(scores[i])
    logits = -(epsilon / 4.0) * (scores - scores.min())
    p = np.exp(logits)
    p /= p.sum()
    i = int(rng.choice(scores.size, p=p))
    return i, float(scores[i]) + sample_laplace(2.0 / epsilon, rng)


def compose_basic(spends: Sequence[PrivacyBudget]) -> PrivacyBudget:
    eps = math.fsum(b.epsilon for b in spends) if spends else 0.0
    delta = math.fsum(b.delta for b in spends) if spends else 0.0
    return PrivacyBudget(eps, delta)


def advanced_per_mechanism(k: int, total: PrivacyBudget) -> PrivacyBudget:
    """Per-mechanism ``(ε/(2·sqrt(2k·ln(2/δ))), δ/(2k))`` for ``k`` mechanisms.

    Running ``k`` adaptive mechanisms at this level is ``total``-DP.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if total.delta <= 0:
        raise ValueError("advanced composition needs delta > 0")
    if not is_noise_off(total.epsilon) and not 0 < total.epsilon <= 1:
        raise ValueError(f"advanced composition needs epsilon in (0, 1], got {total.epsilon}")
    eps = total.epsilon / (2.0 * math.sqrt(2.0 * k * math.log(2.0 / total.delta)))
    return PrivacyBudget(eps, total.delta / (2.0 * k))
