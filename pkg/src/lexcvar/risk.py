"""VaR and CVaR of discrete distributions, by quantile integration and by the
risk-envelope dual."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

MERGE_TOL = 1e-12
PROB_TOL = 1e-9
VAR_CONVENTIONS = ("lower", "upper")


@dataclass(frozen=True)
class DiscreteDistribution:
    """Atoms sorted by value; values closer than ``MERGE_TOL`` are merged."""

    values: tuple
    probs: tuple

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "DiscreteDistribution":
        items = sorted((float(v), float(p)) for v, p in pairs)
        if not items:
            raise ValueError("empty distribution")
        values, probs = [], []
        for v, p in items:
            if p < 0 or p > 1 + PROB_TOL:
                raise ValueError(f"probability {p} outside [0, 1]")
            if values and v - values[-1] <= MERGE_TOL:
                probs[-1] += p
            else:
                values.append(v)
                probs.append(p)
        if abs(sum(probs) - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {sum(probs)!r}")
        return cls(tuple(values), tuple(probs))

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.values, self.probs))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def shift(self, k: float) -> "DiscreteDistribution":
        return DiscreteDistribution(tuple(v + k for v in self.values), self.probs)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def value_at_risk(dist: DiscreteDistribution, alpha: float, convention: str = "lower") -> float:
    """``min{z | F(z) >= 1 - alpha}`` (lower) or ``min{z | F(z) > 1 - alpha}`` (upper)."""
    _check_alpha(alpha)
    level = 1.0 - alpha
    cdf = np.cumsum(dist.probs)
    if convention == "lower":
        hit = cdf >= level - MERGE_TOL
    elif convention == "upper":
        hit = cdf > level + MERGE_TOL
    else:
        raise ValueError(f"unknown VaR convention {convention!r}")
    hit[-1] = True
    return dist.values[int(np.argmax(hit))]


def cvar_of_distribution(
    dist: DiscreteDistribution, alpha: float, convention: str = "lower"
) -> tuple[float, float]:
    """Return ``(VaR, CVaR)``.

    CVaR integrates the quantile function over the top ``alpha`` of
    probability mass: each atom contributes its value times the length of
    its quantile interval lying inside ``[1 - alpha, 1]``.
    """
    if not dist.values:
        raise ValueError("empty distribution")
    var = value_at_risk(dist, alpha, convention)
    lo = 1.0 - alpha
    total = 0.0
    upper = 0.0
    for v, p in zip(dist.values, dist.probs):
        lower, upper = upper, upper + p
        overlap = min(upper, 1.0) - max(lower, lo)
        if overlap > 0:
            total += v * overlap
    if alpha == 1.0:
        return var, dist.mean()
    return var, total / alpha


def cvar_dual(dist: DiscreteDistribution, alpha: float) -> float:
    """CVaR as the largest expectation over density perturbations bounded by
    ``1/alpha``; the greedy fills the highest atoms first."""
    if not dist.values:
        raise ValueError("empty distribution")
    _check_alpha(alpha)
    cap = 1.0 / alpha
    budget = 1.0
    acc = 0.0
    for v, p in sorted(zip(dist.values, dist.probs), reverse=True):
        if budget <= 0:
            break
        xi = min(cap, budget / p) if p > 0 else 0.0
        acc += xi * p * v
        budget -= xi * p
    return acc
