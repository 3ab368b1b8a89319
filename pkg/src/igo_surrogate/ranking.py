"""Rank counts and tie-averaged utilities of a population.

A population of ``lam`` objective values is turned into utility values by
counting, for each candidate, how many candidates are strictly better
(``strict``) and better-or-equal (``weak``), then averaging the predefined
weights ``w[strict] .. w[weak - 1]`` (0-based).  Ties are detected by exact
equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "WeightScheme",
    "RankCounts",
    "rank_counts",
    "utilities",
    "n_w_constant",
]


@dataclass(frozen=True)
class WeightScheme:
    """The ``lam`` predefined weights ``w_1 .. w_lam`` (best rank first)."""

    weights: tuple[float, ...]
    lam: int = field(init=False)

    def __post_init__(self):
        w = tuple(float(v) for v in np.ravel(np.asarray(self.weights, dtype=float)))
        if len(w) < 1:
            raise InvalidInputError("a weight scheme needs at least one weight")
        if not all(np.isfinite(w)):
            raise InvalidInputError("weights must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lam", len(w))

    @classmethod
    def truncation(cls, lam: int, mu: int | None = None) -> WeightScheme:
        """``w_i = 1/mu`` for ``i <= mu`` and 0 otherwise; ``mu`` defaults to ``lam // 2``."""
        if mu is None:
            mu = lam // 2
        if lam < 1 or not 1 <= mu <= lam:
            raise InvalidInputError(f"need 1 <= mu <= lambda, got mu={mu}, lambda={lam}")
        return cls(tuple(1.0 / mu if i < mu else 0.0 for i in range(lam)))

    @classmethod
    def equal(cls, lam: int, value: float | None = None) -> WeightScheme:
        if lam < 1:
            raise InvalidInputError("lambda must be positive")
        c = 1.0 / lam if value is None else float(value)
        return cls((c,) * lam)

    @classmethod
    def linear(cls, lam: int) -> WeightScheme:
        """Weights proportional to ``lam - i`` for ``i = 1 .. lam``, normalised to sum 1."""
        if lam < 2:
            raise InvalidInputError("linear weights need lambda >= 2")
        raw = np.arange(lam - 1, -1, -1, dtype=float)
        return cls(tuple(raw / raw.sum()))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.weights)

    @property
    def nonincreasing(self) -> bool:
        w = self.weights
        return all(w[i] >= w[i + 1] for i in range(self.lam - 1))

    @property
    def monotone(self) -> bool:
        """True iff ``w_i >= w_{i+1}`` for all ``i`` and ``w_1 > w_lam``."""
        return self.nonincreasing and self.weights[0] > self.weights[-1]

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class RankCounts:
    strict: tuple[int, ...]
    weak: tuple[int, ...]


def _as_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.shape[-1] < 1:
        raise InvalidInputError("need at least one value")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("values must be finite")
    return v


def _counts(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Strict and weak counts along the last axis by sort and scan."""
    lam = v.shape[-1]
    order = np.argsort(v, axis=-1, kind="stable")
    s = np.take_along_axis(v, order, axis=-1)
    pos = np.broadcast_to(np.arange(lam), s.shape)
    new_group = np.ones(s.shape, dtype=bool)
    new_group[..., 1:] = s[..., 1:] != s[..., :-1]
    last_of_group = np.ones(s.shape, dtype=bool)
    last_of_group[..., :-1] = new_group[..., 1:]
    # first index of each tie group, propagated forward
    start = np.maximum.accumulate(np.where(new_group, pos, 0), axis=-1)
    # one past the last index of each tie group, propagated backward
    end_rev = np.where(last_of_group, pos + 1, lam)[..., ::-1]
    end = np.minimum.accumulate(end_rev, axis=-1)[..., ::-1]
    strict = np.empty_like(start)
    weak = np.empty_like(end)
    np.put_along_axis(strict, order, start, axis=-1)
    np.put_along_axis(weak, order, end, axis=-1)
    return strict, weak


def rank_counts(values) -> RankCounts:
    """Count strictly better and better-or-equal candidates for each value.

    >>> rank_counts([2, 2, 5])
    RankCounts(strict=(0, 0, 2), weak=(2, 2, 3))
    """
    v = _as_values(values)
    if v.ndim != 1:
        raise InvalidInputError("rank_counts expects a one-dimensional sequence")
    strict, weak = _counts(v)
    return RankCounts(tuple(int(s) for s in strict), tuple(int(w) for w in weak))


def utilities(values, scheme: WeightScheme) -> np.ndarray:
    """Tie-averaged utilities of a population, or of a batch of populations.

    ``values`` may have any leading batch shape; the last axis holds one
    population of ``scheme.lam`` values.  Without ties candidate ``i``
    receives ``w[weak_i - 1]`` exactly; tied candidates share the mean of the
    weights their tie group spans.
    """
    v = _as_values(values)
    if v.shape[-1] != scheme.lam:
        raise InvalidInputError(
            f"population size {v.shape[-1]} does not match lambda={scheme.lam}"
        )
    w = scheme.array
    strict, weak = _counts(v)
    out = w[strict]
    tied = (weak - strict) > 1
    if np.any(tied):
        # ties are rare for continuous inputs; average each group explicitly
        out = out.copy()
        for idx in zip(*np.nonzero(tied)):
            s, e = strict[idx], weak[idx]
            out[idx] = math.fsum(scheme.weights[s:e]) / (e - s)
    return out


def n_w_constant(scheme: WeightScheme) -> float:
    """``lam**2 * max_k w_k**2``."""
    return float(scheme.lam**2 * np.max(np.square(scheme.array)))
