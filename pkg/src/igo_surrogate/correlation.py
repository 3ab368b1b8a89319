"""Sample and population correlation measures between an objective and a surrogate.

Sample statistics (Kendall tau-b on values, Pearson on utility weights) are
exact.  Population quantities are Monte-Carlo estimates under ``N(m, C)``;
the distribution functions ``P_f`` and ``P_g`` are replaced by empirical CDFs
of one shared reference sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidInputError, UndefinedCorrelationError
from .gaussian import GaussianParams
from .ranking import WeightScheme
from .utility_poly import UtilityPolynomial, weight_variance_U_u

__all__ = [
    "CorrelationEstimate",
    "MCEstimate",
    "PairCounts",
    "pair_counts",
    "kendall_tau_b",
    "pearson_weights",
    "empirical_quantile",
    "ReferenceCDF",
    "population_tau",
    "population_rho",
    "estimate_Kw",
    "utility_pairs",
    "ExponentialAverage",
]

Evaluable = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CorrelationEstimate:
    value: float
    std_error: float = 0.0
    n_samples: int = 0


class MCEstimate(NamedTuple):
    estimate: float
    std_error: float
    n_samples: int
    bias_bound: float = 0.0


class PairCounts(NamedTuple):
    n_pairs: int
    ties_f: int
    ties_g: int
    concordant: int
    discordant: int


def _paired(f_vals, g_vals) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(f_vals, dtype=float).ravel()
    g = np.asarray(g_vals, dtype=float).ravel()
    if f.size != g.size:
        raise InvalidInputError(f"length mismatch: {f.size} vs {g.size}")
    if f.size < 2:
        raise InvalidInputError("need at least two observations")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise InvalidInputError("values must be finite")
    return f, g


def _tied_pairs(sorted_vals: np.ndarray) -> int:
    _, counts = np.unique(sorted_vals, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _count_inversions(seq: np.ndarray) -> int:
    """Pairs ``i < j`` with ``seq[i] > seq[j]`` by bottom-up merge sort."""
    a = list(seq)
    n = len(a)
    buf = [0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] + a[j:hi]
            a[lo:hi] = buf[lo:hi]
        width *= 2
    return inv


def pair_counts(f_vals, g_vals) -> PairCounts:
    """Tie, concordant and discordant pair counts in ``O(n log n)``."""
    f, g = _paired(f_vals, g_vals)
    n = f.size
    order = np.lexsort((g, f))
    fs, gs = f[order], g[order]
    n_a = _tied_pairs(fs)
    n_b = _tied_pairs(np.sort(g))
    joint = np.ones(n, dtype=bool)
    joint[1:] = (fs[1:] != fs[:-1]) | (gs[1:] != gs[:-1])
    run_lengths = np.diff(np.append(np.nonzero(joint)[0], n))
    n_ab = int(np.sum(run_lengths * (run_lengths - 1) // 2))
    # integer g-ranks so the merge works on exact ints
    g_rank = np.searchsorted(np.unique(gs), gs)
    n_d = _count_inversions(g_rank.tolist())
    total = n * (n - 1) // 2
    n_c = total - n_a - n_b + n_ab - n_d
    return PairCounts(total, n_a, n_b, n_c, n_d)


def tau_b_from_counts(c: PairCounts) -> float:
    denom_f = c.n_pairs - c.ties_f
    denom_g = c.n_pairs - c.ties_g
    if denom_f == 0 or denom_g == 0:
        raise UndefinedCorrelationError("Kendall tau-b undefined: one sequence is entirely tied")
    return (c.concordant - c.discordant) / math.sqrt(denom_f * denom_g)


def kendall_tau_b(f_vals, g_vals) -> float:
    """Kendall's tau-b with tie corrections in both sequences."""
    return tau_b_from_counts(pair_counts(f_vals, g_vals))


def pearson_weights(w, w_tilde) -> float:
    """Product-moment correlation of two utility vectors (population 1/n form)."""
    a, b = _paired(w, w_tilde)
    da = a - a.mean()
    db = b - b.mean()
    va = float(np.mean(da * da))
    vb = float(np.mean(db * db))
    if va == 0.0 or vb == 0.0:
        raise UndefinedCorrelationError("Pearson correlation undefined: zero variance")
    # sqrt(v * v) == v exactly, so identical inputs give exactly 1
    r = float(np.mean(da * db)) / math.sqrt(va * vb)
    return min(1.0, max(-1.0, r))


def empirical_quantile(vals_reference, s):
    """Right-continuous empirical CDF of a sorted reference sample at ``s``."""
    ref = np.asarray(vals_reference, dtype=float)
    if ref.size < 1:
        raise InvalidInputError("reference sample is empty")
    q = np.searchsorted(ref, s, side="right") / ref.size
    return float(q) if np.ndim(q) == 0 else q


class ReferenceCDF:
    """Empirical CDFs of ``f`` and ``g`` built from one shared reference sample."""

    def __init__(self, f: Evaluable, g: Evaluable, theta: GaussianParams, size: int, rng: np.random.Generator):
        if size < 1:
            raise InvalidInputError("reference size must be positive")
        x = theta.transform(rng.standard_normal((size, theta.dim)))
        self.size = size
        self.f_sorted = np.sort(np.asarray(f(x), dtype=float))
        self.g_sorted = np.sort(np.asarray(g(x), dtype=float))

    def p_f(self, vals):
        return empirical_quantile(self.f_sorted, vals)

    def p_g(self, vals):
        return empirical_quantile(self.g_sorted, vals)


def population_tau(f: Evaluable, g: Evaluable, theta: GaussianParams, n_pairs: int, rng: np.random.Generator) -> CorrelationEstimate:
    """Monte-Carlo estimate of concordance minus discordance probability over i.i.d. pairs."""
    if n_pairs < 1000:
        raise InvalidInputError("population_tau needs at least 1000 pairs")
    x = theta.transform(rng.standard_normal((2, n_pairs, theta.dim)))
    fx, gx = np.asarray(f(x)), np.asarray(g(x))
    s = np.sign((fx[0] - fx[1]) * (gx[0] - gx[1]))
    p_c = np.count_nonzero(s > 0) / n_pairs
    p_d = np.count_nonzero(s < 0) / n_pairs
    value = p_c - p_d
    var = max(p_c + p_d - value * value, 0.0)
    return CorrelationEstimate(value, math.sqrt(var / n_pairs), n_pairs)


def utility_pairs(f, g, theta, scheme, n, reference_size, rng):
    """Draw ``n`` points and return ``u(P_f(f(X)))``, ``u(P_g(g(X)))`` and the reference CDF."""
    ref = ReferenceCDF(f, g, theta, reference_size, rng)
    x = theta.transform(rng.standard_normal((n, theta.dim)))
    poly = UtilityPolynomial(scheme)
    a = poly(ref.p_f(np.asarray(f(x))))
    b = poly(ref.p_g(np.asarray(g(x))))
    return a, b, ref


def _quantile_bias(scheme: WeightScheme, reference_size: int) -> float:
    # DKW-scale error of the empirical CDF pushed through the Lipschitz bound
    return UtilityPolynomial(scheme).lipschitz / math.sqrt(reference_size)


def population_rho(f, g, theta, scheme: WeightScheme, n: int, reference_size: int, rng: np.random.Generator) -> CorrelationEstimate:
    """Pearson correlation between ``u(P_f(f(X)))`` and ``u(P_g(g(X)))``.

    The sample correlation of the ``n`` utility pairs; its standard error comes
    from the influence function ``a b - r (a^2 + b^2) / 2`` of the
    standardised pairs, which vanishes as the pairs become identical.
    """
    if n < 1000 or reference_size < 10_000:
        raise InvalidInputError("population_rho needs n >= 1000 and reference_size >= 10000")
    if weight_variance_U_u(scheme) <= 0.0:
        raise UndefinedCorrelationError("Pearson correlation undefined: the utility polynomial is constant")
    a, b, _ = utility_pairs(f, g, theta, scheme, n, reference_size, rng)
    r = pearson_weights(a, b)
    za = (a - a.mean()) / a.std()
    zb = (b - b.mean()) / b.std()
    infl = za * zb - 0.5 * r * (za * za + zb * zb)
    return CorrelationEstimate(r, float(np.std(infl, ddof=1)) / math.sqrt(n), n)


def estimate_Kw(f, g, theta, scheme: WeightScheme, n: int, reference_size: int, rng: np.random.Generator) -> MCEstimate:
    """Mean squared difference of the f- and g-based utility values."""
    if n < 1000:
        raise InvalidInputError("estimate_Kw needs n >= 1000")
    a, b, _ = utility_pairs(f, g, theta, scheme, n, reference_size, rng)
    sq = (a - b) ** 2
    return MCEstimate(float(np.mean(sq)), float(np.std(sq, ddof=1)) / math.sqrt(n), n, _quantile_bias(scheme, reference_size) ** 2)


class ExponentialAverage:
    """Moving average ``v <- decay * v + (1 - decay) * x``, seeded by the first observation."""

    def __init__(self, decay: float = 0.5):
        if not 0.0 <= decay < 1.0:
            raise InvalidInputError("decay must lie in [0, 1)")
        self.decay = decay
        self.value: float | None = None

    def update(self, x: float) -> float:
        self.value = x if self.value is None else self.decay * self.value + (1.0 - self.decay) * x
        return self.value
