"""The utility polynomial and the scalar constants derived from a weight scheme.

``u(p) = lam * sum_i w_i * C(lam-1, i-1) * p**(i-1) * (1-p)**(lam-i)`` is the
scaled expected utility of a candidate whose objective value sits at quantile
``p`` of the sampling distribution.  It is a Bernstein polynomial of degree
``lam - 1`` whose coefficients are ``lam * w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy import optimize, stats

from .errors import InvalidInputError
from .ranking import WeightScheme

__all__ = [
    "MAX_LAMBDA",
    "UtilityPolynomial",
    "u_eval",
    "u_derivative",
    "lipschitz_L_u",
    "selection_gap_M_w",
    "weight_variance_U_u",
    "integral_checks",
]

MAX_LAMBDA = 256
_GRID_POINTS = 10_001


def _check_unit(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidInputError("quantile p must lie in [0, 1]")
    return p


def _bernstein_basis(n: int, p: np.ndarray) -> np.ndarray:
    """Basis values ``C(n, k) p^k (1-p)^(n-k)``, shape ``p.shape + (n + 1,)``."""
    k = np.arange(n + 1)
    return stats.binom.pmf(k, n, p[..., None])


@dataclass(frozen=True)
class UtilityPolynomial:
    scheme: WeightScheme

    def __post_init__(self):
        if self.scheme.lam > MAX_LAMBDA:
            raise InvalidInputError(f"lambda={self.scheme.lam} exceeds the supported maximum {MAX_LAMBDA}")

    @property
    def degree(self) -> int:
        return self.scheme.lam - 1

    def __call__(self, p):
        return u_eval(self, p)

    def derivative(self, p):
        return u_derivative(self, p)

    @cached_property
    def lipschitz(self) -> float:
        return lipschitz_L_u(self)


def u_eval(poly: UtilityPolynomial, p):
    """Evaluate ``u`` at ``p`` (scalar or array) in ``[0, 1]``."""
    p = _check_unit(p)
    lam = poly.scheme.lam
    val = lam * (_bernstein_basis(lam - 1, p) @ poly.scheme.array)
    return float(val) if val.ndim == 0 else val


def u_derivative(poly: UtilityPolynomial, p):
    """``du/dp``, itself a Bernstein polynomial of degree ``lam - 2``."""
    p = _check_unit(p)
    lam = poly.scheme.lam
    if lam < 2:
        return 0.0 if p.ndim == 0 else np.zeros(p.shape)
    dw = np.diff(poly.scheme.array)
    val = lam * (lam - 1) * (_bernstein_basis(lam - 2, p) @ dw)
    return float(val) if val.ndim == 0 else val


def lipschitz_L_u(poly: UtilityPolynomial) -> float:
    """``max_{p in [0, 1]} |du/dp|``.

    A uniform grid locates the best bracket; a bounded Brent search then
    refines inside it to 1e-12 width.
    """
    lam = poly.scheme.lam
    if lam < 2:
        return 0.0
    grid = np.linspace(0.0, 1.0, _GRID_POINTS)
    vals = np.abs(u_derivative(poly, grid))
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, _GRID_POINTS - 1)]
    res = optimize.minimize_scalar(
        lambda q: -abs(u_derivative(poly, q)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(best, float(-res.fun))


def selection_gap_M_w(scheme: WeightScheme) -> float:
    """``sum_k w_k (1 - 2k / (lam + 1))``."""
    lam = scheme.lam
    return math.fsum(w * (1.0 - 2.0 * k / (lam + 1)) for k, w in enumerate(scheme.weights, start=1))


def _square_integral_coefficients(lam: int) -> list[list[Fraction]]:
    """Exact ``lam^2/(2lam-1) C(lam-1,i-1) C(lam-1,j-1) / C(2lam-2,i+j-2)``."""
    c1 = [math.comb(lam - 1, i) for i in range(lam)]
    c2 = [math.comb(2 * lam - 2, s) for s in range(2 * lam - 1)]
    pref = Fraction(lam * lam, 2 * lam - 1)
    return [[pref * c1[i] * c1[j] / c2[i + j] for j in range(lam)] for i in range(lam)]


def weight_variance_U_u(scheme: WeightScheme) -> float:
    """Variance of ``u(P)`` for ``P`` uniform on ``[0, 1]``.

    Binomial ratios are formed exactly with Python integers (no overflow for
    any supported ``lam``) and the double sum is accumulated with ``fsum``.
    """
    lam = scheme.lam
    if lam > MAX_LAMBDA:
        raise InvalidInputError(f"lambda={lam} exceeds the supported maximum {MAX_LAMBDA}")
    coef = _square_integral_coefficients(lam)
    w = scheme.weights
    terms = (w[i] * w[j] * (float(coef[i][j]) - 1.0) for i in range(lam) for j in range(lam))
    return max(math.fsum(terms), 0.0)


def integral_checks(scheme: WeightScheme) -> tuple[float, float]:
    """Closed forms of ``int_0^1 u`` and ``int_0^1 u^2``."""
    total = math.fsum(scheme.weights)
    return total, weight_variance_U_u(scheme) + total * total
