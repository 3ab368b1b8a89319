"""Gaussian-family IGO: natural gradients, update assembly and convex-quadratic closed forms.

The distribution parameter is ``theta = (m, C)``.  For a convex quadratic
``f(x) = 1/2 (x - x*)^T A (x - x*)`` the expected objective, its gradient and
the Fisher-metric quantities have closed forms, so the full Fisher matrix is
never built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import HypothesisError, InvalidInputError, StepRejectedError
from .ranking import WeightScheme, n_w_constant
from .utility_poly import UtilityPolynomial, selection_gap_M_w, weight_variance_U_u

__all__ = [
    "GaussianParams",
    "QuadraticObjective",
    "NaturalGradientStep",
    "TheoryRates",
    "cholesky_or_none",
    "random_spd",
    "natural_grad_loglik",
    "assemble_delta",
    "apply_step",
    "sample_population",
    "expected_objective_J",
    "grad_J",
    "metric_norm_M_f",
    "trace_finv_h",
    "theory_rates",
    "admissible_lower_bound",
]


def cholesky_or_none(mat: np.ndarray) -> np.ndarray | None:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None


def _symmetric(mat, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(mat, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} must be finite")
    return 0.5 * (a + a.T)


class GaussianParams:
    """Mean vector and symmetric positive definite covariance of ``N(m, C)``.

    The covariance is stored symmetrised; positive definiteness is checked by
    attempting a Cholesky factorisation, which is kept for sampling.
    """

    __slots__ = ("mean", "cov", "chol")

    def __init__(self, mean, cov):
        m = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        if m.ndim != 1 or not np.all(np.isfinite(m)):
            raise InvalidInputError("mean must be a finite vector")
        c = _symmetric(cov, "covariance")
        if c.shape != (m.size, m.size):
            raise InvalidInputError(f"covariance shape {c.shape} does not match dimension {m.size}")
        chol = cholesky_or_none(c)
        if chol is None:
            raise InvalidInputError(
                f"covariance is not positive definite (smallest eigenvalue {np.linalg.eigvalsh(c)[0]:.6g})"
            )
        m.flags.writeable = False
        c.flags.writeable = False
        chol.flags.writeable = False
        self.mean = m
        self.cov = c
        self.chol = chol

    @property
    def dim(self) -> int:
        return self.mean.size

    def __repr__(self):
        return f"GaussianParams(mean={self.mean.tolist()}, cov={self.cov.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, GaussianParams):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    __hash__ = None

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Map standard normal draws (last axis of size ``dim``) to ``N(m, C)``."""
        return self.mean + z @ self.chol.T


class QuadraticObjective:
    """``f(x) = 1/2 (x - x*)^T A (x - x*)`` with ``A`` symmetric positive definite."""

    __slots__ = ("hessian", "optimum")

    def __init__(self, hessian, optimum=None):
        a = _symmetric(hessian, "hessian")
        if cholesky_or_none(a) is None:
            raise InvalidInputError("hessian must be positive definite")
        x = np.zeros(a.shape[0]) if optimum is None else np.atleast_1d(np.asarray(optimum, dtype=float)).copy()
        if x.shape != (a.shape[0],) or not np.all(np.isfinite(x)):
            raise InvalidInputError("optimum must be a finite vector matching the hessian")
        a.flags.writeable = False
        x.flags.writeable = False
        self.hessian = a
        self.optimum = x

    @classmethod
    def sphere(cls, d: int) -> QuadraticObjective:
        return cls(np.eye(d))

    @classmethod
    def diagonal(cls, eigenvalues, optimum=None) -> QuadraticObjective:
        return cls(np.diag(np.asarray(eigenvalues, dtype=float)), optimum)

    @property
    def dim(self) -> int:
        return self.optimum.size

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at one point or at an array of points (last axis = coordinates)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise InvalidInputError(f"point dimension {x.shape[-1]} does not match d={self.dim}")
        y = x - self.optimum
        val = 0.5 * np.einsum("...i,ij,...j->...", y, self.hessian, y)
        return float(val) if val.ndim == 0 else val

    def __repr__(self):
        return f"QuadraticObjective(hessian={self.hessian.tolist()}, optimum={self.optimum.tolist()})"


@dataclass(frozen=True)
class NaturalGradientStep:
    d_mean: np.ndarray
    d_cov: np.ndarray

    def __add__(self, other: NaturalGradientStep) -> NaturalGradientStep:
        return NaturalGradientStep(self.d_mean + other.d_mean, self.d_cov + other.d_cov)

    def __eq__(self, other):
        if not isinstance(other, NaturalGradientStep):
            return NotImplemented
        return np.array_equal(self.d_mean, other.d_mean) and np.array_equal(self.d_cov, other.d_cov)

    __hash__ = None


def random_spd(d: int, rng: np.random.Generator, log10_range: tuple[float, float] = (-2.0, 2.0)) -> np.ndarray:
    """``Q^T D Q`` with ``Q`` Haar-orthogonal and log-uniform eigenvalues ``D``."""
    lo, hi = log10_range
    eig = 10.0 ** rng.uniform(lo, hi, size=d)
    if d == 1:
        return eig.reshape(1, 1)
    q = stats.ortho_group.rvs(d, random_state=rng)
    a = q.T @ np.diag(eig) @ q
    return 0.5 * (a + a.T)


def _check_point(theta: GaussianParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != theta.dim:
        raise InvalidInputError(f"point dimension {x.shape[-1]} does not match d={theta.dim}")
    return x


def natural_grad_loglik(theta: GaussianParams, x) -> NaturalGradientStep:
    """Natural gradient of ``log p(x; theta)``: ``(x - m, (x - m)(x - m)^T - C)``."""
    x = _check_point(theta, x)
    if x.ndim != 1:
        raise InvalidInputError("natural_grad_loglik takes a single point")
    y = x - theta.mean
    return NaturalGradientStep(y, np.outer(y, y) - theta.cov)


def assemble_delta(theta: GaussianParams, xs, weights) -> NaturalGradientStep:
    """Weighted sum of natural gradients over a population.

    ``xs`` has shape ``(lam, d)`` or a batch ``(..., lam, d)`` with matching
    ``weights`` of shape ``(..., lam)``; a batch returns stacked blocks.
    """
    xs = _check_point(theta, xs)
    w = np.asarray(weights, dtype=float)
    if xs.ndim < 2 or w.shape != xs.shape[:-1]:
        raise InvalidInputError(f"weights shape {w.shape} does not match population shape {xs.shape}")
    y = xs - theta.mean
    d_mean = np.einsum("...i,...ij->...j", w, y)
    d_cov = np.einsum("...i,...ij,...ik->...jk", w, y, y) - w.sum(axis=-1)[..., None, None] * theta.cov
    return NaturalGradientStep(d_mean, d_cov)


def apply_step(theta: GaussianParams, delta: NaturalGradientStep, alpha: float) -> GaussianParams:
    """``theta + alpha * delta``; raises StepRejectedError if the covariance leaves the SPD cone."""
    if not alpha > 0:
        raise InvalidInputError(f"learning rate must be positive, got {alpha}")
    new_cov = theta.cov + alpha * 0.5 * (delta.d_cov + delta.d_cov.T)
    new_cov = 0.5 * (new_cov + new_cov.T)
    if not np.all(np.isfinite(new_cov)) or cholesky_or_none(new_cov) is None:
        lo = np.linalg.eigvalsh(new_cov)[0] if np.all(np.isfinite(new_cov)) else float("nan")
        raise StepRejectedError(lo)
    return GaussianParams(theta.mean + alpha * delta.d_mean, new_cov)


def sample_population(theta: GaussianParams, lam: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``lam`` i.i.d. points from ``N(m, C)`` as rows of a ``(lam, d)`` array."""
    if lam < 1:
        raise InvalidInputError("lambda must be positive")
    return theta.transform(rng.standard_normal((lam, theta.dim)))


def _check_dims(theta: GaussianParams, obj: QuadraticObjective):
    if theta.dim != obj.dim:
        raise InvalidInputError(f"dimension mismatch: theta has d={theta.dim}, objective has d={obj.dim}")


def expected_objective_J(theta: GaussianParams, obj: QuadraticObjective) -> float:
    _check_dims(theta, obj)
    y = theta.mean - obj.optimum
    return float(0.5 * y @ obj.hessian @ y + 0.5 * np.trace(obj.hessian @ theta.cov))


def grad_J(theta: GaussianParams, obj: QuadraticObjective) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of J: ``A (m - x*)`` for the mean, ``A / 2`` for the covariance."""
    _check_dims(theta, obj)
    return obj.hessian @ (theta.mean - obj.optimum), 0.5 * obj.hessian.copy()


def metric_norm_M_f(theta: GaussianParams, obj: QuadraticObjective) -> float:
    """``grad J^T F^{-1} grad J = (m-x*)^T A C A (m-x*) + Tr((AC)^2) / 2``."""
    _check_dims(theta, obj)
    a, c = obj.hessian, theta.cov
    g = a @ (theta.mean - obj.optimum)
    ac = a @ c
    return float(g @ c @ g + 0.5 * np.sum(ac * ac.T))


def trace_finv_h(theta: GaussianParams, obj: QuadraticObjective) -> float:
    """``Tr(F^{-1} H) = Tr(C A)`` for ``H = diag(A, 0)``."""
    _check_dims(theta, obj)
    return float(np.sum(theta.cov * obj.hessian))


class TheoryRates(NamedTuple):
    beta: float
    gamma: float
    alpha_max: float
    alpha_opt: float


def _require_monotone(scheme: WeightScheme):
    if not scheme.monotone:
        raise HypothesisError(
            "weight scheme violates the hypothesis w_i >= w_j for all i < j and w_1 > w_lambda"
        )


def admissible_lower_bound(scheme: WeightScheme, kind: str) -> float:
    """Open lower endpoint of the admissible gate threshold for ``kind``."""
    _require_monotone(scheme)
    m_w = selection_gap_M_w(scheme)
    if kind == "kendall":
        l_u = UtilityPolynomial(scheme).lipschitz
        return 1.0 - m_w**2 / (9.0 * l_u**2)
    if kind == "pearson":
        return 1.0 - m_w**2 / (36.0 * weight_variance_U_u(scheme))
    raise InvalidInputError(f"unknown correlation kind {kind!r}")


def gamma_for(scheme: WeightScheme, threshold: float, kind: str) -> float:
    """Surrogate penalty ``gamma`` for a threshold, without admissibility checks."""
    _require_monotone(scheme)
    m_w = selection_gap_M_w(scheme)
    slack = max(1.0 - threshold, 0.0)
    if kind == "kendall":
        return 3.0 * UtilityPolynomial(scheme).lipschitz * math.sqrt(slack) / m_w
    if kind == "pearson":
        return 6.0 * math.sqrt(weight_variance_U_u(scheme)) * math.sqrt(slack) / m_w
    raise InvalidInputError(f"unknown correlation kind {kind!r}")


def beta_for(scheme: WeightScheme, d: int) -> float:
    _require_monotone(scheme)
    if d < 1:
        raise InvalidInputError("dimension must be positive")
    return selection_gap_M_w(scheme) / (6.0 * math.sqrt(d) * n_w_constant(scheme))


def theory_rates(scheme: WeightScheme, d: int, threshold: float, kind: str) -> TheoryRates:
    """Descent rate ``beta``, surrogate penalty ``gamma`` and the learning-rate bounds.

    ``threshold`` must lie strictly above :func:`admissible_lower_bound` and
    not above 1, which guarantees ``gamma < 1``.
    """
    lower = admissible_lower_bound(scheme, kind)
    if not (lower < threshold <= 1.0):
        raise InvalidInputError(
            f"{kind} threshold {threshold!r} outside the admissible interval ({lower!r}, 1]"
        )
    beta = beta_for(scheme, d)
    gamma = float(gamma_for(scheme, threshold, kind))
    return TheoryRates(beta, gamma, 2.0 * beta * (1.0 - gamma), beta * (1.0 - gamma))
