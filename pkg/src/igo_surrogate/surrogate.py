"""Synthetic surrogates with controllable fidelity, and the correlation gate.

Every surrogate is a fixed deterministic function of ``x``; evaluation is
vectorised over any leading batch shape of points.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .correlation import CorrelationEstimate, population_rho, population_tau
from .errors import InvalidInputError, SurrogateEvaluationError
from .gaussian import GaussianParams, QuadraticObjective, admissible_lower_bound, cholesky_or_none
from .ranking import WeightScheme

__all__ = [
    "SurrogateSpec",
    "Exact",
    "Negated",
    "AdditiveNoise",
    "HessianPerturbed",
    "BlockSwap",
    "External",
    "evaluate",
    "GateDecision",
    "gate",
    "admissible_threshold",
    "calibrate_noise",
    "blockswap_tau_enumerated",
    "blockswap_tau_closed_form",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def hashed_normal(x: np.ndarray, seed: int) -> np.ndarray:
    """Standard normal value that is a deterministic function of the bits of each point."""
    # +0.0 folds -0.0 onto 0.0 so equal points hash equally
    bits = np.ascontiguousarray(np.asarray(x, dtype=np.float64) + 0.0).view(np.uint64)
    with np.errstate(over="ignore"):
        h = np.full(bits.shape[:-1], np.uint64(seed & 0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
        for j in range(bits.shape[-1]):
            h = _splitmix(h ^ bits[..., j])
        h = _splitmix(h)
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return special.ndtri(u)


@dataclass(frozen=True)
class SurrogateSpec:
    """Base class: a surrogate ``g`` tied to the ground-truth objective ``base``."""

    base: QuadraticObjective

    kind = "abstract"

    def _values(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.base.dim:
            raise InvalidInputError(f"point dimension {x.shape[-1]} does not match d={self.base.dim}")
        val = np.asarray(self._values(x), dtype=float)
        return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class Exact(SurrogateSpec):
    kind = "exact"

    def _values(self, x):
        return self.base(x)


@dataclass(frozen=True)
class Negated(SurrogateSpec):
    kind = "negated"

    def _values(self, x):
        return -np.asarray(self.base(x))


@dataclass(frozen=True)
class AdditiveNoise(SurrogateSpec):
    """``f(x) + sigma * eps(x)`` where ``eps`` is a seeded hash of the coordinates of ``x``."""

    sigma: float = 1.0
    seed: int = 0
    kind = "noise"

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidInputError("noise level sigma must be positive and finite")

    def _values(self, x):
        return self.base(x) + self.sigma * hashed_normal(x, self.seed)


@dataclass(frozen=True, eq=False)
class HessianPerturbed(SurrogateSpec):
    """A different convex quadratic ``1/2 (x - x~)^T A~ (x - x~)``."""

    hessian: np.ndarray = None
    optimum: np.ndarray = None
    kind = "hessian"

    def __post_init__(self):
        q = QuadraticObjective(self.hessian, self.optimum)
        if q.dim != self.base.dim:
            raise InvalidInputError("perturbed quadratic must match the base dimension")
        object.__setattr__(self, "_quad", q)

    @classmethod
    def around(cls, base: QuadraticObjective, eps: float, rng: np.random.Generator) -> HessianPerturbed:
        """Perturb ``A`` to ``B A B^T`` with ``B = I + eps G`` and shift ``x*`` by ``eps`` noise."""
        d = base.dim
        b = np.eye(d) + eps * rng.standard_normal((d, d)) / math.sqrt(d)
        a = b @ base.hessian @ b.T
        a = 0.5 * (a + a.T)
        if cholesky_or_none(a) is None:
            raise InvalidInputError("perturbation too large: hessian lost positive definiteness")
        scale = 1.0 / math.sqrt(np.linalg.eigvalsh(base.hessian)[-1])
        shift = eps * scale * rng.standard_normal(d)
        return cls(base, a, base.optimum + shift)

    def _values(self, x):
        return self._quad(x)


@dataclass(frozen=True, eq=False)
class BlockSwap(SurrogateSpec):
    """Reverse the f-order inside the best ``mu/lam`` quantile block and inside the rest.

    The block boundary is the ``mu/lam`` quantile ``t`` of ``f`` under a frozen
    reference distribution.  Points with ``f <= t`` get ``-f``; the others get
    ``1 + 1/(1 + f - t)``, which is strictly decreasing in ``f`` and above every
    first-block value.  This has the same ordering as reversing quantiles within
    ``[0, mu/lam]`` and within ``(mu/lam, 1]``.
    """

    mu: int = 1
    lam: int = 2
    threshold: float = 0.0
    kind = "blockswap"

    @classmethod
    def from_reference(cls, base: QuadraticObjective, mu: int, lam: int, theta_ref: GaussianParams,
                       reference_size: int, rng: np.random.Generator) -> BlockSwap:
        if not 1 <= mu < lam:
            raise InvalidInputError("block swap needs 1 <= mu < lambda")
        x = theta_ref.transform(rng.standard_normal((reference_size, theta_ref.dim)))
        t = float(np.quantile(base(x), mu / lam))
        return cls(base, mu, lam, t)

    def _values(self, x):
        fx = np.asarray(self.base(x), dtype=float)
        return np.where(fx <= self.threshold, -fx, 1.0 + 1.0 / (1.0 + (fx - self.threshold)))


@dataclass(frozen=True, eq=False)
class External(SurrogateSpec):
    """Wrap a caller-supplied ``evaluator(x) -> float`` for a single d-vector.

    Evaluators that are not declared thread-safe are serialised behind a lock.
    Exceptions and non-finite results surface as SurrogateEvaluationError.
    """

    evaluator: Callable[[np.ndarray], float] = None
    thread_safe: bool = False
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)
    kind = "external"

    def _one(self, x):
        try:
            v = float(self.evaluator(x))
        except Exception as exc:
            raise SurrogateEvaluationError(f"external surrogate failed: {exc}") from exc
        if not math.isfinite(v):
            raise SurrogateEvaluationError(f"external surrogate returned a non-finite value {v!r}")
        return v

    def _values(self, x):
        pts = x.reshape(-1, x.shape[-1])
        if self.thread_safe:
            out = [self._one(p) for p in pts]
        else:
            with self._lock:
                out = [self._one(p) for p in pts]
        return np.array(out).reshape(x.shape[:-1])


def evaluate(spec: SurrogateSpec, x):
    return spec(x)


@dataclass(frozen=True)
class GateDecision:
    use_surrogate: bool
    measured: CorrelationEstimate
    threshold: float
    kind: str


def gate(measured: CorrelationEstimate, threshold: float, kind: str) -> GateDecision:
    """Admit the surrogate iff the measured correlation reaches the threshold."""
    if not -1.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold {threshold!r} outside [-1, 1]")
    if kind not in ("kendall", "pearson"):
        raise InvalidInputError(f"unknown correlation kind {kind!r}")
    return GateDecision(bool(measured.value >= threshold), measured, float(threshold), kind)


def admissible_threshold(scheme: WeightScheme, kind: str) -> float:
    """Lower end of the open threshold interval that guarantees expected descent."""
    return admissible_lower_bound(scheme, kind)


def calibrate_noise(base: QuadraticObjective, theta: GaussianParams, target: float, *, rng: np.random.Generator,
                    kind: str = "kendall", scheme: WeightScheme | None = None, seed: int = 0,
                    n: int = 200_000, reference_size: int = 100_000) -> float:
    """Noise level whose population correlation with ``base`` at ``theta`` is close to ``target``.

    Bisection on ``log(sigma)`` that keeps the larger candidate whose
    correlation still reaches ``target``.  Every evaluation replays the same
    random draws, so the estimate is a deterministic function of ``sigma``.
    """
    if not -1.0 < target < 1.0:
        raise InvalidInputError("target correlation must lie in (-1, 1)")
    if kind == "pearson" and scheme is None:
        raise InvalidInputError("Pearson calibration needs a weight scheme")
    state = rng.bit_generator.state

    def corr_at(log_sigma):
        rng.bit_generator.state = state
        g = AdditiveNoise(base, math.exp(log_sigma), seed)
        if kind == "kendall":
            return population_tau(base, g, theta, n, rng).value
        return population_rho(base, g, theta, scheme, n, reference_size, rng).value

    rng.bit_generator.state = state
    spread = float(np.std(base(theta.transform(rng.standard_normal((1000, theta.dim))))))
    lo, hi = math.log(spread) - 14.0, math.log(spread) + 3.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if corr_at(mid) >= target:
            lo = mid
        else:
            hi = mid
    rng.bit_generator.state = state
    return math.exp(lo)


def blockswap_tau_enumerated(lam: int, mu: int) -> float:
    """Kendall tau between f-ranks ``1..lam`` and the block-reversed ordering, by pair enumeration."""
    g_rank = [mu - i for i in range(mu)] + [lam - j for j in range(lam - mu)]
    conc = disc = 0
    for i in range(lam):
        for j in range(i + 1, lam):
            if g_rank[i] < g_rank[j]:
                conc += 1
            else:
                disc += 1
    return (conc - disc) / (lam * (lam - 1) / 2)


def blockswap_tau_closed_form(lam: int, mu: int) -> float:
    """Closed form ``-((lam - 2 mu)^2 + lam) / (lam^2 + lam)`` quoted for this example; reference only."""
    return -((lam - 2 * mu) ** 2 + lam) / (lam * lam + lam)
