"""Monte-Carlo checks of the descent bounds and identities, and the gated optimisation loop.

Every check returns a :class:`BoundCheckReport`.  Bounds are one-sided
(``lhs <= rhs``), identities two-sided (``lhs == rhs``); both are judged at
four standard errors.  Randomness comes from a :class:`StreamKey` so that a
check's result depends only on the seed and its name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .correlation import (
    CorrelationEstimate,
    ReferenceCDF,
    estimate_Kw,
    kendall_tau_b,
    pearson_weights,
    population_rho,
    population_tau,
    utility_pairs,
)
from .errors import HypothesisError, InvalidInputError, StepRejectedError, UndefinedCorrelationError
from .gaussian import (
    GaussianParams,
    QuadraticObjective,
    apply_step,
    assemble_delta,
    expected_objective_J,
    metric_norm_M_f,
    theory_rates,
    trace_finv_h,
)
from .ranking import WeightScheme, n_w_constant, utilities
from .rng import StreamKey
from .surrogate import GateDecision, gate
from .utility_poly import UtilityPolynomial, integral_checks, selection_gap_M_w, weight_variance_U_u

__all__ = [
    "Z_SCORE",
    "BoundCheckReport",
    "DriftRecord",
    "TrajectoryRow",
    "check_quadratic_term",
    "check_descent",
    "check_kendall_bound",
    "check_pearson_identity",
    "check_variance_identity",
    "check_conditional_weight",
    "check_integrals",
    "check_drift_theorem",
    "drift_reports",
    "gated_trajectory",
    "one_step_drift",
]

Z_SCORE = 4.0
HOLDS = "holds"
WITHIN_NOISE = "violated-within-noise"
VIOLATED = "violated"


@dataclass(frozen=True)
class BoundCheckReport:
    name: str
    lhs_estimate: float
    lhs_std_error: float
    rhs_bound: float
    n_replicates: int
    two_sided: bool = False
    abs_tol: float = 0.0

    @property
    def slack(self) -> float:
        return self.rhs_bound - self.lhs_estimate

    @property
    def margin(self) -> float:
        return Z_SCORE * self.lhs_std_error + self.abs_tol

    @property
    def verdict(self) -> str:
        """``holds`` iff the estimate is within ``margin`` of the bound, otherwise ``violated``.

        The two outcomes partition every estimate, so ``violated-within-noise``
        is part of the vocabulary but never produced.
        """
        if self.two_sided:
            return HOLDS if abs(self.slack) <= self.margin else VIOLATED
        return HOLDS if self.lhs_estimate <= self.rhs_bound + self.margin else VIOLATED

    @property
    def ok(self) -> bool:
        return self.verdict == HOLDS


@dataclass(frozen=True)
class DriftRecord:
    iteration: int
    J_before: float
    drift_mean: float
    J_std_error: float
    alpha_used: float
    gate: GateDecision
    bound_rhs: float
    spd_rejections: int = 0
    replicates: int = 0

    @property
    def J_mean_after(self) -> float:
        return self.J_before + self.drift_mean

    def report(self, prefix: str) -> BoundCheckReport:
        return BoundCheckReport(f"{prefix}/iter-{self.iteration:03d}", self.drift_mean, self.J_std_error,
                                self.bound_rhs, self.replicates)


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    se = float(np.std(v, ddof=1)) / math.sqrt(v.size) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def _population(theta: GaussianParams, key: StreamKey, replicates: int, lam: int) -> np.ndarray:
    return theta.transform(key.normals(replicates, (lam, theta.dim)))


def check_quadratic_term(theta: GaussianParams, obj: QuadraticObjective, g, scheme: WeightScheme,
                         replicates: int, rng: StreamKey, name: str = "quadratic-term") -> BoundCheckReport:
    """``E[Delta_g^T H Delta_g] <= N_w Tr(CA)`` with ``H = diag(A, 0)``, for any measurable ``g``."""
    if replicates < 1000:
        raise InvalidInputError("need at least 1000 replicates")
    x = _population(theta, rng, replicates, scheme.lam)
    w = utilities(g(x), scheme)
    d_mean = np.einsum("ri,rij->rj", w, x - theta.mean)
    quad = np.einsum("ri,ij,rj->r", d_mean, obj.hessian, d_mean)
    mean, se = _mean_se(quad)
    return BoundCheckReport(name, mean, se, n_w_constant(scheme) * trace_finv_h(theta, obj), replicates)


def check_descent(theta: GaussianParams, obj: QuadraticObjective, scheme: WeightScheme, replicates: int,
                  rng: StreamKey, name: str = "descent") -> BoundCheckReport:
    """``grad J^T E[Delta_f] <= -(sqrt 2 / 6) M_w sqrt(M_f)``.

    The inner product is estimated as ``E[sum_i W_i (f(x_i) - J)]``.  Schemes
    with equal weights are accepted as the degenerate boundary where both
    sides vanish; any increasing pair of weights is rejected.
    """
    if not scheme.nonincreasing:
        raise HypothesisError("descent bound needs w_i >= w_j for all i < j")
    if replicates < 10_000:
        raise InvalidInputError("need at least 10000 replicates")
    x = _population(theta, rng, replicates, scheme.lam)
    fx = obj(x)
    w = utilities(fx, scheme)
    inner = np.sum(w * (fx - expected_objective_J(theta, obj)), axis=-1)
    mean, se = _mean_se(inner)
    rhs = -math.sqrt(2.0) / 6.0 * selection_gap_M_w(scheme) * math.sqrt(metric_norm_M_f(theta, obj))
    return BoundCheckReport(name, mean, se, rhs, replicates)


def empirical_beta(theta, obj, scheme, replicates, rng) -> tuple[float, float]:
    """Measured ``-grad J^T E[Delta_f] / (N_w Tr(CA))`` and its standard error."""
    rep = check_descent(theta, obj, scheme, replicates, rng)
    scale = n_w_constant(scheme) * trace_finv_h(theta, obj)
    return -rep.lhs_estimate / scale, rep.lhs_std_error / scale


def check_kendall_bound(theta: GaussianParams, obj: QuadraticObjective, g, scheme: WeightScheme, s: float,
                        samples: int, rng: StreamKey, *, reference_size: int = 100_000, n_pairs: int | None = None,
                        name: str = "moment-bound") -> BoundCheckReport:
    """``E[|u(P_f) - u(P_g)|^s]^(1/s) <= L_u ((1 - tau) / 2)^(1/s)`` for ``s >= 1``.

    ``tau`` is itself a Monte-Carlo estimate, so the reported standard error
    combines the uncertainty of both sides (delta method).
    """
    if s < 1:
        raise InvalidInputError("moment order s must be at least 1")
    if samples < 10_000:
        raise InvalidInputError("need at least 10000 samples")
    a, b, _ = utility_pairs(obj, g, theta, scheme, samples, reference_size, rng.child("moment").generator())
    tau = population_tau(obj, g, theta, n_pairs or samples, rng.child("tau").generator())
    l_u = UtilityPolynomial(scheme).lipschitz
    powers = np.abs(a - b) ** s
    m, m_se = _mean_se(powers)
    lhs = m ** (1.0 / s)
    lhs_se = m_se * lhs / (s * m) if m > 0 else 0.0
    half_gap = max((1.0 - tau.value) / 2.0, 0.0)
    rhs = l_u * half_gap ** (1.0 / s)
    rhs_se = l_u * half_gap ** (1.0 / s - 1.0) * tau.std_error / (2.0 * s) if half_gap > 0 else 0.0
    return BoundCheckReport(name, lhs, math.hypot(lhs_se, rhs_se), rhs, samples)


def check_pearson_identity(theta: GaussianParams, obj: QuadraticObjective, g, scheme: WeightScheme, samples: int,
                           rng: StreamKey, *, reference_size: int = 100_000, name: str = "pearson") -> BoundCheckReport:
    """Two-sided ``K_w = 2 U_u (1 - rho)`` from independent estimates of each side."""
    if samples < 10_000:
        raise InvalidInputError("need at least 10000 samples")
    u_var = weight_variance_U_u(scheme)
    if u_var <= 0.0:
        raise UndefinedCorrelationError("identity check needs a non-constant utility polynomial")
    kw = estimate_Kw(obj, g, theta, scheme, samples, reference_size, rng.child("kw").generator())
    rho = population_rho(obj, g, theta, scheme, samples, reference_size, rng.child("rho").generator())
    rhs = 2.0 * u_var * (1.0 - rho.value)
    se = math.hypot(kw.std_error, 2.0 * u_var * rho.std_error)
    return BoundCheckReport(name, kw.estimate, se, rhs, samples, two_sided=True, abs_tol=kw.bias_bound)


def check_variance_identity(theta: GaussianParams, obj: QuadraticObjective, samples: int, rng: StreamKey,
                            name: str = "variance") -> BoundCheckReport:
    """Two-sided ``Var[f(X)] = M_f(theta)``."""
    if samples < 10_000:
        raise InvalidInputError("need at least 10000 samples")
    fx = obj(theta.transform(rng.generator().standard_normal((samples, theta.dim))))
    c = fx - fx.mean()
    var = float(np.sum(c * c)) / (samples - 1)
    m4 = float(np.mean(c**4))
    se = math.sqrt(max(m4 - var * var, 0.0) / samples)
    return BoundCheckReport(name, var, se, metric_norm_M_f(theta, obj), samples, two_sided=True)


def check_conditional_weight(theta: GaussianParams, obj: QuadraticObjective, scheme: WeightScheme, x_probe,
                             replicates: int, rng: StreamKey, *, reference_size: int = 100_000,
                             name: str = "condweight") -> BoundCheckReport:
    """Two-sided ``E[W_1 | x_1] = u(P_f(f(x_1))) / lam`` at a fixed probe point."""
    if replicates < 10_000:
        raise InvalidInputError("need at least 10000 replicates")
    lam = scheme.lam
    probe = np.asarray(x_probe, dtype=float)
    others = _population(theta, rng.child("others"), replicates, lam - 1)
    pop = np.concatenate([np.broadcast_to(probe, (replicates, 1, theta.dim)), others], axis=1)
    w1 = utilities(obj(pop), scheme)[:, 0]
    mean, se = _mean_se(w1)
    ref = ReferenceCDF(obj, obj, theta, reference_size, rng.child("reference").generator())
    p = ref.p_f(obj(probe))
    poly = UtilityPolynomial(scheme)
    rhs = poly(p) / lam
    rhs_se = poly.lipschitz * math.sqrt(p * (1.0 - p) / reference_size) / lam
    # abs_tol absorbs rounding when every replicate has the same weight
    return BoundCheckReport(name, mean, math.hypot(se, rhs_se), rhs, replicates, two_sided=True, abs_tol=1e-12)


def check_integrals(scheme: WeightScheme, name: str = "integrals") -> list[BoundCheckReport]:
    """Closed-form ``int u`` and ``int u^2`` against Gauss-Legendre quadrature exact at this degree."""
    n = scheme.lam + 1
    nodes, weights = np.polynomial.legendre.leggauss(n)
    p = 0.5 * (nodes + 1.0)
    u = UtilityPolynomial(scheme)(p)
    quad_u = 0.5 * math.fsum(weights * u)
    quad_u2 = 0.5 * math.fsum(weights * u * u)
    int_u, int_u2 = integral_checks(scheme)
    return [
        BoundCheckReport(f"{name}/int-u", quad_u, 0.0, int_u, n, two_sided=True, abs_tol=1e-12),
        BoundCheckReport(f"{name}/int-u2", quad_u2, 0.0, int_u2, n, two_sided=True, abs_tol=1e-10),
    ]


# --- gated optimisation --------------------------------------------------------------------------


def _sample_statistic(kind: str, fx: np.ndarray, gx: np.ndarray, scheme: WeightScheme) -> float:
    try:
        if kind == "kendall":
            return kendall_tau_b(fx, gx)
        return pearson_weights(utilities(fx, scheme), utilities(gx, scheme))
    except UndefinedCorrelationError:
        return -1.0


def _bound_rhs(theta, obj, scheme, alpha, beta, gamma) -> float:
    return (-alpha * beta * (1.0 - gamma) + 0.5 * alpha * alpha) * n_w_constant(scheme) * trace_finv_h(theta, obj)


def one_step_drift(theta: GaussianParams, obj: QuadraticObjective, g, scheme: WeightScheme, alpha: float,
                   replicates: int, rng: StreamKey, use_surrogate: Callable[[np.ndarray, np.ndarray], np.ndarray]):
    """Replicated ``J(theta + alpha Delta) - J(theta)`` over fresh populations from ``theta``.

    ``use_surrogate(fx, gx)`` returns, per replicate, whether ``Delta_g`` is
    taken.  The drift is evaluated by its exact expansion
    ``alpha grad J^T Delta + alpha^2/2 d_m^T A d_m``, which avoids cancellation.
    """
    x = _population(theta, rng, replicates, scheme.lam)
    fx = obj(x)
    gx = g(x)
    pick = np.asarray(use_surrogate(fx, gx), dtype=bool)
    w = np.where(pick[:, None], utilities(gx, scheme), utilities(fx, scheme))
    delta = assemble_delta(theta, x, w)
    a = obj.hessian
    grad_m = a @ (theta.mean - obj.optimum)
    lin = delta.d_mean @ grad_m + 0.5 * np.einsum("rjk,jk->r", delta.d_cov, a)
    quad = np.einsum("ri,ij,rj->r", delta.d_mean, a, delta.d_mean)
    return _mean_se(alpha * lin + 0.5 * alpha * alpha * quad)


@dataclass
class _GateState:
    kind: str
    threshold: float
    source: str
    scheme: WeightScheme
    ema_decay: float = 0.5
    ema: float | None = None

    def combine(self, stat):
        if self.source == "ema" and self.ema is not None:
            return self.ema_decay * self.ema + (1.0 - self.ema_decay) * stat
        return stat

    def per_replicate(self, fx: np.ndarray, gx: np.ndarray) -> np.ndarray:
        stats_ = np.array([_sample_statistic(self.kind, f, g, self.scheme) for f, g in zip(fx, gx)])
        return self.combine(stats_) >= self.threshold


def gated_trajectory(theta0: GaussianParams, obj: QuadraticObjective, g, scheme: WeightScheme, *,
                     threshold: float, kind: str, alpha: float, beta: float, gamma: float, iterations: int,
                     replicates: int, rng: StreamKey, gate_source: str = "population", gate_budget: int = 10_000,
                     reference_size: int = 100_000, ema_decay: float = 0.5,
                     on_step: Callable[[GaussianParams], None] | None = None) -> list[DriftRecord]:
    """Advance ``theta`` along realised gated steps, recording the replicated one-step drift.

    ``gate_source`` chooses the measured correlation: ``population`` (a
    Monte-Carlo estimate at ``theta`` fixes the decision for the iteration),
    ``sample`` (each population's own statistic) or ``ema`` (moving average of
    the sample statistic).  A step that breaks positive definiteness is retried
    with half the learning rate and counted.
    """
    if gate_source not in ("population", "sample", "ema"):
        raise InvalidInputError(f"unknown gate source {gate_source!r}")
    if alpha < 0:
        raise InvalidInputError("learning rate must be non-negative")
    state = _GateState(kind, threshold, gate_source, scheme, ema_decay)
    theta = theta0
    records = []
    for t in range(iterations):
        key = rng.child(f"iter-{t}")
        j_before = expected_objective_J(theta, obj)
        x = _population(theta, key.child("step"), 1, scheme.lam)[0]
        fx, gx = obj(x), g(x)
        stat = _sample_statistic(kind, fx, gx, scheme)
        if gate_source == "population":
            gen = key.child("gate").generator()
            if kind == "kendall":
                measured = population_tau(obj, g, theta, gate_budget, gen)
            else:
                measured = population_rho(obj, g, theta, scheme, gate_budget, reference_size, gen)
            decision = gate(measured, threshold, kind)
            fixed = decision.use_surrogate

            def chooser(f_, g_, fixed=fixed):
                return np.full(f_.shape[0], fixed)
        else:
            decision = gate(CorrelationEstimate(float(state.combine(stat)), 0.0, scheme.lam), threshold, kind)
            chooser = state.per_replicate
        rhs = _bound_rhs(theta, obj, scheme, alpha, beta, gamma)
        if alpha > 0 and replicates > 1:
            drift, drift_se = one_step_drift(theta, obj, g, scheme, alpha, replicates, key.child("drift"), chooser)
        else:
            drift, drift_se = 0.0, 0.0
        if gate_source == "ema":
            state.ema = decision.measured.value
        vals = gx if decision.use_surrogate else fx
        delta = assemble_delta(theta, x, utilities(vals, scheme))
        step_alpha, rejections = alpha, 0
        if alpha > 0:
            while True:
                try:
                    theta_next = apply_step(theta, delta, step_alpha)
                    break
                except StepRejectedError:
                    rejections += 1
                    step_alpha *= 0.5
                    if rejections > 60:
                        theta_next = theta
                        break
        else:
            theta_next = theta
        records.append(DriftRecord(t, j_before, drift, drift_se, step_alpha, decision, rhs, rejections, replicates))
        theta = theta_next
        if on_step is not None:
            on_step(theta)
    return records


def check_drift_theorem(theta0: GaussianParams, obj: QuadraticObjective, spec, scheme: WeightScheme,
                        threshold: float, kind: str, alpha: float, iterations: int, replicates: int, rng: StreamKey,
                        **kwargs) -> list[DriftRecord]:
    """Drift of the gated update against ``(-alpha beta (1 - gamma) + alpha^2/2) N_w Tr(CA)``.

    Preconditions are validated before any sampling: a strictly monotone
    scheme, a threshold inside the admissible interval and
    ``0 <= alpha < 2 beta (1 - gamma)``.
    """
    rates = theory_rates(scheme, theta0.dim, threshold, kind)
    if not 0.0 <= alpha < rates.alpha_max:
        raise InvalidInputError(f"learning rate {alpha!r} not in [0, {rates.alpha_max!r})")
    return gated_trajectory(theta0, obj, spec, scheme, threshold=threshold, kind=kind, alpha=alpha,
                            beta=rates.beta, gamma=rates.gamma, iterations=iterations, replicates=replicates,
                            rng=rng, **kwargs)


def drift_reports(records: Iterable[DriftRecord], prefix: str) -> list[BoundCheckReport]:
    return [r.report(prefix) for r in records]


@dataclass(frozen=True)
class TrajectoryRow:
    iteration: int
    J: float
    J_drift_mean: float
    J_drift_stderr: float
    bound_rhs: float
    tau_or_rho_measured: float
    gate_used: bool
    alpha: float
    spd_rejections: int

    @classmethod
    def header(cls) -> list[str]:
        return list(cls.__dataclass_fields__)

    def values(self) -> list:
        return [getattr(self, k) for k in self.header()]


def trajectory_rows(records: list[DriftRecord], final_J: float) -> list[TrajectoryRow]:
    """Row ``t`` holds ``J(theta_t)`` and describes the step taken from ``theta_t``.

    The last row carries the final ``J`` with zero step fields.
    """
    rows = [
        TrajectoryRow(r.iteration, r.J_before, r.drift_mean, r.J_std_error, r.bound_rhs, r.gate.measured.value,
                      r.gate.use_surrogate, r.alpha_used, r.spd_rejections)
        for r in records
    ]
    rows.append(TrajectoryRow(len(records), final_J, 0.0, 0.0, 0.0, 0.0, False, 0.0, 0))
    return rows
