"""Builds instances, the verification suite and optimisation runs from an :class:`ExperimentConfig`.

Every random choice draws from a :class:`StreamKey` named after what it
builds, so a check's result depends on the seed and its name only, never on
which thread runs it or in what order.
"""

from __future__ import annotations

import fnmatch
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .config import ExperimentConfig
from .correlation import estimate_Kw
from .errors import ConfigError, InvalidInputError
from .gaussian import (
    GaussianParams,
    QuadraticObjective,
    admissible_lower_bound,
    beta_for,
    expected_objective_J,
    gamma_for,
    random_spd,
    theory_rates,
)
from .harness import (
    BoundCheckReport,
    TrajectoryRow,
    check_conditional_weight,
    check_descent,
    check_drift_theorem,
    check_integrals,
    check_kendall_bound,
    check_pearson_identity,
    check_quadratic_term,
    check_variance_identity,
    drift_reports,
    gated_trajectory,
    trajectory_rows,
)
from .ranking import WeightScheme
from .rng import StreamKey
from .surrogate import AdditiveNoise, BlockSwap, Exact, HessianPerturbed, Negated, SurrogateSpec, calibrate_noise

__all__ = [
    "FAMILIES",
    "Check",
    "build_scheme",
    "build_objective",
    "initial_theta",
    "resolve_threshold",
    "resolve_alpha",
    "build_surrogate",
    "build_suite",
    "select_checks",
    "run_checks",
    "run_monotone_experiment",
]

FAMILIES = ("integrals", "quadratic-term", "descent", "moment-bound", "pearson", "variance", "condweight",
            "drift-kendall", "drift-pearson")

# relative gap to 1 left above the admissible threshold by ``threshold = auto``
AUTO_THRESHOLD_GAP = 1e-4
# the calibrated noise keeps 1 - correlation at this fraction of 1 - threshold
NOISE_MARGIN = 0.1
HESSIAN_EPS = 0.3


def build_scheme(cfg: ExperimentConfig, lam: int | None = None) -> WeightScheme:
    lam = cfg.lam if lam is None else lam
    head, _, arg = cfg.weights.partition(":")
    if head == "truncation":
        mu = int(arg) if arg else None
        if mu is not None and mu > lam:
            raise ConfigError(f"truncation mu={mu} exceeds lambda={lam}")
        return WeightScheme.truncation(lam, mu)
    if head == "equal":
        return WeightScheme.equal(lam)
    if head == "linear":
        return WeightScheme.linear(lam)
    w = tuple(float(t) for t in cfg.weights.split(","))
    if len(w) != lam:
        raise ConfigError(f"explicit weights have {len(w)} entries, lambda is {lam}")
    return WeightScheme(w)


def _broadcast(vals: tuple[float, ...], d: int) -> np.ndarray:
    return np.full(d, vals[0]) if len(vals) == 1 else np.array(vals, dtype=float)


def build_objective(cfg: ExperimentConfig, rng: np.random.Generator) -> QuadraticObjective:
    d = cfg.dimension
    head, _, arg = cfg.eigenvalues.partition(":")
    if head == "ones":
        eig = np.ones(d)
    elif head == "linear":
        eig = np.arange(1.0, d + 1.0)
    elif head == "loguniform":
        eig = np.logspace(0.0, math.log10(float(arg)), d)
    else:
        eig = np.array([float(t) for t in cfg.eigenvalues.split(",")])
    a = np.diag(eig)
    if cfg.rotate and d > 1:
        q = stats.ortho_group.rvs(d, random_state=rng)
        a = q @ a @ q.T
    return QuadraticObjective(a, _broadcast(cfg.optimum, d))


def initial_theta(cfg: ExperimentConfig) -> GaussianParams:
    d = cfg.dimension
    return GaussianParams(_broadcast(cfg.mean0, d), np.diag(_broadcast(cfg.cov0, d)))


def resolve_threshold(cfg: ExperimentConfig, scheme: WeightScheme, kind: str) -> float:
    """The configured threshold, or for ``auto`` a point just inside the admissible interval."""
    if cfg.threshold_value is not None:
        return cfg.threshold_value
    lower = admissible_lower_bound(scheme, kind)
    return lower + AUTO_THRESHOLD_GAP * (1.0 - lower)


def resolve_alpha(cfg: ExperimentConfig, scheme: WeightScheme, d: int, threshold: float, kind: str) -> float:
    """Learning rate for the alpha policy; the theorem policies need an admissible threshold."""
    fixed = cfg.fixed_alpha
    if fixed is not None:
        return fixed
    try:
        rates = theory_rates(scheme, d, threshold, kind)
    except InvalidInputError as exc:
        raise ConfigError(f"alpha = {cfg.alpha} cannot be resolved: {exc}") from None
    return rates.alpha_opt if cfg.alpha == "optimal" else 0.99 * rates.alpha_max


def build_surrogate(cfg: ExperimentConfig, obj: QuadraticObjective, theta: GaussianParams, scheme: WeightScheme,
                    threshold: float, kind: str, key: StreamKey) -> SurrogateSpec:
    head, _, arg = cfg.surrogate.partition(":")
    if head == "exact":
        return Exact(obj)
    if head == "negated":
        return Negated(obj)
    if head == "noise":
        if arg == "auto":
            sigma = calibrate_noise(obj, theta, 1.0 - NOISE_MARGIN * (1.0 - threshold), rng=key.generator(),
                                    kind=kind, scheme=scheme, seed=cfg.surrogate_seed, n=cfg.calibration_samples,
                                    reference_size=cfg.reference_size)
        else:
            sigma = float(arg)
        return AdditiveNoise(obj, sigma, cfg.surrogate_seed)
    if head == "hessian":
        return HessianPerturbed.around(obj, float(arg), key.generator())
    mu = int(arg) if arg else scheme.lam // 2
    return BlockSwap.from_reference(obj, mu, scheme.lam, theta, cfg.reference_size, key.generator())


# --- verification suite --------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    family: str
    run: Callable[[], list[BoundCheckReport]]
    validate: Callable[[], None] | None = None


@dataclass(frozen=True)
class _Instance:
    label: str
    obj: QuadraticObjective
    theta: GaussianParams
    scheme: WeightScheme
    surrogates: dict


def _random_instance(key: StreamKey, d: int, log10_range=(-2.0, 2.0)) -> tuple[QuadraticObjective, GaussianParams]:
    gen = key.generator()
    a = random_spd(d, gen, log10_range)
    opt = gen.standard_normal(d)
    mean = opt + gen.standard_normal(d)
    cov = random_spd(d, gen, (-0.5, 0.5))
    return QuadraticObjective(a, opt), GaussianParams(mean, cov)


def _grid_instance(cfg: ExperimentConfig, d: int, lam: int) -> _Instance:
    label = f"d{d}-lam{lam}"
    key = StreamKey(cfg.seed, f"instance/{label}")
    obj, theta = _random_instance(key, d)
    scheme = WeightScheme.truncation(lam)
    suite = {"exact": Exact(obj), "negated": Negated(obj)}
    for sigma in cfg.noise_sigmas:
        suite[f"noise-{sigma:g}"] = AdditiveNoise(obj, sigma, cfg.surrogate_seed)
    suite["hessian"] = HessianPerturbed.around(obj, HESSIAN_EPS, key.child("hessian").generator())
    suite["blockswap"] = BlockSwap.from_reference(obj, lam // 2, lam, theta, cfg.reference_size,
                                                  key.child("blockswap").generator())
    return _Instance(label, obj, theta, scheme, suite)


def _kw_negated_check(cfg: ExperimentConfig, name: str) -> list[BoundCheckReport]:
    """For ``lam = 2, w = (1, 0)`` and ``g = -f`` the utility gap squared has mean 4/3."""
    scheme = WeightScheme((1.0, 0.0))
    obj = QuadraticObjective.sphere(2)
    theta = GaussianParams(np.ones(2), np.eye(2))
    est = estimate_Kw(obj, Negated(obj), theta, scheme, cfg.samples, cfg.reference_size,
                      StreamKey(cfg.seed, name).generator())
    return [BoundCheckReport(name, est.estimate, est.std_error, 4.0 / 3.0, est.n_samples, two_sided=True,
                             abs_tol=est.bias_bound)]


def _drift_setup(cfg: ExperimentConfig, kind: str, d: int, shape: str):
    scheme = build_scheme(cfg)
    obj = QuadraticObjective.sphere(d) if shape == "sphere" else QuadraticObjective.diagonal(np.arange(1.0, d + 1.0))
    theta0 = GaussianParams(np.ones(d), np.eye(d))
    threshold = resolve_threshold(cfg, scheme, kind)
    rates = theory_rates(scheme, d, threshold, kind)
    alpha = resolve_alpha(cfg, scheme, d, threshold, kind)
    if not 0.0 <= alpha < rates.alpha_max:
        raise InvalidInputError(f"learning rate {alpha!r} not in [0, {rates.alpha_max!r}) for {kind} d={d}")
    return scheme, obj, theta0, threshold, alpha


def _validate_drift(cfg: ExperimentConfig, kind: str, d: int, shape: str) -> None:
    _drift_setup(cfg, kind, d, shape)


def _drift_check(cfg: ExperimentConfig, kind: str, d: int, shape: str, name: str) -> list[BoundCheckReport]:
    scheme, obj, theta0, threshold, alpha = _drift_setup(cfg, kind, d, shape)
    key = StreamKey(cfg.seed, name)
    sigma = calibrate_noise(obj, theta0, 1.0 - NOISE_MARGIN * (1.0 - threshold), rng=key.child("calibrate").generator(),
                            kind=kind, scheme=scheme, seed=cfg.surrogate_seed, n=cfg.calibration_samples,
                            reference_size=cfg.reference_size)
    spec = AdditiveNoise(obj, sigma, cfg.surrogate_seed)
    records = check_drift_theorem(theta0, obj, spec, scheme, threshold, kind, alpha, cfg.drift_iterations,
                                  cfg.drift_replicates, key.child("trajectory"), gate_budget=cfg.gate_budget,
                                  reference_size=cfg.reference_size)
    return drift_reports(records, name)


def build_suite(cfg: ExperimentConfig) -> list[Check]:
    """Every check of the verification suite in a fixed order.

    Instances are built eagerly (they are cheap); the Monte-Carlo work runs
    only when a check's ``run`` is called.
    """
    checks: list[Check] = []
    lams = sorted(set(cfg.lambdas) | set(cfg.probe_lambdas) | {cfg.lam})
    for lam in lams:
        for label, scheme in (("truncation", WeightScheme.truncation(lam)), ("linear", WeightScheme.linear(lam))):
            name = f"integrals/lam{lam}-{label}"
            checks.append(Check(name, "integrals", lambda s=scheme, n=name: check_integrals(s, n)))

    grid = [_grid_instance(cfg, d, lam) for d in cfg.dims for lam in cfg.lambdas]
    n = cfg.samples
    ref = cfg.reference_size
    for inst in grid:
        for sname, g in inst.surrogates.items():
            name = f"quadratic-term/{inst.label}/{sname}"
            checks.append(Check(name, "quadratic-term", lambda i=inst, g=g, nm=name: [
                check_quadratic_term(i.theta, i.obj, g, i.scheme, n, StreamKey(cfg.seed, nm), nm)]))

    random_instances = []
    for i in range(cfg.instances):
        d = cfg.dims[i % len(cfg.dims)]
        lam = cfg.lambdas[(i // len(cfg.dims)) % len(cfg.lambdas)]
        obj, theta = _random_instance(StreamKey(cfg.seed, f"instance/random-{i:02d}"), d)
        random_instances.append((f"inst-{i:02d}-d{d}-lam{lam}", obj, theta, WeightScheme.truncation(lam)))
    for label, obj, theta, scheme in random_instances:
        name = f"descent/{label}"
        checks.append(Check(name, "descent", lambda o=obj, t=theta, s=scheme, nm=name: [
            check_descent(t, o, s, n, StreamKey(cfg.seed, nm), nm)]))

    for inst in grid:
        for sname, g in inst.surrogates.items():
            for s in cfg.s_values:
                name = f"moment-bound/{inst.label}/{sname}/s-{s:g}"
                checks.append(Check(name, "moment-bound", lambda i=inst, g=g, s=s, nm=name: [
                    check_kendall_bound(i.theta, i.obj, g, i.scheme, s, n, StreamKey(cfg.seed, nm),
                                        reference_size=ref, name=nm)]))
    checks.append(Check("moment-bound/lam2-negated/kw", "moment-bound", lambda: _kw_negated_check(cfg, "moment-bound/lam2-negated/kw")))

    for inst in grid:
        for sname, g in inst.surrogates.items():
            name = f"pearson/{inst.label}/{sname}"
            checks.append(Check(name, "pearson", lambda i=inst, g=g, nm=name: [
                check_pearson_identity(i.theta, i.obj, g, i.scheme, n, StreamKey(cfg.seed, nm), reference_size=ref,
                                       name=nm)]))

    for label, obj, theta, _ in random_instances:
        name = f"variance/{label}"
        checks.append(Check(name, "variance", lambda o=obj, t=theta, nm=name: [
            check_variance_identity(t, o, n, StreamKey(cfg.seed, nm), nm)]))

    d0 = cfg.dims[0]
    obj, theta = _random_instance(StreamKey(cfg.seed, "instance/condweight"), d0)
    probe_gen = StreamKey(cfg.seed, "instance/condweight/probes").generator()
    probes = [theta.mean] + [theta.transform(z) for z in probe_gen.standard_normal((cfg.probes - 1, d0))]
    for lam in cfg.probe_lambdas:
        scheme = WeightScheme.truncation(lam)
        for j, probe in enumerate(probes):
            name = f"condweight/lam{lam}/probe-{j}"
            checks.append(Check(name, "condweight", lambda s=scheme, p=probe, nm=name: [
                check_conditional_weight(theta, obj, s, p, n, StreamKey(cfg.seed, nm), reference_size=ref, name=nm)]))

    for kind in ("kendall", "pearson"):
        for d in cfg.dims:
            for shape in ("sphere", "diag"):
                name = f"drift-{kind}/d{d}-{shape}"
                checks.append(Check(name, f"drift-{kind}",
                                    lambda k=kind, d=d, sh=shape, nm=name: _drift_check(cfg, k, d, sh, nm),
                                    lambda k=kind, d=d, sh=shape: _validate_drift(cfg, k, d, sh)))
    return checks


def select_checks(checks: list[Check], pattern: str | None) -> list[Check]:
    """Checks whose name, name prefix or family matches the glob ``pattern``."""
    if pattern is None:
        return list(checks)
    return [c for c in checks
            if fnmatch.fnmatchcase(c.name, pattern) or fnmatch.fnmatchcase(c.family, pattern)
            or c.name.startswith(pattern.rstrip("/") + "/")]


def run_checks(checks: list[Check], threads: int = 1) -> list[BoundCheckReport]:
    """Validate every precondition first, then run the checks; reports come back in suite order."""
    for c in checks:
        if c.validate is not None:
            c.validate()
    if threads <= 1:
        results = [c.run() for c in checks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: c.run(), checks))
    return [r for batch in results for r in batch]


# --- optimisation ---------------------------------------------------------------------------------


def run_monotone_experiment(cfg: ExperimentConfig) -> list[TrajectoryRow]:
    """Gated IGO run from the configured start; one row per iteration plus the final ``J``.

    The bound column uses ``beta`` and ``gamma`` at the configured threshold
    even when it is not admissible, in which case the bound carries no
    guarantee.  Positive-definiteness rejections are recorded, never fatal.
    """
    key = StreamKey(cfg.seed, "optimize")
    scheme = build_scheme(cfg)
    kind = cfg.gate
    obj = build_objective(cfg, key.child("objective").generator())
    theta0 = initial_theta(cfg)
    threshold = resolve_threshold(cfg, scheme, kind)
    alpha = resolve_alpha(cfg, scheme, cfg.dimension, threshold, kind)
    beta = beta_for(scheme, cfg.dimension)
    gamma = gamma_for(scheme, threshold, kind)
    spec = build_surrogate(cfg, obj, theta0, scheme, threshold, kind, key.child("surrogate"))
    final = [theta0]
    records = gated_trajectory(theta0, obj, spec, scheme, threshold=threshold, kind=kind, alpha=alpha, beta=beta,
                               gamma=gamma, iterations=cfg.iterations, replicates=cfg.replicates,
                               rng=key.child("trajectory"), gate_source=cfg.gate_source, gate_budget=cfg.gate_budget,
                               reference_size=cfg.reference_size, ema_decay=cfg.ema_decay,
                               on_step=lambda th: final.__setitem__(0, th))
    return trajectory_rows(records, expected_objective_J(final[0], obj))
