"""Experiment configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored, keys are case-sensitive and an
unknown or repeated key is an error.  Every value is validated when the file
is parsed; anything that depends on the instance (``noise:auto``, the
``auto`` threshold, the alpha policy) is resolved before a run starts.

Keys and defaults::

    dimension = 2               # d
    lambda = 8                  # population size
    weights = truncation        # truncation[:mu] | equal | linear | w1, w2, ...
    eigenvalues = ones          # ones | linear | loguniform:<cond> | a1, a2, ...
    rotate = false              # random rotation of the Hessian
    optimum = 0                 # x*: a scalar (broadcast) or d values
    mean0 = 1                   # initial mean, scalar or d values
    cov0 = 1                    # initial covariance: scalar times I, or d diagonal values
    surrogate = exact           # exact | negated | noise:<sigma> | noise:auto | hessian:<eps> | blockswap[:mu]
    surrogate_seed = 0
    gate = kendall              # kendall | pearson
    gate_source = sample        # sample | ema | population
    ema_decay = 0.5
    gate_budget = 10000         # pairs / points for the population gate estimate
    threshold = auto            # a value in [-1, 1], or auto = admissible + 1e-4 of the gap to 1
    alpha = optimal             # optimal | max | fixed:<value> | <value>
    iterations = 50
    replicates = 1              # drift replicates per iteration in optimize (1 = no drift estimate)
    seed = 0
    samples = 10000             # Monte-Carlo budget per verify check
    reference_size = 100000     # reference sample behind the empirical CDFs
    calibration_samples = 100000  # Monte-Carlo budget per step of the noise:auto calibration
    dims = 2, 5                 # verify grid
    lambdas = 4, 8
    instances = 20              # random quadratics for the descent and variance checks
    s_values = 1, 1.5, 2, 4
    noise_sigmas = 0.1, 1, 10
    probe_lambdas = 2, 3, 8
    probes = 5
    drift_iterations = 10
    drift_replicates = 1000
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError

__all__ = ["ExperimentConfig", "parse_config", "load_config"]

_WEIGHT_PRESETS = ("truncation", "equal", "linear")
_SURROGATES = ("exact", "negated", "noise", "hessian", "blockswap")
_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"values must be finite, got {text!r}")
    return vals


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int = 2
    lam: int = 8
    weights: str = "truncation"
    eigenvalues: str = "ones"
    rotate: bool = False
    optimum: tuple[float, ...] = (0.0,)
    mean0: tuple[float, ...] = (1.0,)
    cov0: tuple[float, ...] = (1.0,)
    surrogate: str = "exact"
    surrogate_seed: int = 0
    gate: str = "kendall"
    gate_source: str = "sample"
    ema_decay: float = 0.5
    gate_budget: int = 10_000
    threshold: str = "auto"
    alpha: str = "optimal"
    iterations: int = 50
    replicates: int = 1
    seed: int = 0
    samples: int = 10_000
    reference_size: int = 100_000
    calibration_samples: int = 100_000
    dims: tuple[int, ...] = (2, 5)
    lambdas: tuple[int, ...] = (4, 8)
    instances: int = 20
    s_values: tuple[float, ...] = (1.0, 1.5, 2.0, 4.0)
    noise_sigmas: tuple[float, ...] = (0.1, 1.0, 10.0)
    probe_lambdas: tuple[int, ...] = (2, 3, 8)
    probes: int = 5
    drift_iterations: int = 10
    drift_replicates: int = 1000

    def __post_init__(self):
        positive = ("dimension", "lam", "gate_budget", "replicates", "samples", "reference_size",
                    "calibration_samples", "instances", "probes", "drift_replicates")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{_key_of(name)} must be positive")
        for name in ("iterations", "drift_iterations"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("dims", "lambdas", "probe_lambdas"):
            vals = getattr(self, name)
            if not vals or min(vals) < 1:
                raise ConfigError(f"{name} must list positive integers")
        if min(self.probe_lambdas) < 2 or min(self.lambdas) < 2 or self.lam < 2:
            raise ConfigError("population sizes must be at least 2")
        if any(s < 1 for s in self.s_values):
            raise ConfigError("s_values must be at least 1")
        if any(s <= 0 for s in self.noise_sigmas):
            raise ConfigError("noise_sigmas must be positive")
        if self.gate not in ("kendall", "pearson"):
            raise ConfigError(f"gate must be kendall or pearson, got {self.gate!r}")
        if self.gate_source not in ("sample", "ema", "population"):
            raise ConfigError(f"gate_source must be sample, ema or population, got {self.gate_source!r}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError("ema_decay must lie in [0, 1)")
        if self.threshold != "auto":
            t = _floats(self.threshold)
            if len(t) != 1 or not -1.0 <= t[0] <= 1.0:
                raise ConfigError(f"threshold must be auto or a value in [-1, 1], got {self.threshold!r}")
        for name in ("optimum", "mean0", "cov0"):
            vals = getattr(self, name)
            if len(vals) not in (1, self.dimension):
                raise ConfigError(f"{name} needs 1 or {self.dimension} values, got {len(vals)}")
        if any(c <= 0 for c in self.cov0):
            raise ConfigError("cov0 entries must be positive")
        self._check_weights()
        self._check_eigenvalues()
        self._check_surrogate()
        self._check_alpha()

    def _check_weights(self):
        head, _, arg = self.weights.partition(":")
        if head in _WEIGHT_PRESETS:
            if arg and (head != "truncation" or not 1 <= _ints(arg)[0] <= self.lam):
                raise ConfigError(f"bad weight preset {self.weights!r}")
            return
        if len(_floats(self.weights)) != self.lam:
            raise ConfigError(f"explicit weights need lambda = {self.lam} values")

    def _check_eigenvalues(self):
        head, _, arg = self.eigenvalues.partition(":")
        if head in ("ones", "linear") and not arg:
            return
        if head == "loguniform":
            cond = _floats(arg)
            if len(cond) != 1 or cond[0] < 1:
                raise ConfigError("loguniform needs a condition number >= 1")
            return
        vals = _floats(self.eigenvalues)
        if len(vals) != self.dimension or min(vals) <= 0:
            raise ConfigError(f"eigenvalues need {self.dimension} positive values")

    def _check_surrogate(self):
        head, _, arg = self.surrogate.partition(":")
        if head not in _SURROGATES:
            raise ConfigError(f"unknown surrogate {self.surrogate!r}")
        if head in ("exact", "negated") and arg:
            raise ConfigError(f"surrogate {head} takes no argument")
        if head == "noise" and arg != "auto":
            if not arg or _floats(arg)[0] <= 0:
                raise ConfigError("noise needs a positive sigma or auto")
        if head == "hessian" and (not arg or _floats(arg)[0] <= 0):
            raise ConfigError("hessian needs a positive perturbation size")
        if head == "blockswap" and arg and not 1 <= _ints(arg)[0] < self.lam:
            raise ConfigError("blockswap mu must satisfy 1 <= mu < lambda")

    def _check_alpha(self):
        if self.alpha in ("optimal", "max"):
            return
        value = self.alpha.removeprefix("fixed:")
        a = _floats(value)
        if len(a) != 1 or a[0] < 0:
            raise ConfigError(f"alpha must be optimal, max, or a non-negative value, got {self.alpha!r}")

    @property
    def threshold_value(self) -> float | None:
        return None if self.threshold == "auto" else _floats(self.threshold)[0]

    @property
    def fixed_alpha(self) -> float | None:
        if self.alpha in ("optimal", "max"):
            return None
        return _floats(self.alpha.removeprefix("fixed:"))[0]

    def with_overrides(self, **kwargs) -> ExperimentConfig:
        return replace(self, **kwargs)


def _key_of(attr: str) -> str:
    return "lambda" if attr == "lam" else attr


_FIELDS = {_key_of(f.name): f for f in fields(ExperimentConfig)}


def _convert(key: str, text: str):
    typ = _FIELDS[key].type
    if typ == "int":
        vals = _ints(text)
        if len(vals) != 1:
            raise ConfigError(f"{key} takes a single integer")
        return vals[0]
    if typ == "float":
        vals = _floats(text)
        if len(vals) != 1:
            raise ConfigError(f"{key} takes a single number")
        return vals[0]
    if typ == "bool":
        if text.lower() not in _BOOL:
            raise ConfigError(f"{key} must be true or false, got {text!r}")
        return _BOOL[text.lower()]
    if typ == "tuple[int, ...]":
        return _ints(text)
    if typ == "tuple[float, ...]":
        return _floats(text)
    return text


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse the flat ``key = value`` format; line numbers appear in every error."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        where = f"{source}:{lineno}"
        if not sep or not key:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in lines:
            raise ConfigError(f"{where}: {key!r} already set on line {lines[key]}")
        if not value:
            raise ConfigError(f"{where}: {key!r} has no value")
        try:
            values[_FIELDS[key].name] = _convert(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        lines[key] = lineno
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
