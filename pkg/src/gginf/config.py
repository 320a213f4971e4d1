"""Experiment configuration files.

Configurations are INI files. Keys in ``[DEFAULT]`` apply to every
experiment; each ``[experiment:NAME]`` section defines one experiment and
may override any key. Keys:

==========================  ===================================================
``kind``                    lln | clt | residual_clt | martingale | stationary
``service.family``          exponential | hyperexponential | gamma
``service.params``          comma-separated floats (see ``from_name``)
``service.normalize``       rescale to mean one (default true)
``arrivals.kind``           poisson | deterministic | renewal
``arrivals.lambda``         fluid arrival rate (required)
``arrivals.scv``            renewal interarrival scv (renewal only)
``arrivals.equilibrium``    renewal equilibrium start (default false)
``init.mode``               quantile | poisson | empty (default quantile)
``n``                       comma-separated, strictly increasing
``replications``            R
``horizon``                 T
``checkpoints``             a count (evenly spaced on [0, T]) or a list
``times``                   evaluation times for CLT-type statistics (default T)
``pairs``                   two-time pairs ``s:t`` for covariance checks
``phi``                     comma-separated test-function strings
``psi``                     optional partner function for cross statistics
``seed``                    master seed
``rel_tol``                 relative tolerance of verdicts (default 0.10)
==========================  ===================================================
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .arrivals import KINDS as ARRIVAL_KINDS
from .arrivals import ArrivalProcess
from .distributions import DistributionError, ServiceDistribution, from_name
from .testfunctions import TestFunction, TestFunctionError, parse

__all__ = [
    "EXPERIMENT_KINDS",
    "VARIANCE_KINDS",
    "ConfigError",
    "ExperimentConfig",
    "Campaign",
    "parse_config",
    "parse_config_string",
    "required_replications",
]

EXPERIMENT_KINDS = ("lln", "clt", "residual_clt", "martingale", "stationary")
VARIANCE_KINDS = ("clt", "residual_clt", "martingale", "stationary")
INIT_MODES = ("quantile", "poisson", "empty")
MIN_REPLICATIONS = 100


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation as (field, message)."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


def required_replications(rel_tol: float) -> int:
    """Smallest R with ``3 SE(sample variance) <= rel_tol * variance``.

    For Gaussian samples ``SE(var) ~ var * sqrt(2 / R)``.
    """
    return int(math.ceil(2.0 * (3.0 / rel_tol) ** 2))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    family: str
    params: tuple = ()
    normalize: bool = True
    arrival_kind: str = "poisson"
    lam: float = 1.0
    scv: float | None = None
    equilibrium: bool = False
    init_mode: str = "quantile"
    n: tuple = (400,)
    replications: int = 2000
    horizon: float = 1.0
    checkpoints: tuple = ()
    times: tuple = ()
    pairs: tuple = ()
    phi: tuple = ("one",)
    psi: str | None = None
    seed: int = 20240101
    rel_tol: float = 0.10

    def dist(self) -> ServiceDistribution:
        return from_name(self.family, self.params, self.normalize)

    def arrivals(self) -> ArrivalProcess:
        return ArrivalProcess(self.arrival_kind, self.lam,
                              1.0 if self.scv is None else self.scv, self.equilibrium)

    def test_functions(self) -> list[TestFunction]:
        return [parse(s) for s in self.phi]

    def partner(self) -> TestFunction | None:
        return None if self.psi is None else parse(self.psi)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        d = asdict(self)
        d["seed"] = int(seed)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Campaign:
    path: str | None
    experiments: tuple = field(default_factory=tuple)

    def select(self, name: str | None) -> list[ExperimentConfig]:
        if name is None:
            return list(self.experiments)
        out = [e for e in self.experiments if e.name == name]
        if not out:
            raise ConfigError([("experiment", f"no experiment named {name!r}")])
        return out

    def with_seed(self, seed: int | None) -> "Campaign":
        if seed is None:
            return self
        return Campaign(self.path, tuple(e.with_seed(seed) for e in self.experiments))

    def resolved(self) -> str:
        """Canonical JSON of the resolved configuration."""
        return json.dumps([e.to_dict() for e in self.experiments], sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.resolved().encode()).hexdigest()


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _section(name: str, sec, errors) -> ExperimentConfig | None:
    before = len(errors)

    def get(key, conv, default=None, required=False):
        if key not in sec or sec.get(key).strip() == "":
            if required:
                errors.append((f"{name}.{key}", "missing required field"))
            return default
        try:
            return conv(sec.get(key))
        except (ValueError, TypeError) as exc:
            errors.append((f"{name}.{key}", str(exc)))
            return default

    kind = get("kind", str.strip, required=True)
    if kind is not None and kind not in EXPERIMENT_KINDS:
        errors.append((f"{name}.kind", f"unknown experiment kind {kind!r}"))
    family = get("service.family", str.strip, required=True)
    params = get("service.params", _floats, ())
    normalize = get("service.normalize", _bool, True)
    akind = get("arrivals.kind", str.strip, "poisson")
    if akind not in ARRIVAL_KINDS:
        errors.append((f"{name}.arrivals.kind", f"unknown arrival kind {akind!r}"))
    lam = get("arrivals.lambda", float, required=True)
    if lam is not None and not lam >= 0:
        errors.append((f"{name}.arrivals.lambda", "must be >= 0"))
    scv = get("arrivals.scv", float)
    if scv is not None and akind != "renewal":
        errors.append((f"{name}.arrivals.scv", f"scv only applies to renewal arrivals, not {akind}"))
    if scv is not None and not scv > 0:
        errors.append((f"{name}.arrivals.scv", "must be > 0"))
    equilibrium = get("arrivals.equilibrium", _bool, False)
    init_mode = get("init.mode", str.strip, "quantile")
    if init_mode not in INIT_MODES:
        errors.append((f"{name}.init.mode", f"unknown init mode {init_mode!r}"))
    n = get("n", lambda s: tuple(int(x) for x in _floats(s)), required=True)
    R = get("replications", int, required=True)
    horizon = get("horizon", float, required=True)
    cps = get("checkpoints", _floats, (17.0,))
    times = get("times", _floats, ())
    pairs = get("pairs", lambda s: tuple(tuple(float(v) for v in p.split(":"))
                                         for p in s.replace(",", " ").split()), ())
    phi = get("phi", lambda s: tuple(x.strip() for x in s.split(",") if x.strip()), ("one",))
    psi = get("psi", str.strip)
    seed = get("seed", int, 20240101)
    rel_tol = get("rel_tol", float, 0.10)

    if family is not None:
        try:
            from_name(family, params or (), normalize)
        except DistributionError as exc:
            fieldname = "service.family" if "unknown" in str(exc) else "service.params"
            errors.append((f"{name}.{fieldname}", str(exc)))
    if n is not None:
        if not n or any(k < 1 for k in n):
            errors.append((f"{name}.n", "entries must be >= 1"))
        elif any(b <= a for a, b in zip(n, n[1:])):
            errors.append((f"{name}.n", "must be strictly increasing"))
        elif kind == "lln" and len(n) < 3:
            errors.append((f"{name}.n", "lln needs at least three values"))
    if horizon is not None and not horizon > 0:
        errors.append((f"{name}.horizon", "must be > 0"))
    if kind == "stationary" and horizon is not None and horizon < 40:
        errors.append((f"{name}.horizon", "stationary experiments need horizon >= 40"))
    if rel_tol is not None and not 0 < rel_tol < 1:
        errors.append((f"{name}.rel_tol", "must lie in (0, 1)"))
    if R is not None:
        if R < MIN_REPLICATIONS:
            errors.append((f"{name}.replications", f"must be >= {MIN_REPLICATIONS}"))
        elif kind in VARIANCE_KINDS and rel_tol and R < required_replications(rel_tol):
            errors.append((f"{name}.replications",
                           f"R={R} too small for rel_tol={rel_tol}; need "
                           f">= {required_replications(rel_tol)}"))
    if kind in ("clt", "martingale", "stationary") and init_mode == "empty":
        errors.append((f"{name}.init.mode", f"{kind} requires a stationary-fluid start"))
    if kind == "residual_clt" and init_mode != "empty":
        errors.append((f"{name}.init.mode", "residual_clt runs from an empty system"))
    for text in (phi or ()) + ((psi,) if psi else ()):
        try:
            parse(text)
        except TestFunctionError as exc:
            errors.append((f"{name}.phi", str(exc)))
    if horizon is not None and horizon > 0:
        if len(cps) == 1 and float(cps[0]).is_integer() and cps[0] >= 2:
            cps = tuple(float(x) for x in np.linspace(0.0, horizon, int(cps[0])))
        if any(c < 0 or c > horizon for c in cps + times):
            errors.append((f"{name}.checkpoints", "times must lie in [0, horizon]"))
        if not times:
            times = (float(horizon),)
        for p in pairs:
            if len(p) != 2 or any(c < 0 or c > horizon for c in p):
                errors.append((f"{name}.pairs", "pairs are s:t with times in [0, horizon]"))
    if len(errors) > before:
        return None
    return ExperimentConfig(
        name=name, kind=kind, family=family, params=tuple(params or ()), normalize=normalize,
        arrival_kind=akind, lam=lam, scv=scv, equilibrium=equilibrium, init_mode=init_mode,
        n=tuple(n), replications=R, horizon=horizon, checkpoints=tuple(cps),
        times=tuple(times), pairs=tuple(pairs), phi=tuple(phi), psi=psi, seed=seed,
        rel_tol=rel_tol,
    )


def parse_config_string(text: str, path: str | None = None) -> Campaign:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("file", str(exc))]) from exc
    errors: list = []
    experiments = []
    names = [s for s in cp.sections()]
    bad = [s for s in names if not s.startswith("experiment:")]
    for s in bad:
        errors.append((s, "unknown section; use [experiment:NAME]"))
    exp_names = [s for s in names if s.startswith("experiment:")]
    if not exp_names:
        errors.append(("config", "no [experiment:NAME] sections"))
    for s in exp_names:
        name = s.split(":", 1)[1].strip()
        if not name:
            errors.append((s, "experiment name is empty"))
            continue
        cfg = _section(name, cp[s], errors)
        if cfg is not None:
            experiments.append(cfg)
    if errors:
        raise ConfigError(errors)
    return Campaign(path, tuple(experiments))


def parse_config(path) -> Campaign:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([("config", f"cannot read {path}: {exc}")]) from exc
    return parse_config_string(text, str(path))
