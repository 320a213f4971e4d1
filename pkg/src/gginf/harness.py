"""Monte Carlo verification campaigns.

Each experiment simulates ``R`` independent paths per scaling index ``n``,
reduces each path to a short vector of statistics, and compares the
replication moments with the fluid and Gaussian predictions.

Reproducibility: replication ``r`` of experiment ``name`` at index ``n``
uses ``default_rng([seed, crc32(name), n, r])``. Replications are computed
in chunks, possibly in worker processes, and reassembled in replication
order, so results do not depend on the number of workers.

Verdicts: a moment row passes iff ``|empirical - predicted| <=
max(rel_tol |predicted|, 3 SE)``. Skewness and excess kurtosis pass iff
their absolute value is below ``0.15 sqrt(2000/R)`` and
``0.3 sqrt(2000/R)``. LLN error ratios for ``n -> n'`` pass iff they lie in
``[0.75, 1.35] sqrt(n'/n)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import VARIANCE_KINDS, ExperimentConfig, required_replications
from .fluid import FluidInput, ZeroMeasure, fluid_age, fluid_residual, stationary_fluid_age
from .laws import (cov_D, cov_G, ou_cov_age_general, ou_cov_residual, ou_stationary_cov_age,
                   ou_transient_cov_age, poisson_init_extra)
from .simulator import (age_apply, init_stationary_fluid, martingale_D, martingale_G, qv_D,
                        qv_G, qv_G_centered, residual_apply, simulate)
from .testfunctions import TestFunction

__all__ = [
    "Row",
    "ExperimentReport",
    "InsufficientReplications",
    "replication_rng",
    "fluid_input_for",
    "make_path",
    "run_experiment",
    "run_fluid_lln",
    "run_clt",
    "run_residual_clt",
    "run_martingale_diagnostics",
    "run_stationary",
    "moment_summary",
    "verdict",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("experiment", "n", "t", "phi", "psi", "statistic", "empirical", "predicted",
               "se", "verdict")
SKEW_BAND = 0.15
KURT_BAND = 0.3
RATIO_BAND = (0.75, 1.35)
_CHUNK = 50
ABS_FLOOR = 1e-10


class InsufficientReplications(ValueError):
    def __init__(self, R: int, required: int, rel_tol: float):
        self.required = required
        super().__init__(f"R={R} replications cannot resolve rel_tol={rel_tol}; "
                         f"need at least {required}")


@dataclass(frozen=True)
class Row:
    experiment: str
    n: int
    t: float
    phi: str
    psi: str
    statistic: str
    empirical: float
    predicted: float
    se: float
    verdict: str

    def csv_fields(self):
        def f(x):
            return "%.17g" % x
        return [self.experiment, str(self.n), f(self.t), self.phi, self.psi, self.statistic,
                f(self.empirical), f(self.predicted), f(self.se), self.verdict]


@dataclass
class ExperimentReport:
    name: str
    kind: str
    config: dict
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.verdict != "fail" for r in self.rows)

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r.verdict == "fail"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"name": self.name, "kind": self.kind, "config": self.config,
               "passed": self.passed, "rows": [asdict(r) for r in self.rows]}
        return json.dumps(doc, indent=1, sort_keys=True)

    def find(self, statistic: str, **match) -> list:
        return [r for r in self.rows if r.statistic == statistic
                and all(getattr(r, k) == v for k, v in match.items())]


# statistics -----------------------------------------------------------------

def verdict(empirical: float, predicted: float, se: float, rel_tol: float) -> str:
    """``pass`` iff ``|empirical - predicted| <= max(rel_tol |predicted|, 3 SE)``.

    A floor of ``ABS_FLOOR`` absorbs quadrature rounding in statistics that
    vanish identically (e.g. the G noise of a constant test function).
    """
    if not np.isfinite(empirical):
        return "fail"
    band = max(rel_tol * abs(predicted), 3.0 * se, ABS_FLOOR)
    return "pass" if abs(empirical - predicted) <= band else "fail"


def moment_summary(x: np.ndarray) -> dict:
    """Mean, variance, skewness, excess kurtosis and their standard errors."""
    x = np.asarray(x, dtype=float)
    R = len(x)
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d**2))
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    var = float(np.var(x, ddof=1))
    skew = m3 / m2**1.5 if m2 > 0 else 0.0
    kurt = m4 / m2**2 - 3.0 if m2 > 0 else 0.0
    return {
        "mean": mean,
        "se_mean": math.sqrt(var / R),
        "var": var,
        "se_var": math.sqrt(max(m4 - m2**2, 0.0) / R),
        "skew": skew,
        "se_skew": math.sqrt(6.0 / R),
        "kurt": kurt,
        "se_kurt": math.sqrt(24.0 / R),
    }


def covariance_summary(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    R = len(x)
    prod = (x - x.mean()) * (y - y.mean())
    return float(np.sum(prod) / (R - 1)), float(np.std(prod, ddof=1) / math.sqrt(R))


# replication machinery ------------------------------------------------------

def replication_rng(cfg: ExperimentConfig, n: int, rep: int) -> np.random.Generator:
    stream = zlib.crc32(cfg.name.encode("utf-8"))
    return np.random.default_rng([cfg.seed, stream, n, rep])


def make_path(cfg: ExperimentConfig, n: int, rep: int, dist, arrivals, horizon=None):
    rng = replication_rng(cfg, n, rep)
    init = init_stationary_fluid(n, cfg.lam, dist, cfg.init_mode, rng)
    return simulate(arrivals, dist, n, horizon or cfg.horizon, rng, init)


_WORKER_STATE: dict = {}


def _state(cfg: ExperimentConfig):
    if cfg not in _WORKER_STATE:
        _WORKER_STATE.clear()
        _WORKER_STATE[cfg] = (cfg.dist(), cfg.arrivals(), cfg.test_functions(), cfg.partner())
    return _WORKER_STATE[cfg]


def _rep_lln(cfg, n, rep, aux):
    dist, arr, phis, _ = _state(cfg)
    path = make_path(cfg, n, rep, dist, arr)
    cps = np.asarray(cfg.checkpoints)
    out = []
    for phi, fl in zip(phis, aux["fluid"]):
        apply = residual_apply if phi.domain == "residuals" else age_apply
        out.append(np.max(np.abs(apply(path, cps, phi) / n - fl)))
    return out


def _rep_clt(cfg, n, rep, aux):
    dist, arr, phis, psi = _state(cfg)
    path = make_path(cfg, n, rep, dist, arr)
    times = aux["times"]
    out = []
    root = math.sqrt(n)
    for phi, fl in zip(phis, aux["fluid"]):
        out.extend(root * (age_apply(path, times, phi) / n - fl))
    if psi is not None:
        out.extend(root * (age_apply(path, times, psi) / n - aux["fluid_psi"]))
    return out


def _rep_residual(cfg, n, rep, aux):
    dist, arr, phis, psi = _state(cfg)
    path = make_path(cfg, n, rep, dist, arr)
    times = aux["times"]
    root = math.sqrt(n)
    out = []
    for phi, fl in zip(phis, aux["fluid"]):
        out.extend(root * (residual_apply(path, times, phi) / n - fl))
        out.extend(martingale_G(path, times, phi) / root)
    return out


def _rep_martingale(cfg, n, rep, aux):
    dist, arr, phis, psi = _state(cfg)
    path = make_path(cfg, n, rep, dist, arr)
    times = aux["times"]
    root = math.sqrt(n)
    out = []
    for phi in phis:
        out.extend(martingale_D(path, times, phi) / root)
        out.extend(qv_D(path, times, phi, phi) / n)
        out.extend(martingale_G(path, times, phi) / root)
        out.extend(qv_G_centered(path, times, phi, phi) / n)
        out.extend(qv_G(path, times, phi, phi) / n)
        if psi is not None:
            out.extend(martingale_D(path, times, psi) / root)
            out.extend(qv_D(path, times, phi, psi) / n)
            plus, minus = aux["polar"][phi.name]
            qp = qv_D(path, times, plus, plus)
            qm = qv_D(path, times, minus, minus)
            q = qv_D(path, times, phi, psi)
            out.extend(np.abs(qp - qm - 4.0 * q) / (1.0 + np.abs(qp) + np.abs(qm)))
    return out


_REP = {"lln": _rep_lln, "clt": _rep_clt, "stationary": _rep_clt,
        "residual_clt": _rep_residual, "martingale": _rep_martingale}


def _chunk(args):
    cfg, n, lo, hi, aux = args
    fn = _REP[cfg.kind]
    return np.array([fn(cfg, n, r, aux) for r in range(lo, hi)], dtype=float)


def _replicate(cfg: ExperimentConfig, n: int, aux: dict, workers: int | None) -> np.ndarray:
    R = cfg.replications
    jobs = [(cfg, n, lo, min(lo + _CHUNK, R), aux) for lo in range(0, R, _CHUNK)]
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) == 1:
        parts = [_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            parts = list(pool.map(_chunk, jobs))
    return np.concatenate(parts, axis=0)


def _check_R(cfg: ExperimentConfig):
    need = required_replications(cfg.rel_tol)
    if cfg.kind in VARIANCE_KINDS and cfg.replications < need:
        raise InsufficientReplications(cfg.replications, need, cfg.rel_tol)


def fluid_input_for(cfg: ExperimentConfig, dist) -> FluidInput:
    init = ZeroMeasure() if cfg.init_mode == "empty" else stationary_fluid_age(cfg.lam, dist)
    return FluidInput(init, cfg.lam, dist)


def _moment_rows(cfg, n, t, phi, psi, x, mean_pred, var_pred, prefix=""):
    R = len(x)
    m = moment_summary(x)
    scale = math.sqrt(2000.0 / R)
    rt = cfg.rel_tol
    return [
        Row(cfg.name, n, t, phi, psi, prefix + "mean", m["mean"], mean_pred, m["se_mean"],
            verdict(m["mean"], mean_pred, m["se_mean"], 0.0)),
        Row(cfg.name, n, t, phi, psi, prefix + "var", m["var"], var_pred, m["se_var"],
            verdict(m["var"], var_pred, m["se_var"], rt)),
        Row(cfg.name, n, t, phi, psi, prefix + "skew", m["skew"], 0.0, m["se_skew"],
            "pass" if abs(m["skew"]) < SKEW_BAND * scale else "fail"),
        Row(cfg.name, n, t, phi, psi, prefix + "kurt", m["kurt"], 0.0, m["se_kurt"],
            "pass" if abs(m["kurt"]) < KURT_BAND * scale else "fail"),
    ]


# experiments ----------------------------------------------------------------

def run_fluid_lln(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Mean sup-error of the scaled path against the fluid limit, per ``n``."""
    dist = cfg.dist()
    phis = cfg.test_functions()
    inp = fluid_input_for(cfg, dist)
    cps = np.asarray(cfg.checkpoints)
    fluid = []
    for phi in phis:
        solver = fluid_residual if phi.domain == "residuals" else fluid_age
        fluid.append(np.array([solver(float(t), phi, inp) for t in cps]))
    report = ExperimentReport(cfg.name, cfg.kind, cfg.to_dict())
    errs = {}
    for n in cfg.n:
        data = _replicate(cfg, n, {"fluid": fluid}, workers)
        for j, phi in enumerate(phis):
            e = data[:, j]
            errs[(n, j)] = (float(e.mean()), float(e.std(ddof=1) / math.sqrt(len(e))))
            report.rows.append(Row(cfg.name, n, float(cps[-1]), phi.name, "", "err",
                                   errs[(n, j)][0], float("nan"), errs[(n, j)][1], "info"))
            report.rows.append(Row(cfg.name, n, float(cps[-1]), phi.name, "", "err_sqrt_n",
                                   errs[(n, j)][0] * math.sqrt(n), float("nan"),
                                   errs[(n, j)][1] * math.sqrt(n), "info"))
    for j, phi in enumerate(phis):
        for n1, n2 in zip(cfg.n, cfg.n[1:]):
            (e1, s1), (e2, s2) = errs[(n1, j)], errs[(n2, j)]
            pred = math.sqrt(n2 / n1)
            if e1 == 0.0 and e2 == 0.0:
                ratio, se, ok = float("nan"), 0.0, True
            else:
                ratio = e1 / e2 if e2 > 0 else float("inf")
                se = ratio * math.hypot(s1 / e1, s2 / e2) if e1 > 0 and e2 > 0 else float("inf")
                ok = RATIO_BAND[0] * pred <= ratio <= RATIO_BAND[1] * pred
            report.rows.append(Row(cfg.name, n2, float(cps[-1]), phi.name, "", f"ratio_{n1}",
                                   ratio, pred, se, "pass" if ok else "fail"))
    return report


def run_clt(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Centred, scaled age pairings against the transient Gaussian law."""
    _check_R(cfg)
    dist = cfg.dist()
    phis = cfg.test_functions()
    psi = cfg.partner()
    sigma2 = cfg.arrivals().sigma2
    inp = fluid_input_for(cfg, dist)
    stationary = cfg.kind == "stationary"
    times = np.array([cfg.horizon]) if stationary else np.asarray(cfg.times, dtype=float)
    pair_times = [] if stationary else [tuple(p) for p in cfg.pairs]
    all_times = np.unique(np.concatenate([times, np.ravel(pair_times) if pair_times else []]))
    fluid = [np.array([fluid_age(float(t), phi, inp) for t in all_times]) for phi in phis]
    aux = {"times": all_times, "fluid": fluid}
    if psi is not None:
        aux["fluid_psi"] = np.array([fluid_age(float(t), psi, inp) for t in all_times])
    poisson = cfg.init_mode == "poisson"

    def predicted(t, a, b, s=None):
        if stationary:
            return ou_stationary_cov_age(a, b, cfg.lam, sigma2, dist)
        if s is None or s == t:
            val = ou_transient_cov_age(t, a, b, cfg.lam, sigma2, dist)
        else:
            val = ou_cov_age_general(s, t, a, b, cfg.lam, sigma2, dist)
        if poisson:
            val += poisson_init_extra(t, a, b, cfg.lam, dist, s=s)
        return val

    report = ExperimentReport(cfg.name, cfg.kind, cfg.to_dict())
    k = len(all_times)
    idx = {float(t): i for i, t in enumerate(all_times)}
    for n in cfg.n:
        data = _replicate(cfg, n, aux, workers)
        for j, phi in enumerate(phis):
            block = data[:, j * k:(j + 1) * k]
            for t in times:
                x = block[:, idx[float(t)]]
                report.rows.extend(_moment_rows(cfg, n, float(t), phi.name, "", x, 0.0,
                                                predicted(float(t), phi, phi)))
                if psi is not None:
                    y = data[:, len(phis) * k + idx[float(t)]]
                    c, se = covariance_summary(x, y)
                    pred = predicted(float(t), phi, psi)
                    report.rows.append(Row(cfg.name, n, float(t), phi.name, psi.name, "cov",
                                           c, pred, se, verdict(c, pred, se, cfg.rel_tol)))
            for s, t in pair_times:
                c, se = covariance_summary(block[:, idx[float(s)]], block[:, idx[float(t)]])
                pred = predicted(float(t), phi, phi, s=float(s))
                report.rows.append(Row(cfg.name, n, float(t), phi.name, phi.name,
                                       f"cov_s={s!r}", c, pred, se,
                                       verdict(c, pred, se, cfg.rel_tol)))
    return report


def run_stationary(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """CLT at ``t = horizon`` against the stationary Gaussian law."""
    return run_clt(cfg, workers)


def run_residual_clt(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Centred, scaled residual pairings from an empty start, plus the G noise alone."""
    _check_R(cfg)
    dist = cfg.dist()
    phis = cfg.test_functions()
    sigma2 = cfg.arrivals().sigma2
    times = np.asarray(cfg.times, dtype=float)
    inp = FluidInput(ZeroMeasure(), cfg.lam, dist)
    fluid = [np.array([fluid_residual(float(t), phi, inp) for t in times]) for phi in phis]
    aux = {"times": times, "fluid": fluid}
    report = ExperimentReport(cfg.name, cfg.kind, cfg.to_dict())
    k = len(times)
    for n in cfg.n:
        data = _replicate(cfg, n, aux, workers)
        for j, phi in enumerate(phis):
            base = 2 * j * k
            for i, t in enumerate(times):
                t = float(t)
                x = data[:, base + i]
                g = data[:, base + k + i]
                pred = ou_cov_residual(t, t, phi, phi, cfg.lam, sigma2, dist)
                report.rows.extend(_moment_rows(cfg, n, t, phi.name, "", x, 0.0, pred))
                gm = moment_summary(g)
                gpred = cov_G(t, phi, t, phi, cfg.lam, dist)
                report.rows.append(Row(cfg.name, n, t, phi.name, "", "G_mean", gm["mean"], 0.0,
                                       gm["se_mean"], verdict(gm["mean"], 0.0, gm["se_mean"], 0)))
                report.rows.append(Row(cfg.name, n, t, phi.name, "", "G_var", gm["var"], gpred,
                                       gm["se_var"],
                                       verdict(gm["var"], gpred, gm["se_var"], cfg.rel_tol)))
    return report


def run_martingale_diagnostics(cfg: ExperimentConfig,
                               workers: int | None = None) -> ExperimentReport:
    """Martingale means and quadratic variations of the D and G noises."""
    _check_R(cfg)
    dist = cfg.dist()
    phis = cfg.test_functions()
    psi = cfg.partner()
    times = np.asarray(cfg.times, dtype=float)
    fl = fluid_input_for(cfg, dist)
    polar = {}
    if psi is not None:
        for phi in phis:
            polar[phi.name] = (phi + psi, phi - psi)
    aux = {"times": times, "polar": polar}
    report = ExperimentReport(cfg.name, cfg.kind, cfg.to_dict())
    k = len(times)
    per_phi = 5 + (3 if psi is not None else 0)
    rt = cfg.rel_tol
    for n in cfg.n:
        data = _replicate(cfg, n, aux, workers)
        for j, phi in enumerate(phis):
            blk = [data[:, (j * per_phi + q) * k:(j * per_phi + q + 1) * k] for q in range(per_phi)]
            for i, t in enumerate(times):
                t = float(t)
                rows = report.rows
                D, qD, G, qGc, qG = (b[:, i] for b in blk[:5])
                dm = moment_summary(D)
                gm = moment_summary(G)
                pD = cov_D(t, phi, t, phi, fl)
                pG = cov_G(t, phi, t, phi, cfg.lam, dist)
                rows.append(Row(cfg.name, n, t, phi.name, "", "D_mean", dm["mean"], 0.0,
                                dm["se_mean"], verdict(dm["mean"], 0.0, dm["se_mean"], 0)))
                rows.append(Row(cfg.name, n, t, phi.name, "", "D_var", dm["var"], pD,
                                dm["se_var"], verdict(dm["var"], pD, dm["se_var"], rt)))
                qmean = float(qD.mean())
                rows.append(Row(cfg.name, n, t, phi.name, "", "D_var_vs_qv", dm["var"], qmean,
                                dm["se_var"], verdict(dm["var"], qmean, dm["se_var"], rt)))
                rows.append(Row(cfg.name, n, t, phi.name, "", "G_mean", gm["mean"], 0.0,
                                gm["se_mean"], verdict(gm["mean"], 0.0, gm["se_mean"], 0)))
                rows.append(Row(cfg.name, n, t, phi.name, "", "G_var", gm["var"], pG,
                                gm["se_var"], verdict(gm["var"], pG, gm["se_var"], rt)))
                qgm = float(qGc.mean())
                rows.append(Row(cfg.name, n, t, phi.name, "", "G_var_vs_qv", gm["var"], qgm,
                                gm["se_var"], verdict(gm["var"], qgm, gm["se_var"], rt)))
                rows.append(Row(cfg.name, n, t, phi.name, "", "G_qv_uncentered",
                                float(qG.mean()),
                                cfg.lam * t * dist.expect(lambda y: phi(y) ** 2),
                                float(qG.std(ddof=1) / math.sqrt(len(qG))), "info"))
                if psi is not None:
                    Dpsi, qDpsi, polar_def = (b[:, i] for b in blk[5:8])
                    c, se = covariance_summary(D, Dpsi)
                    pc = cov_D(t, phi, t, psi, fl)
                    rows.append(Row(cfg.name, n, t, phi.name, psi.name, "D_cov", c, pc, se,
                                    verdict(c, pc, se, rt)))
                    qc = float(qDpsi.mean())
                    rows.append(Row(cfg.name, n, t, phi.name, psi.name, "D_cov_vs_qv", c, qc,
                                    se, verdict(c, qc, se, rt)))
                    worst = float(polar_def.max())
                    rows.append(Row(cfg.name, n, t, phi.name, psi.name, "polarization", worst,
                                    0.0, 0.0, "pass" if worst <= 1e-12 else "fail"))
    return report


_RUNNERS = {"lln": run_fluid_lln, "clt": run_clt, "stationary": run_stationary,
            "residual_clt": run_residual_clt, "martingale": run_martingale_diagnostics}


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    return _RUNNERS[cfg.kind](cfg, workers)
