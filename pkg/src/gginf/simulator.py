"""Exact sample paths of the n-th infinite-server system.

With infinitely many servers customers never interact, so a path is just
the list of customers: initial ones (age ``a`` at time 0, remaining service
``eta0``) and arrivals (time ``tau``, service ``eta``). Every functional is
evaluated by a direct scan.

Two independent numerical routes are used so that the semimartingale
decompositions can be checked against first-principles evaluations:

* martingale terms integrate ``phi h`` in *age* space through cached
  cumulative primitives;
* the drift integrals of the decompositions integrate in *calendar time*
  with Gauss-Legendre panels between checkpoints, per customer.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .arrivals import ArrivalProcess
from .distributions import ServiceDistribution
from .quadrature import Primitive, gauss_legendre
from .testfunctions import TestFunction, hazard_function

__all__ = [
    "SystemPath",
    "InitialCondition",
    "init_stationary_fluid",
    "simulate",
    "age_apply",
    "residual_apply",
    "age_snapshot",
    "residual_snapshot",
    "martingale_D",
    "martingale_G",
    "qv_D",
    "qv_G",
    "qv_G_centered",
    "decomposition_residual_age",
    "decomposition_residual_res",
    "fluid_pairing",
    "write_event_dump",
]

_PANEL = 0.1
_GL_NODES = 10


@dataclass(frozen=True)
class InitialCondition:
    """Initial customers: ages ``a_i >= 0`` (sorted) and remaining services."""

    ages: np.ndarray
    residuals: np.ndarray

    @classmethod
    def empty(cls) -> "InitialCondition":
        return cls(np.empty(0), np.empty(0))

    def __len__(self):
        return len(self.ages)


@dataclass(frozen=True)
class SystemPath:
    """One realised trajectory.

    ``init_ages`` are ``-tilde_tau``; ``init_residuals`` are ``tilde_eta``.
    """

    n: int
    horizon: float
    dist: ServiceDistribution
    init_ages: np.ndarray
    init_residuals: np.ndarray
    arrival_times: np.ndarray
    services: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.arrival_times) <= 0):
            raise ValueError("arrival times must be strictly increasing")
        if np.any(self.services <= 0) or np.any(self.init_residuals <= 0):
            raise ValueError("service requirements must be positive")
        if np.any(self.init_ages < 0) or np.any(np.diff(self.init_ages) < 0):
            raise ValueError("initial ages must be nonnegative and sorted")

    @property
    def initial(self):
        """``(tilde_tau, tilde_eta)`` pairs."""
        return list(zip(-self.init_ages, self.init_residuals))

    @property
    def arrivals(self):
        return list(zip(self.arrival_times, self.services))

    def arrivals_by(self, t: float) -> int:
        return int(np.searchsorted(self.arrival_times, t, side="right"))


_QUANTILES: dict = {}


def _quantile_ages(dist: ServiceDistribution, m: int) -> np.ndarray:
    key = (dist, m)
    if key not in _QUANTILES:
        if len(_QUANTILES) > 64:
            _QUANTILES.clear()
        _QUANTILES[key] = dist.excess_quantile((np.arange(1, m + 1) - 0.5) / m)
    return _QUANTILES[key]


def init_stationary_fluid(n: int, lam: float, dist: ServiceDistribution, mode: str,
                          rng: np.random.Generator) -> InitialCondition:
    """Initial customers matching the stationary fluid ``lam * F_e``.

    ``quantile`` places ``floor(n lam)`` ages at the ``(i - 1/2)/m`` quantiles
    of ``F_e``; ``poisson`` draws a Poisson(``n lam``) count of iid ``F_e``
    ages; ``empty`` returns no customers. Remaining services are drawn from
    the conditional law given the age.
    """
    if mode == "empty":
        return InitialCondition.empty()
    if mode == "quantile":
        m = int(np.floor(n * lam))
        if m < 1:
            warnings.warn("n * lambda < 1: starting from an empty system", RuntimeWarning)
            return InitialCondition.empty()
        ages = _quantile_ages(dist, m)
    elif mode == "poisson":
        m = rng.poisson(n * lam)
        ages = np.sort(dist.sample_excess(rng, m)) if m else np.empty(0)
    else:
        raise ValueError(f"unknown initial mode {mode!r}")
    if len(ages) == 0:
        return InitialCondition.empty()
    res = np.atleast_1d(dist.sample_residual_given_age(ages, rng))
    return InitialCondition(np.asarray(ages, dtype=float), res)


def simulate(arrivals: ArrivalProcess, dist: ServiceDistribution, n: int, horizon: float,
             rng: np.random.Generator, init: InitialCondition | None = None) -> SystemPath:
    """Draw arrival times and services on ``[0, horizon]``."""
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    init = init or InitialCondition.empty()
    times = arrivals.sample_arrivals(n, horizon, rng)
    services = dist.sample_service(rng, len(times)) if len(times) else np.empty(0)
    return SystemPath(n, float(horizon), dist, np.asarray(init.ages, dtype=float),
                      np.asarray(init.residuals, dtype=float), times, np.asarray(services))


# first principles -----------------------------------------------------------

def age_snapshot(path: SystemPath, t: float) -> np.ndarray:
    """Ages of customers in service at time ``t``."""
    alive0 = t < path.init_residuals
    tau, eta = path.arrival_times, path.services
    alive = (tau <= t) & (t < tau + eta)
    return np.concatenate([path.init_ages[alive0] + t, t - tau[alive]])


def residual_snapshot(path: SystemPath, t: float) -> np.ndarray:
    """Residual services at ``t``, departed customers included (negative)."""
    k = path.arrivals_by(t)
    return np.concatenate([path.init_residuals - t,
                           path.arrival_times[:k] + path.services[:k] - t])


def _over_t(fn, t):
    if np.ndim(t) == 0:
        return fn(float(t))
    return np.array([fn(float(s)) for s in np.asarray(t)])


def age_apply(path: SystemPath, t, phi: TestFunction):
    """``<A_t, phi>``."""
    return _over_t(lambda s: float(np.sum(phi(age_snapshot(path, s)))), t)


def residual_apply(path: SystemPath, t, phi: TestFunction):
    """``<R_t, phi>``."""
    return _over_t(lambda s: float(np.sum(phi(residual_snapshot(path, s)))), t)


# martingales ----------------------------------------------------------------

def fluid_pairing(dist: ServiceDistribution, phi: TestFunction) -> float:
    """``<F, phi> = E phi(eta)``, cached on ``phi``."""
    key = ("F", dist)
    if key not in phi._cache:
        phi._cache[key] = dist.expect(phi)
    return phi._cache[key]


def _hazard_primitive(dist: ServiceDistribution, phi: TestFunction,
                      psi: TestFunction | None = None) -> Primitive:
    key = ("prim", dist, None if psi is None else psi.name)
    if key not in phi._cache:
        if psi is None:
            g = lambda y: phi(y) * dist.hazard(y)
        else:
            g = lambda y: phi(y) * psi(y) * dist.hazard(y)
        phi._cache[key] = Primitive(g, 0.0, dist.y_max)
    return phi._cache[key]


def _compensated(path: SystemPath, t: float, prim: Primitive):
    """Per-customer ``(start age, end age, departed)`` arrays at time ``t``."""
    a0 = path.init_ages
    end0 = a0 + np.minimum(path.init_residuals, t)
    dep0 = path.init_residuals <= t
    k = path.arrivals_by(t)
    tau, eta = path.arrival_times[:k], path.services[:k]
    end = np.minimum(eta, t - tau)
    dep = eta <= t - tau
    start = np.concatenate([a0, np.zeros(k)])
    stop = np.concatenate([end0, end])
    departed = np.concatenate([dep0, dep])
    return start, stop, departed, np.concatenate([a0 + path.init_residuals, eta])


def martingale_D(path: SystemPath, t, phi: TestFunction):
    """``<D0_t + D_t, phi>``: departures minus their hazard compensator."""
    prim = _hazard_primitive(path.dist, phi)

    def one(s):
        start, stop, departed, dep_age = _compensated(path, s, prim)
        jumps = float(np.sum(phi(dep_age[departed])))
        return jumps - float(np.sum(prim.between(start, stop)))

    return _over_t(one, t)


def qv_D(path: SystemPath, t, phi: TestFunction, psi: TestFunction):
    """Predictable quadratic covariation ``<<D0 + D>>_t(phi, psi)``."""
    prim = _hazard_primitive(path.dist, phi, psi)

    def one(s):
        start, stop, _, _ = _compensated(path, s, prim)
        return float(np.sum(prim.between(start, stop)))

    return _over_t(one, t)


def martingale_G(path: SystemPath, t, phi: TestFunction):
    """``<G_t, phi> = sum_{tau_i <= t} (phi(eta_i) - <F, phi>)``."""
    mean = fluid_pairing(path.dist, phi)
    vals = phi(path.services) - mean
    csum = np.concatenate([[0.0], np.cumsum(vals)])
    return _over_t(lambda s: float(csum[path.arrivals_by(s)]), t)


def qv_G(path: SystemPath, t, phi: TestFunction, psi: TestFunction):
    """Optional quadratic covariation ``[G]_t(phi, psi)``."""
    vals = phi(path.services) * psi(path.services)
    csum = np.concatenate([[0.0], np.cumsum(vals)])
    return _over_t(lambda s: float(csum[path.arrivals_by(s)]), t)


def qv_G_centered(path: SystemPath, t, phi: TestFunction, psi: TestFunction):
    """``sum_{tau_i <= t} (phi(eta_i) - <F, phi>)(psi(eta_i) - <F, psi>)``.

    The squared jumps of ``<G, phi>``; this is the bracket that compensates
    ``<G_t, phi>^2``. :func:`qv_G` omits the centring.
    """
    a = phi(path.services) - fluid_pairing(path.dist, phi)
    b = psi(path.services) - fluid_pairing(path.dist, psi)
    csum = np.concatenate([[0.0], np.cumsum(a * b)])
    return _over_t(lambda s: float(csum[path.arrivals_by(s)]), t)


# decompositions -------------------------------------------------------------

def _time_integrals(births, deaths, offsets, checkpoints, g):
    """``int_0^c sum_i 1{b_i <= s < d_i} g(s - b_i + o_i) ds`` for each checkpoint.

    Each customer's lifetime is cut at the checkpoints and into panels of
    width at most ``_PANEL``; every panel gets a ``_GL_NODES``-point rule.
    """
    cps = np.asarray(checkpoints, dtype=float)
    edges = np.concatenate([[0.0], cps])
    if len(births) == 0:
        return np.zeros(len(cps))
    # segments (customer i, checkpoint interval j)
    lo = np.maximum(births[:, None], edges[None, :-1])
    hi = np.minimum(deaths[:, None], edges[None, 1:])
    ii, jj = np.nonzero(hi > lo)
    lo, hi = lo[ii, jj], hi[ii, jj]
    npan = np.maximum(1, np.ceil((hi - lo) / _PANEL).astype(np.int64))
    seg = np.repeat(np.arange(len(lo)), npan)
    first = np.cumsum(npan) - npan
    k = np.arange(len(seg)) - np.repeat(first, npan)
    width = (hi - lo)[seg] / npan[seg]
    plo = lo[seg] + k * width
    x, w = gauss_legendre(_GL_NODES)
    s = plo[:, None] + 0.5 * width[:, None] * (x[None, :] + 1.0)
    ages = s - births[ii][seg][:, None] + offsets[ii][seg][:, None]
    vals = (g(ages) @ w) * 0.5 * width
    per_interval = np.bincount(jj[seg], weights=vals, minlength=len(cps))
    return np.cumsum(per_interval)


def decomposition_residual_age(path: SystemPath, t, phi: TestFunction):
    """Right-hand side of the age semimartingale decomposition.

    ``<A_0, phi> + E_t phi(0) - <D0_t + D_t, phi> - int <A_s, h phi> ds
    + int <A_s, phi'> ds``, with the time integrals done panel-wise.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(ts)
    cps = ts[order]
    births = np.concatenate([np.zeros(len(path.init_ages)), path.arrival_times])
    deaths = np.concatenate([path.init_residuals, path.arrival_times + path.services])
    offsets = np.concatenate([path.init_ages, np.zeros(len(path.arrival_times))])
    h = hazard_function(path.dist)

    def g(y):
        j = phi.jet(y, 1)
        return j[1] - h(y) * j[0]

    drift = np.empty_like(cps)
    drift[order] = _time_integrals(births, deaths, offsets, cps, g)
    start = float(np.sum(phi(path.init_ages)))
    phi0 = float(phi(np.zeros(1))[0])
    counts = np.array([path.arrivals_by(s) for s in ts])
    out = start + counts * phi0 - np.atleast_1d(martingale_D(path, ts, phi)) + drift
    return float(out[0]) if np.ndim(t) == 0 else out


def decomposition_residual_res(path: SystemPath, t, phi: TestFunction):
    """Right-hand side of the residual decomposition.

    ``<R_0, phi> + <G_t, phi> + E_t <F, phi> - int <R_s, phi'> ds``.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(ts)
    cps = ts[order]
    m0 = len(path.init_residuals)
    births = np.concatenate([np.zeros(m0), path.arrival_times])
    deaths = np.full(len(births), np.inf)
    # residual at time s is offset - (s - birth); encode as age variable y -> -y
    offsets = -np.concatenate([path.init_residuals, path.services])
    drift = np.empty_like(cps)
    drift[order] = _time_integrals(births, deaths, offsets, cps,
                                   lambda y: phi.jet(-y, 1)[1])
    start = float(np.sum(phi(path.init_residuals)))
    mean = fluid_pairing(path.dist, phi)
    counts = np.array([path.arrivals_by(s) for s in ts])
    out = start + np.atleast_1d(martingale_G(path, ts, phi)) + counts * mean - drift
    return float(out[0]) if np.ndim(t) == 0 else out


def write_event_dump(path: SystemPath, fh) -> None:
    """CSV of customers: ``customer_id, class, arrival_time, service_time``.

    Initial customers report ``-age`` as arrival time and their remaining
    service as service time.
    """
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["customer_id", "class", "arrival_time", "service_time"])
    cid = 0
    for a, r in zip(path.init_ages, path.init_residuals):
        w.writerow([cid, "initial", "%.17g" % (-a), "%.17g" % r])
        cid += 1
    for tau, eta in zip(path.arrival_times, path.services):
        w.writerow([cid, "arrival", "%.17g" % tau, "%.17g" % eta])
        cid += 1
