"""Gaussian limit laws for the centred, scaled age and residual processes.

Notation: ``lam`` is the fluid arrival rate, ``sigma2`` the variance
coefficient of the arrival noise and ``r_t(y) = Fbar(y + t) / Fbar(y)``.
Unless stated otherwise the fluid is stationary, ``A = lam F_e``.

Driving noises
    ``cov_D``         int_0^{s^t} <A_u h, phi psi> du
    ``cov_G``         lam (s^t) Cov(phi(eta), psi(eta))
    age driving       sigma2 (s^t) phi(0) psi(0) + cov_D
    residual driving  sigma2 (s^t) <F,phi><F,psi> + cov_G

Age OU process
    transient (deterministic initial fluctuation zero)
        lam int Fbar(y+t) phi psi(y+t) (1 - r_t(y)) dy
        + int_0^t phi psi (lam F + sigma2 Fbar) Fbar
    stationary
        int phi psi (lam F + sigma2 Fbar) Fbar
    two-time
        int_0^{s^t} <sigma2 delta_0 + A_u h, (S_{s-u} phi)(S_{t-u} psi)> du
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import ServiceDistribution
from .fluid import (AtomMeasure, FluidInput, ZeroMeasure, fixed_rule, fluid_age_curve,
                    stationary_fluid_age)
from .quadrature import adaptive_quad
from .testfunctions import TestFunction, apply_B_age, hazard_function, semigroup_age

__all__ = [
    "KINDS",
    "CovarianceFunctional",
    "GaussianLaw",
    "cov_D",
    "cov_age_driving",
    "cov_G",
    "cov_residual_driving",
    "ou_transient_mean_age",
    "ou_transient_cov_age",
    "ou_stationary_cov_age",
    "ou_cov_age_general",
    "ou_cov_residual",
    "poisson_init_extra",
    "generator_apply",
    "bar_check",
    "stationary_horizon",
    "covariance_functional",
    "stationary_law",
    "transient_law",
]

KINDS = ("D-noise", "age-driving", "G-noise", "residual-driving", "age-OU-transient",
         "age-OU-stationary")

_RTOL = 1e-13


def _at0(phi: TestFunction) -> float:
    return float(phi(np.zeros(1))[0])


def _expect(dist: ServiceDistribution, g) -> float:
    return dist.expect(g, rtol=_RTOL)


def _outer(a: float, width: float = 0.1, order: int = 16):
    return fixed_rule(0.0, a, width=width, order=order)


# driving noises -------------------------------------------------------------

def cov_D(s: float, phi: TestFunction, t: float, psi: TestFunction, fluid: FluidInput) -> float:
    """``int_0^{s ^ t} <A_u, h phi psi> du`` along the fluid age curve."""
    m = min(s, t)
    if m <= 0:
        return 0.0
    g = hazard_function(fluid.dist) * phi * psi
    u, w = _outer(m)
    return float(np.dot(w, fluid_age_curve(u, g, fluid)))


def cov_age_driving(s, phi, t, psi, sigma2: float, fluid: FluidInput) -> float:
    m = min(s, t)
    if m <= 0:
        return 0.0
    return sigma2 * m * _at0(phi) * _at0(psi) + cov_D(s, phi, t, psi, fluid)


def cov_G(s, phi, t, psi, lam: float, dist: ServiceDistribution) -> float:
    m = min(s, t)
    if m <= 0:
        return 0.0
    cov = _expect(dist, lambda y: phi(y) * psi(y)) - _expect(dist, phi) * _expect(dist, psi)
    return lam * m * cov


def cov_residual_driving(s, phi, t, psi, sigma2: float, lam: float,
                         dist: ServiceDistribution) -> float:
    m = min(s, t)
    if m <= 0:
        return 0.0
    return sigma2 * m * _expect(dist, phi) * _expect(dist, psi) + cov_G(s, phi, t, psi, lam, dist)


# age OU law -----------------------------------------------------------------

def ou_transient_mean_age(t: float, phi: TestFunction, A0, dist: ServiceDistribution) -> float:
    """``<A0, S_t phi>`` for a deterministic initial fluctuation ``A0``."""
    if A0 is None or isinstance(A0, ZeroMeasure):
        return 0.0
    return A0.pair(semigroup_age(t, phi, dist))


def ou_transient_cov_age(t: float, phi: TestFunction, psi: TestFunction, lam: float,
                         sigma2: float, dist: ServiceDistribution) -> float:
    if t <= 0:
        return 0.0
    ymax = dist.y_max

    def first(y):
        r = np.exp(dist.log_ccdf(y + t) - dist.log_ccdf(y))
        return dist.ccdf(y + t) * phi(y + t) * psi(y + t) * (1.0 - r)

    a = lam * adaptive_quad(first, 0.0, ymax, rtol=_RTOL, atol=1e-300)
    weight = lambda u: phi(u) * psi(u) * (lam * dist.cdf(u) + sigma2 * dist.ccdf(u)) * dist.ccdf(u)
    b = adaptive_quad(weight, 0.0, min(t, ymax), rtol=_RTOL, atol=1e-300)
    return a + b


def ou_stationary_cov_age(phi: TestFunction, psi: TestFunction, lam: float, sigma2: float,
                          dist: ServiceDistribution) -> float:
    weight = lambda u: phi(u) * psi(u) * (lam * dist.cdf(u) + sigma2 * dist.ccdf(u)) * dist.ccdf(u)
    return adaptive_quad(weight, 0.0, dist.y_max, rtol=_RTOL, atol=1e-300)


def poisson_init_extra(t: float, phi: TestFunction, psi: TestFunction, lam: float,
                       dist: ServiceDistribution, s: float | None = None) -> float:
    """Extra covariance ``lam <F_e, (S_s phi)(S_t psi)>`` from a Poisson initial population.

    ``s`` defaults to ``t``.
    """
    Sp = semigroup_age(t if s is None else s, phi, dist)
    Sq = semigroup_age(t, psi, dist)
    return stationary_fluid_age(lam, dist).pair(lambda y: Sp(y) * Sq(y))


def ou_cov_age_general(s: float, t: float, phi: TestFunction, psi: TestFunction, lam: float,
                       sigma2: float, dist: ServiceDistribution, width: float = 0.1) -> float:
    """Two-time covariance ``Cov(<A_s, phi>, <A_t, psi>)`` with zero initial fluctuation."""
    m = min(s, t)
    if m <= 0:
        return 0.0
    u, wu = _outer(m, width=width)
    y, wy = fixed_rule(0.0, dist.y_max, width=width)
    fy = dist.pdf(y) * wy
    Ly = dist.log_ccdf(y)
    total = 0.0
    for ui, wi in zip(u, wu):
        a, b = s - ui, t - ui
        boundary = sigma2 * dist.ccdf(a) * phi(a) * dist.ccdf(b) * psi(b)
        ra = np.exp(dist.log_ccdf(y + a) - Ly)
        rb = np.exp(dist.log_ccdf(y + b) - Ly)
        bulk = lam * np.dot(fy, ra * phi(y + a) * rb * psi(y + b))
        total += wi * (float(boundary) + bulk)
    return float(total)


def ou_cov_residual(s: float, t: float, phi: TestFunction, psi: TestFunction, lam: float,
                    sigma2: float, dist: ServiceDistribution, width: float = 0.1) -> float:
    """Two-time covariance of the residual OU process started from zero.

    The residual driving covariance rate applied to ``tau_{s-u} phi`` and
    ``tau_{t-u} psi``, integrated over ``u in [0, s ^ t]``.
    """
    m = min(s, t)
    if m <= 0:
        return 0.0
    u, wu = _outer(m, width=width)
    y, wy = fixed_rule(0.0, dist.y_max, width=0.05)
    fy = dist.pdf(y) * wy
    total = 0.0
    for ui, wi in zip(u, wu):
        pa = phi(y - (s - ui))
        pb = psi(y - (t - ui))
        ea, eb = np.dot(fy, pa), np.dot(fy, pb)
        total += wi * (sigma2 * ea * eb + lam * (np.dot(fy, pa * pb) - ea * eb))
    return float(total)


def stationary_horizon(dist: ServiceDistribution) -> float:
    """Horizon standing in for ``t = infinity``: 40 over the slowest decay rate.

    The transient-stationary gap decays like ``exp(-r t)`` with ``r`` the
    limiting hazard, so the truncation error is of order ``exp(-40)``.
    """
    return 40.0 / min(1.0, dist.hazard_limit)


# generator ------------------------------------------------------------------

def generator_apply(phi: TestFunction, mu, lam: float, sigma2: float,
                    dist: ServiceDistribution) -> complex:
    """Generator applied to ``exp(i <., phi>)`` at the atom measure ``mu``."""
    pair = (lambda g: 0.0) if mu is None or isinstance(mu, ZeroMeasure) else mu.pair
    Bphi = apply_B_age(phi, dist)
    c = 0.5 * sigma2 * _at0(phi) ** 2 + 0.5 * lam * _expect(dist, lambda y: phi(y) ** 2)
    return complex(1j * pair(Bphi) - c) * complex(np.exp(1j * pair(phi)))


def bar_check(phi: TestFunction, lam: float, sigma2: float, dist: ServiceDistribution) -> float:
    """Basic adjoint relation defect for the stationary Gaussian law.

    With ``X = <A, phi>`` and ``Y = <A, B phi>`` jointly Gaussian,
    ``E[i Y e^{iX}] = -Sigma12 e^{-Sigma11/2}``, so stationarity requires
    ``Sigma12 = -c`` with ``c = sigma2/2 phi(0)^2 + lam/2 <F, phi^2>``. Returns
    ``|-Sigma12 - c| e^{-Sigma11/2}``.
    """
    Bphi = apply_B_age(phi, dist)
    s11 = ou_stationary_cov_age(phi, phi, lam, sigma2, dist)
    s12 = ou_stationary_cov_age(phi, Bphi, lam, sigma2, dist)
    c = 0.5 * sigma2 * _at0(phi) ** 2 + 0.5 * lam * _expect(dist, lambda y: phi(y) ** 2)
    return abs(-s12 - c) * float(np.exp(-0.5 * s11))


# containers -----------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceFunctional:
    """``eval(s, phi, t, psi)`` for one of :data:`KINDS`."""

    kind: str
    fn: Callable

    def eval(self, s: float, phi: TestFunction, t: float, psi: TestFunction) -> float:
        return float(self.fn(s, phi, t, psi))

    def gram(self, t: float, battery) -> np.ndarray:
        k = len(battery)
        G = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                G[i, j] = self.eval(t, battery[i], t, battery[j])
        return G


def covariance_functional(kind: str, lam: float, sigma2: float, dist: ServiceDistribution,
                          fluid: FluidInput | None = None) -> CovarianceFunctional:
    if fluid is None:
        fluid = FluidInput(stationary_fluid_age(lam, dist), lam, dist)
    table = {
        "D-noise": lambda s, p, t, q: cov_D(s, p, t, q, fluid),
        "age-driving": lambda s, p, t, q: cov_age_driving(s, p, t, q, sigma2, fluid),
        "G-noise": lambda s, p, t, q: cov_G(s, p, t, q, lam, dist),
        "residual-driving": lambda s, p, t, q: cov_residual_driving(s, p, t, q, sigma2, lam, dist),
        "age-OU-transient": lambda s, p, t, q: ou_cov_age_general(s, t, p, q, lam, sigma2, dist),
        "age-OU-stationary": lambda s, p, t, q: ou_stationary_cov_age(p, q, lam, sigma2, dist),
    }
    if kind not in table:
        raise ValueError(f"unknown covariance kind {kind!r}")
    return CovarianceFunctional(kind, table[kind])


@dataclass(frozen=True)
class GaussianLaw:
    mean: Callable
    cov: Callable


def stationary_law(lam: float, sigma2: float, dist: ServiceDistribution) -> GaussianLaw:
    return GaussianLaw(lambda phi: 0.0,
                       lambda phi, psi: ou_stationary_cov_age(phi, psi, lam, sigma2, dist))


def transient_law(t: float, lam: float, sigma2: float, dist: ServiceDistribution,
                  A0: AtomMeasure | None = None) -> GaussianLaw:
    return GaussianLaw(lambda phi: ou_transient_mean_age(t, phi, A0, dist),
                       lambda phi, psi: ou_transient_cov_age(t, phi, psi, lam, sigma2, dist))
