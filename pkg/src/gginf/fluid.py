"""Fluid limits of the age and residual measures.

The age fluid solves ``<A_t, phi> = <A_0, phi> + E_t phi(0) + int_0^t
<A_s, B phi> ds`` with ``B phi = phi' - h phi``. Its solution is

    <A_0, S_t phi> + E_t phi(0) + int_0^t E_s (S_{t-s} B phi)(0) ds,

and because ``(S_u psi)(0) = Fbar(u) psi(u)`` the last term is a single
integral. For ``E_t = lam t`` an integration by parts gives the closed form
``<A_0, S_t phi> + lam int_0^t Fbar phi``, used as a cross-check.

The residual fluid is transported by the shift semigroup.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distributions import ServiceDistribution
from .quadrature import adaptive_quad, gauss_legendre
from .testfunctions import TestFunction, apply_B_age, semigroup_age, shift

__all__ = [
    "AtomMeasure",
    "DensityMeasure",
    "ZeroMeasure",
    "FluidInput",
    "fluid_age",
    "fluid_age_closed",
    "fluid_residual",
    "fluid_residual_closed",
    "stationary_fluid_age",
    "stationary_fluid_residual",
    "fixed_point_residual",
    "equation_defect_age",
    "fixed_rule",
    "fluid_age_curve",
]


def fixed_rule(a: float, b: float, width: float = 0.05, order: int = 20):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    m = max(1, int(np.ceil((b - a) / width)))
    edges = np.linspace(a, b, m + 1)
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(edges)
    nodes = (edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class ZeroMeasure:
    mass = 0.0

    def pair(self, g) -> float:
        return 0.0


@dataclass(frozen=True)
class AtomMeasure:
    """``sum_i w_i delta_{x_i}``; e.g. simulator initial ages with weights ``1/n``."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def scaled(cls, points, n: int) -> "AtomMeasure":
        points = np.asarray(points, dtype=float)
        return cls(points, np.full(len(points), 1.0 / n))

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def pair(self, g) -> float:
        if len(self.points) == 0:
            return 0.0
        return float(np.dot(self.weights, g(self.points)))


@dataclass(frozen=True)
class DensityMeasure:
    """Absolutely continuous measure with a vectorised density on ``[lo, hi]``."""

    density: Callable
    lo: float
    hi: float
    rtol: float = 1e-12

    @property
    def mass(self) -> float:
        return self.pair(lambda y: np.ones_like(y))

    def pair(self, g) -> float:
        return adaptive_quad(lambda y: self.density(y) * g(y), self.lo, self.hi,
                             rtol=self.rtol, atol=1e-300)


def stationary_fluid_age(lam: float, dist: ServiceDistribution) -> DensityMeasure:
    """``lam F_e`` as a measure: density ``lam Fbar`` on ``[0, y_max]``."""
    return DensityMeasure(lambda y: lam * dist.ccdf(y), 0.0, dist.y_max)


def stationary_fluid_residual(lam: float, dist: ServiceDistribution) -> DensityMeasure:
    """Stationary residual fluid: also ``lam F_e`` on the positive half-line."""
    return stationary_fluid_age(lam, dist)


@dataclass(frozen=True)
class FluidInput:
    """Initial fluid measure, fluid arrival function and service law.

    ``arrivals`` defaults to ``E_t = lam t``; any nondecreasing callable
    with ``E_0 = 0`` is accepted by the quadrature paths.
    """

    initial: object
    lam: float
    dist: ServiceDistribution
    arrivals: Callable | None = field(default=None)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("fluid arrival rate must be >= 0")

    def E(self, t):
        if self.arrivals is not None:
            return self.arrivals(t)
        return self.lam * np.asarray(t, dtype=float)


def _initial_age_term(t, phi, inp):
    if isinstance(inp.initial, ZeroMeasure):
        return 0.0
    return inp.initial.pair(semigroup_age(t, phi, inp.dist))


def fluid_age(t: float, phi: TestFunction, inp: FluidInput) -> float:
    """``<A_t, phi>`` from the regulator-map solution formula."""
    if t < 0:
        raise ValueError("t must be >= 0")
    dist = inp.dist
    out = _initial_age_term(t, phi, inp) + float(inp.E(t)) * float(phi(np.zeros(1))[0])
    if t == 0:
        return out
    Bphi = apply_B_age(phi, dist)
    integrand = lambda s: inp.E(s) * dist.ccdf(t - s) * Bphi(t - s)
    return out + adaptive_quad(integrand, 0.0, t, rtol=1e-13, atol=1e-300)


def fluid_age_closed(t: float, phi: TestFunction, inp: FluidInput) -> float:
    """Closed form for linear arrivals: ``<A_0, S_t phi> + lam int_0^t Fbar phi``."""
    dist = inp.dist
    out = _initial_age_term(t, phi, inp)
    if t == 0:
        return out
    return out + inp.lam * adaptive_quad(lambda u: dist.ccdf(u) * phi(u), 0.0, t,
                                         rtol=1e-13, atol=1e-300)


def _F_pairing_shifted(phi_vals, dist, u):
    """``<F, g(. - u)>`` for each ``u``; ``phi_vals(y)`` is vectorised."""
    y, w = fixed_rule(0.0, dist.y_max)
    fw = dist.pdf(y) * w
    u = np.asarray(u, dtype=float)
    return phi_vals(y[None, :] - u.reshape(-1, 1)) @ fw


def fluid_residual(t: float, phi: TestFunction, inp: FluidInput) -> float:
    """``<R_t, phi>``: ``<R_0, tau_t phi> + E_t <F, phi> - int_0^t E_s <F, phi'(. - (t - s))> ds``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    dist = inp.dist
    init = 0.0 if isinstance(inp.initial, ZeroMeasure) else inp.initial.pair(shift(t, phi))
    if t == 0:
        return init
    mean = float(_F_pairing_shifted(phi, dist, np.zeros(1))[0])
    dphi = lambda y: phi.jet(y, 1)[1]

    def integrand(s):
        s = np.asarray(s)
        vals = _F_pairing_shifted(dphi, dist, (t - s).ravel())
        return inp.E(s) * vals.reshape(s.shape)

    return init + float(inp.E(t)) * mean - adaptive_quad(integrand, 0.0, t, rtol=1e-13,
                                                         atol=1e-300)


def fluid_residual_closed(t: float, phi: TestFunction, inp: FluidInput) -> float:
    """Linear arrivals: ``<R_0, tau_t phi> + lam int_0^t <F, phi(. - u)> du``."""
    dist = inp.dist
    init = 0.0 if isinstance(inp.initial, ZeroMeasure) else inp.initial.pair(shift(t, phi))
    if t == 0:
        return init

    def integrand(u):
        u = np.asarray(u)
        return _F_pairing_shifted(phi, dist, u.ravel()).reshape(u.shape)

    return init + inp.lam * adaptive_quad(integrand, 0.0, t, rtol=1e-13, atol=1e-300)


def fixed_point_residual(lam: float, dist: ServiceDistribution, phi: TestFunction,
                         t: float) -> float:
    """Defect of the age fluid equation with ``A_s = lam F_e`` substituted.

    Left side ``<lam F_e, phi>``; right side ``<lam F_e, phi> + lam t phi(0)
    + t <lam F_e, B phi>``, so the defect is ``lam t |phi(0) + <F_e, B phi>|``
    with the pairings computed by quadrature.
    """
    if t == 0:
        return 0.0
    stat = stationary_fluid_age(lam, dist)
    lhs = stat.pair(phi)
    Bphi = apply_B_age(phi, dist)
    rhs = lhs + lam * t * float(phi(np.zeros(1))[0]) + t * stat.pair(Bphi)
    return abs(lhs - rhs)


def equation_defect_age(t: float, phi: TestFunction, inp: FluidInput,
                        width: float = 0.05) -> float:
    """``|<A_t, phi> - <A_0, phi> - E_t phi(0) - int_0^t <A_s, B phi> ds|``.

    ``<A_s, B phi>`` is taken from :func:`fluid_age` itself, so this tests
    that the solution formula solves the integral equation.
    """
    if t == 0:
        return 0.0
    Bphi = apply_B_age(phi, inp.dist)
    s, w = fixed_rule(0.0, t, width=width, order=12)
    drift = float(sum(wi * fluid_age(si, Bphi, inp) for si, wi in zip(s, w)))
    lhs = fluid_age(t, phi, inp)
    a0 = 0.0 if isinstance(inp.initial, ZeroMeasure) else inp.initial.pair(phi)
    return abs(lhs - a0 - float(inp.E(t)) * float(phi(np.zeros(1))[0]) - drift)


def fluid_age_curve(us, g: TestFunction, inp: FluidInput, width: float = 0.1) -> np.ndarray:
    """``<A_u, g>`` for an array of times, linear arrivals only.

    Uses the closed form with fixed composite rules so that the result is a
    smooth, deterministic function of ``u`` (suitable as an inner integrand).
    """
    us = np.atleast_1d(np.asarray(us, dtype=float))
    dist = inp.dist
    out = np.zeros(len(us))
    init = inp.initial
    if isinstance(init, AtomMeasure) and len(init.points):
        for j, u in enumerate(us):
            out[j] = init.pair(semigroup_age(u, g, dist))
    elif isinstance(init, DensityMeasure):
        y, w = fixed_rule(init.lo, init.hi, width=width)
        dw = init.density(y) * w
        L0 = dist.log_ccdf(y)
        for j, u in enumerate(us):
            out[j] = np.dot(dw, np.exp(dist.log_ccdf(y + u) - L0) * g(y + u))
    if inp.lam:
        out = out + inp.lam * np.array([_partial(dist, g, u) for u in us])
    return out


def _partial(dist, g, u, width: float = 0.1):
    if u <= 0:
        return 0.0
    x, w = fixed_rule(0.0, u, width=width)
    return float(np.dot(dist.ccdf(x) * g(x), w))
