"""Mean-one service-time laws with bounded smooth hazard.

Every supported family is a finite mixture of Erlang laws,

    F = sum_i w_i Erlang(k_i, r_i),

so the survival function is an exponential polynomial
``Fbar(y) = sum_r exp(-r y) p_r(y)`` with nonnegative polynomial coefficients.
All evaluations are carried out on ``exp(r_min y) Fbar(y)``, which keeps the
hazard, log-survival and conditional laws accurate far into the tail.

Families
--------
exponential
    Erlang(1, 1).
hyperexponential-k
    ``k`` exponential phases with probabilities ``p`` and rates ``mu``; rates
    are rescaled by the mean when ``normalize`` is set.
gamma-integer-shape
    Erlang(k, k), i.e. gamma with integer shape ``k`` and rate ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .quadrature import adaptive_quad

__all__ = [
    "ServiceDistribution",
    "ConditionalResidualLaw",
    "DistributionError",
    "FAMILIES",
    "exponential",
    "hyperexponential",
    "gamma",
    "from_name",
]

FAMILIES = ("exponential", "hyperexponential", "gamma")

# derivatives of the survival function kept in closed form
_JET_DEPTH = 9
_TAIL = 1e-12


class DistributionError(ValueError):
    """Invalid family parameters or degenerate conditioning."""


def _invert_increasing(G, g, target, lo, tol=1e-12, max_iter=200):
    """Solve ``G(y) = target`` for ``y >= lo`` elementwise.

    ``G`` is increasing with derivative ``g >= 0``. Newton steps are kept
    inside a bracket found by doubling and replaced by bisection when they
    leave it.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    left = lo.copy()
    step = np.ones_like(target)
    right = lo + step
    for _ in range(200):
        short = G(right) < target
        if not short.any():
            break
        left = np.where(short, right, left)
        step = np.where(short, 2.0 * step, step)
        right = np.where(short, lo + step, right)
    y = 0.5 * (left + right)
    for _ in range(max_iter):
        val = G(y) - target
        left = np.where(val < 0, y, left)
        right = np.where(val >= 0, y, right)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = y - val / g(y)
        bad = ~np.isfinite(newton) | (newton <= left) | (newton >= right)
        new = np.where(bad, 0.5 * (left + right), newton)
        done = np.abs(new - y) <= tol * (1.0 + np.abs(y))
        y = new
        if done.all():
            return y
    return y


@dataclass(frozen=True)
class ServiceDistribution:
    """A mixture of Erlang laws normalised to mean one.

    Parameters
    ----------
    name : str
        Family identifier (``exponential``, ``hyperexponential-k`` or
        ``gamma-integer-shape``).
    params : tuple of float
        Family parameters after normalisation.
    weights, shapes, rates : tuple
        Mixture description: weight, Erlang shape and Erlang rate per phase.
    hazard_bound : float
        Declared ``sup_y h(y)``.
    """

    name: str
    params: tuple
    weights: tuple
    shapes: tuple
    rates: tuple
    hazard_bound: float
    mean: float = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        k = np.asarray(self.shapes, dtype=int)
        r = np.asarray(self.rates, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DistributionError("mixture weights must be positive and sum to one")
        if np.any(k < 1) or np.any(r <= 0):
            raise DistributionError("Erlang shapes must be >= 1 and rates > 0")
        object.__setattr__(self, "mean", float(np.sum(w * k / r)))

        groups: dict[float, np.ndarray] = {}
        for wi, ki, ri in zip(w, k, r):
            coef = np.array([wi * ri**j / math.factorial(j) for j in range(ki)])
            prev = groups.get(float(ri), np.zeros(1))
            groups[float(ri)] = P.polyadd(prev, coef)
        grates = np.array(sorted(groups))
        polys = [groups[g] for g in grates]
        # jets[m][g]: polynomial multiplying exp(-r_g y) in the m-th derivative
        jets = [polys]
        for _ in range(_JET_DEPTH):
            jets.append(
                [P.polysub(P.polyder(p), rg * p) if len(p) > 1 else -rg * p
                 for p, rg in zip(jets[-1], grates)]
            )
        excess = []
        for p, rg in zip(polys, grates):
            acc = np.zeros(1)
            d = p
            for m in range(len(p)):
                acc = P.polyadd(acc, d / rg ** (m + 1))
                d = P.polyder(d)
            excess.append(acc)
        object.__setattr__(self, "_rates", grates)
        object.__setattr__(self, "_rmin", float(grates[0]))
        object.__setattr__(self, "_jets", jets)
        object.__setattr__(self, "_excess", excess)
        ymax = _invert_increasing(
            lambda y: -self.log_ccdf(y), self.hazard, np.array(-math.log(_TAIL)), 0.0
        )
        object.__setattr__(self, "y_max", float(ymax))

    # scaled evaluation ---------------------------------------------------
    def _scaled(self, polys, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for p, rg in zip(polys, self._rates):
            out = out + P.polyval(y, p) * np.exp(-(rg - self._rmin) * y)
        return out

    def ccdf_derivative(self, y, m: int):
        """``Fbar^{(m)}(y)``."""
        y = np.asarray(y, dtype=float)
        return self._scaled(self._jets[m], y) * np.exp(-self._rmin * y)

    # basic functions -----------------------------------------------------
    def ccdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, 1.0, self.ccdf_derivative(np.maximum(y, 0.0), 0))

    def cdf(self, y):
        return 1.0 - self.ccdf(y)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, 0.0, -self.ccdf_derivative(np.maximum(y, 0.0), 1))

    def log_ccdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.log(self._scaled(self._jets[0], y)) - self._rmin * y

    def hazard(self, y):
        y = np.asarray(y, dtype=float)
        return -self._scaled(self._jets[1], y) / self._scaled(self._jets[0], y)

    def log_ccdf_jet(self, y, k: int) -> np.ndarray:
        """Derivatives ``L^{(1)}, ..., L^{(k)}`` of ``L = log Fbar``.

        Returned with a leading axis of length ``k + 1``; entry 0 is ``L``.
        """
        if k > _JET_DEPTH:
            raise DistributionError(f"log-survival jet limited to order {_JET_DEPTH}")
        y = np.asarray(y, dtype=float)
        base = self._scaled(self._jets[0], y)
        q = [np.ones_like(y)] + [self._scaled(self._jets[j], y) / base for j in range(1, k + 1)]
        L = [np.log(base) - self._rmin * y]
        for n in range(1, k + 1):
            acc = q[n].copy()
            for j in range(1, n):
                acc = acc - math.comb(n - 1, j) * q[j] * L[n - j]
            L.append(acc)
        return np.stack(L)

    def hazard_jet(self, y, k: int) -> np.ndarray:
        """``h, h', ..., h^{(k)}`` stacked along the first axis."""
        return -self.log_ccdf_jet(y, k + 1)[1:]

    @property
    def hazard_limit(self) -> float:
        """``lim_{y -> inf} h(y)``, the slowest exponential rate."""
        return self._rmin

    # excess law ----------------------------------------------------------
    def excess_ccdf(self, y):
        y = np.asarray(y, dtype=float)
        yy = np.maximum(y, 0.0)
        val = self._scaled(self._excess, yy) * np.exp(-self._rmin * yy)
        return np.where(y < 0, 1.0, val)

    def excess_cdf(self, y):
        return 1.0 - self.excess_ccdf(y)

    def excess_pdf(self, y):
        return self.ccdf(y) * (np.asarray(y) >= 0)

    def _log_excess_ccdf(self, y):
        return np.log(self._scaled(self._excess, y)) - self._rmin * y

    def excess_quantile(self, p):
        """Inverse of ``excess_cdf`` on ``(0, 1)``."""
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)):
            raise DistributionError("quantile level must lie in (0, 1)")
        return _invert_increasing(
            lambda y: -self._log_excess_ccdf(y),
            lambda y: self._scaled(self._jets[0], y) / self._scaled(self._excess, y),
            -np.log1p(-p),
            0.0,
        )

    def expect(self, g, rtol: float = 1e-12) -> float:
        """``E g(eta)`` by quadrature on ``[0, y_max]``.

        The tail mass ``Fbar(y_max)`` is assigned to ``g(y_max)``.
        """
        body = adaptive_quad(lambda y: g(y) * self.pdf(y), 0.0, self.y_max, rtol=rtol)
        tail = float(np.asarray(g(np.array([self.y_max])))[0]) * float(self.ccdf(self.y_max))
        return body + tail

    # samplers ------------------------------------------------------------
    def sample_service(self, rng: np.random.Generator, size=None):
        comp = rng.choice(len(self.weights), size=size, p=np.asarray(self.weights))
        k = np.asarray(self.shapes)[comp]
        r = np.asarray(self.rates)[comp]
        return rng.gamma(k, 1.0 / r)

    def sample_excess(self, rng: np.random.Generator, size=None):
        w = np.asarray(self.weights, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        sh, rt, pr = [], [], []
        for wi, ki, ri in zip(w, self.shapes, r):
            for j in range(ki):
                sh.append(j + 1)
                rt.append(ri)
                pr.append(wi / ri)
        pr = np.asarray(pr)
        comp = rng.choice(len(pr), size=size, p=pr / pr.sum())
        return rng.gamma(np.asarray(sh)[comp], 1.0 / np.asarray(rt)[comp])

    def residual_given_age(self, age) -> "ConditionalResidualLaw":
        return ConditionalResidualLaw(self, age)

    def sample_residual_given_age(self, age, rng: np.random.Generator, size=None):
        """Remaining service of a customer already in service for ``age``."""
        age = np.asarray(age, dtype=float)
        if size is None:
            size = age.shape
        age = np.broadcast_to(age, size)
        if np.any(age < 0) or np.any(self.ccdf(age) <= 0):
            raise DistributionError("conditioning age must satisfy Fbar(age) > 0")
        e = rng.standard_exponential(size)
        target = -self.log_ccdf(age) + e
        y = _invert_increasing(lambda x: -self.log_ccdf(x), self.hazard, target, age)
        out = np.maximum(y - age, np.finfo(float).tiny)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ConditionalResidualLaw:
    """Law of the remaining service given elapsed service ``age``."""

    dist: ServiceDistribution
    age: float

    def __post_init__(self):
        if self.age < 0 or self.dist.ccdf(self.age) <= 0:
            raise DistributionError("conditioning age must satisfy Fbar(age) > 0")

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        val = np.exp(self.dist.log_ccdf(self.age + np.maximum(x, 0.0)) - self.dist.log_ccdf(self.age))
        return np.where(x < 0, 1.0, val)

    def sample(self, rng: np.random.Generator, size=None):
        return self.dist.sample_residual_given_age(self.age, rng, size)


# constructors ------------------------------------------------------------

def exponential() -> ServiceDistribution:
    return ServiceDistribution("exponential", (1.0,), (1.0,), (1,), (1.0,), 1.0)


def hyperexponential(probs, rates, normalize: bool = True) -> ServiceDistribution:
    p = np.asarray(probs, dtype=float)
    mu = np.asarray(rates, dtype=float)
    if p.shape != mu.shape or p.ndim != 1 or len(p) < 1:
        raise DistributionError("hyperexponential needs matching probability and rate lists")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DistributionError("hyperexponential probabilities must be positive and sum to one")
    if np.any(mu <= 0):
        raise DistributionError("hyperexponential rates must be positive")
    p = p / p.sum()
    m = float(np.sum(p / mu))
    if abs(m - 1.0) > 1e-12:
        if not normalize:
            raise DistributionError(f"hyperexponential mean is {m:.6g}, not 1 (set normalize)")
        mu = mu * m
    k = len(p)
    return ServiceDistribution(
        f"hyperexponential-{k}",
        tuple(p) + tuple(mu),
        tuple(p),
        (1,) * k,
        tuple(mu),
        float(np.sum(p * mu)),
    )


def gamma(shape: int, rate: float | None = None, normalize: bool = True) -> ServiceDistribution:
    if float(shape) != int(shape) or int(shape) < 1:
        raise DistributionError("gamma shape must be a positive integer")
    k = int(shape)
    if rate is not None and abs(k / rate - 1.0) > 1e-12 and not normalize:
        raise DistributionError(f"gamma mean is {k / rate:.6g}, not 1 (set normalize)")
    return ServiceDistribution(
        "gamma-integer-shape", (float(k), float(k)), (1.0,), (k,), (float(k),), float(k)
    )


def from_name(family: str, params=(), normalize: bool = True) -> ServiceDistribution:
    """Build a distribution from a family name and a flat parameter list.

    ``hyperexponential`` takes ``p_1..p_k, mu_1..mu_k``; ``gamma`` takes
    ``shape`` and optionally ``rate``; ``exponential`` takes an optional rate.
    """
    params = [float(x) for x in params]
    fam = family.split("-")[0] if family.startswith("hyperexponential") else family
    if fam in ("gamma-integer-shape",):
        fam = "gamma"
    if fam == "exponential":
        if params and abs(params[0] - 1.0) > 1e-12 and not normalize:
            raise DistributionError(f"exponential mean is {1 / params[0]:.6g}, not 1 (set normalize)")
        return exponential()
    if fam == "hyperexponential":
        if len(params) % 2 or not params:
            raise DistributionError("hyperexponential needs p_1..p_k followed by mu_1..mu_k")
        k = len(params) // 2
        return hyperexponential(params[:k], params[k:], normalize)
    if fam == "gamma":
        if not params:
            raise DistributionError("gamma needs a shape parameter")
        return gamma(params[0], params[1] if len(params) > 1 else None, normalize)
    raise DistributionError(f"unknown service family {family!r}")
