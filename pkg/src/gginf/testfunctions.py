"""Smooth test functions with analytic derivative jets.

A :class:`TestFunction` wraps ``jet(y, k)``, which returns the stacked
derivatives ``phi, phi', ..., phi^{(k)}`` evaluated at ``y`` (any shape).
Jets compose exactly under sums, products, shifts, the age operator
``B_age phi = phi' - h phi``, the residual operator ``B_res phi = -phi'`` and
the age semigroup ``(S_t phi)(x) = Fbar(x+t)/Fbar(x) phi(x+t)``.

Functions are referenced by short name strings (see :func:`parse`), which
double as identifiers in output tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .distributions import ServiceDistribution
from .quadrature import QuadratureError, adaptive_quad

__all__ = [
    "K_MAX",
    "TestFunction",
    "WeightedMeasure",
    "TestFunctionError",
    "NotInSpaceError",
    "constant",
    "polynomial",
    "exponential",
    "yexp",
    "logistic",
    "ramp",
    "sine",
    "cosine",
    "left_cutoff",
    "hazard_function",
    "apply_B_age",
    "apply_B_residual",
    "semigroup_age",
    "semigroup_residual",
    "shift",
    "integrate",
    "seminorm",
    "generator_limit",
    "survival_ratio_jet",
    "parse",
    "surrogate_bias_bound",
    "AGE_BATTERY",
    "RESIDUAL_BATTERY",
]

K_MAX = 6
CUTOFF_STEEPNESS = 4.0
CUTOFF_CENTER = 2.0

AGE_BATTERY = ("one", "exp:1", "yexp:1", "logistic:4:1", "ramp:4:1")
RESIDUAL_BATTERY = ("count:8", "workload:8", "cutexp:1", "cutyexp:1", "cutlogistic:4:1")


class TestFunctionError(ValueError):
    """Bad test-function text or insufficient derivative depth."""

    __test__ = False


class NotInSpaceError(TestFunctionError):
    """A seminorm integral diverges against the requested measure."""


class TestFunction:
    """A smooth function known through its derivative jet.

    Parameters
    ----------
    jet : callable
        ``jet(y, k)`` returning an array of shape ``(k + 1,) + y.shape``.
    name : str
        Identifier, normally the string it was parsed from.
    domain : {"ages", "residuals"}
    decay : {"constant-ok", "left-decaying"}
        ``left-decaying`` functions are square integrable on the negative
        half-line; only those belong to the residual space.
    depth : int
        Highest derivative order available.
    """

    __test__ = False

    def __init__(self, jet, name: str, domain: str = "ages", decay: str = "constant-ok",
                 depth: int = K_MAX):
        if domain not in ("ages", "residuals"):
            raise TestFunctionError(f"unknown domain {domain!r}")
        if decay not in ("constant-ok", "left-decaying"):
            raise TestFunctionError(f"unknown decay tag {decay!r}")
        self._jet = jet
        self.name = name
        self.domain = domain
        self.decay = decay
        self.depth = depth
        self._cache: dict = {}

    def __repr__(self):
        return f"TestFunction({self.name!r}, domain={self.domain!r}, depth={self.depth})"

    def jet(self, y, k: int = 0) -> np.ndarray:
        if k > self.depth:
            raise TestFunctionError(
                f"{self.name}: derivative order {k} exceeds available depth {self.depth}"
            )
        return self._jet(np.asarray(y, dtype=float), k)

    def __call__(self, y):
        return self.jet(y, 0)[0]

    def derivative(self, y, k: int = 1):
        return self.jet(y, k)[k]

    # algebra ---------------------------------------------------------------
    def _meta(self, other):
        domain = self.domain if isinstance(other, (int, float)) else (
            "residuals" if "residuals" in (self.domain, other.domain) else "ages")
        return domain

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = constant(other)
        return TestFunction(
            lambda y, k: self._jet(y, k) + other._jet(y, k),
            f"({self.name}+{other.name})",
            self._meta(other),
            "left-decaying" if self.decay == other.decay == "left-decaying" else "constant-ok",
            min(self.depth, other.depth),
        )

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, TestFunction) else constant(-other))

    def scale(self, c: float) -> "TestFunction":
        return TestFunction(lambda y, k: c * self._jet(y, k), f"{c!r}*{self.name}",
                            self.domain, self.decay, self.depth)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.scale(float(other))

        def jet(y, k):
            a = self._jet(y, k)
            b = other._jet(y, k)
            out = np.zeros_like(a)
            for m in range(k + 1):
                for j in range(m + 1):
                    out[m] += math.comb(m, j) * a[j] * b[m - j]
            return out

        decay = "left-decaying" if "left-decaying" in (self.decay, other.decay) else "constant-ok"
        return TestFunction(jet, f"{self.name}*{other.name}", self._meta(other), decay,
                            min(self.depth, other.depth))

    __rmul__ = __mul__


# primitives -----------------------------------------------------------------

def constant(c: float = 1.0, name: str | None = None) -> TestFunction:
    def jet(y, k):
        out = np.zeros((k + 1,) + y.shape)
        out[0] = c
        return out

    return TestFunction(jet, name or ("one" if c == 1.0 else f"const:{c!r}"))


def polynomial(coefs, name: str | None = None) -> TestFunction:
    coefs = np.asarray(coefs, dtype=float)

    def jet(y, k):
        out = np.empty((k + 1,) + y.shape)
        c = coefs
        for m in range(k + 1):
            out[m] = P.polyval(y, c) if len(c) else 0.0
            c = P.polyder(c) if len(c) > 1 else np.zeros(1)
        return out

    return TestFunction(jet, name or "poly:" + ":".join(repr(float(x)) for x in coefs))


def exponential(alpha: float, name: str | None = None) -> TestFunction:
    """``exp(-alpha y)``."""

    def jet(y, k):
        e = np.exp(-alpha * y)
        return np.stack([(-alpha) ** m * e for m in range(k + 1)])

    return TestFunction(jet, name or f"exp:{alpha!r}")


def yexp(alpha: float, name: str | None = None) -> TestFunction:
    """``y exp(-alpha y)``."""

    def jet(y, k):
        e = np.exp(-alpha * y)
        out = [y * e]
        for m in range(1, k + 1):
            out.append((-alpha) ** m * y * e + m * (-alpha) ** (m - 1) * e)
        return np.stack(out)

    return TestFunction(jet, name or f"yexp:{alpha!r}")


def _sigmoid_polys(k: float, depth: int):
    # d^m/dy^m sigma(k(y-c)) = Q_m(s) with s = sigma; Q_{m+1} = k Q_m'(s) s (1-s)
    polys = [np.array([0.0, 1.0])]
    s_one_minus_s = np.array([0.0, 1.0, -1.0])
    for _ in range(depth):
        polys.append(k * P.polymul(P.polyder(polys[-1]), s_one_minus_s))
    return polys


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _sigmoid_derivs(u, polys, m_max):
    # evaluate at -|u| where s is small, then reflect: Q_m(u) = (-1)^(m+1) Q_m(-u)
    s = _sigmoid(-np.abs(u))
    flip = u > 0
    out = []
    for m in range(1, m_max + 1):
        v = P.polyval(s, polys[m])
        out.append(np.where(flip, (-1.0) ** (m + 1) * v, v))
    return out


def logistic(k: float, c: float, name: str | None = None, domain: str = "ages",
             decay: str = "constant-ok") -> TestFunction:
    """``sigma(k (y - c))`` with the standard logistic ``sigma``."""
    polys = _sigmoid_polys(k, K_MAX + 2)

    def jet(y, kk):
        u = k * (y - c)
        return np.stack([_sigmoid(u)] + _sigmoid_derivs(u, polys, kk))

    return TestFunction(jet, name or f"logistic:{k!r}:{c!r}", domain, decay, K_MAX + 2)


def ramp(k: float, c: float, name: str | None = None, domain: str = "ages",
         decay: str = "constant-ok") -> TestFunction:
    """Softplus ramp ``log(1 + exp(k (y - c))) / k``, a smooth ``(y - c)^+``."""
    polys = _sigmoid_polys(k, K_MAX + 2)

    def jet(y, kk):
        u = k * (y - c)
        sp = (np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))) / k
        return np.stack([sp, _sigmoid(u)] + _sigmoid_derivs(u, polys, kk - 1))[: kk + 1]

    return TestFunction(jet, name or f"ramp:{k!r}:{c!r}", domain, decay, K_MAX + 2)


def sine(omega: float = 1.0, name: str | None = None) -> TestFunction:
    def jet(y, k):
        return np.stack([omega**m * np.sin(omega * y + m * np.pi / 2) for m in range(k + 1)])

    return TestFunction(jet, name or f"sin:{omega!r}")


def cosine(omega: float = 1.0, name: str | None = None) -> TestFunction:
    def jet(y, k):
        return np.stack([omega**m * np.cos(omega * y + m * np.pi / 2) for m in range(k + 1)])

    return TestFunction(jet, name or f"cos:{omega!r}")


def left_cutoff() -> TestFunction:
    """Smooth cutoff ``sigma(4 (y + 2))``: near 1 on the ages, decays on the left."""
    return logistic(CUTOFF_STEEPNESS, -CUTOFF_CENTER, name="cutoff", domain="residuals",
                    decay="left-decaying")


def hazard_function(dist: ServiceDistribution) -> TestFunction:
    return TestFunction(lambda y, k: dist.hazard_jet(y, k), f"hazard[{dist.name}]", depth=8)


def surrogate_bias_bound(k: float, density_bound: float = 1.0) -> float:
    """Bound on ``|<mu, sigma(k y)> - mu(0, inf)|`` for a measure with density
    at most ``density_bound``: ``int |sigma(k y) - 1{y > 0}| dy = 2 ln 2 / k``."""
    return density_bound * 2.0 * math.log(2.0) / k


# operators ------------------------------------------------------------------

def apply_B_age(phi: TestFunction, dist: ServiceDistribution) -> TestFunction:
    """``phi' - h phi``; one derivative order is consumed."""
    if phi.depth < 1:
        raise TestFunctionError(f"{phi.name}: no derivative depth left for B_age")

    def jet(y, k):
        a = phi._jet(y, k + 1)
        h = dist.hazard_jet(y, k)
        out = a[1:].copy()
        for m in range(k + 1):
            for j in range(m + 1):
                out[m] -= math.comb(m, j) * h[j] * a[m - j]
        return out

    return TestFunction(jet, f"Bage[{phi.name}]", phi.domain, phi.decay, min(phi.depth - 1, 7))


def apply_B_residual(phi: TestFunction) -> TestFunction:
    """``-phi'``; one derivative order is consumed."""
    if phi.depth < 1:
        raise TestFunctionError(f"{phi.name}: no derivative depth left for B_res")
    return TestFunction(lambda y, k: -phi._jet(y, k + 1)[1:], f"Bres[{phi.name}]",
                        phi.domain, phi.decay, phi.depth - 1)


def shift(t: float, phi: TestFunction) -> TestFunction:
    """``y -> phi(y - t)``."""
    if t == 0:
        return phi
    return TestFunction(lambda y, k: phi._jet(y - t, k), f"shift[{t!r}][{phi.name}]",
                        phi.domain, phi.decay, phi.depth)


def semigroup_residual(t: float, phi: TestFunction) -> TestFunction:
    if t < 0:
        raise TestFunctionError("semigroup time must be >= 0")
    return shift(t, phi)


def survival_ratio_jet(dist: ServiceDistribution, t: float, x, k: int) -> np.ndarray:
    """Jet in ``x`` of ``r_t(x) = Fbar(x + t) / Fbar(x)``."""
    x = np.asarray(x, dtype=float)
    ell = dist.log_ccdf_jet(x + t, k) - dist.log_ccdf_jet(x, k)
    r = [np.exp(ell[0])]
    for m in range(k):
        acc = np.zeros_like(r[0])
        for j in range(m + 1):
            acc = acc + math.comb(m, j) * r[j] * ell[m + 1 - j]
        r.append(acc)
    return np.stack(r)


def semigroup_age(t: float, phi: TestFunction, dist: ServiceDistribution) -> TestFunction:
    """``(S_t phi)(x) = Fbar(x + t) / Fbar(x) * phi(x + t)``."""
    if t < 0:
        raise TestFunctionError("semigroup time must be >= 0")
    if t == 0:
        return phi

    def jet(y, k):
        r = survival_ratio_jet(dist, t, y, k)
        a = phi._jet(y + t, k)
        out = np.zeros_like(a)
        for m in range(k + 1):
            for j in range(m + 1):
                out[m] += math.comb(m, j) * r[j] * a[m - j]
        return out

    return TestFunction(jet, f"S[{t!r}][{phi.name}]", phi.domain, phi.decay, min(phi.depth, 8))


# measures and quadrature ----------------------------------------------------

@dataclass(frozen=True)
class WeightedMeasure:
    """Reference measure for pairings and seminorms.

    ``age``: density ``Fbar`` on ``[0, y_max]``. ``residual``: Lebesgue on
    ``[left, 0]`` plus density ``Fbar`` on ``[0, y_max]``.
    """

    kind: str
    dist: ServiceDistribution
    left: float = -60.0

    def __post_init__(self):
        if self.kind not in ("age", "residual"):
            raise TestFunctionError(f"unknown measure kind {self.kind!r}")

    def pieces(self, left: float | None = None):
        out = [(lambda y: self.dist.ccdf(y), 0.0, self.dist.y_max)]
        if self.kind == "residual":
            out.insert(0, (lambda y: np.ones_like(y), self.left if left is None else left, 0.0))
        return out


def integrate(g, mu: WeightedMeasure, rtol: float = 1e-10, left: float | None = None,
              atol: float = 1e-24) -> float:
    """``int g dmu`` by adaptive Gauss-Legendre quadrature."""
    total = 0.0
    for dens, a, b in mu.pieces(left):
        total += adaptive_quad(lambda y: g(y) * dens(y), a, b, rtol=rtol, atol=atol)
    return total


def seminorm(phi: TestFunction, m: int, mu: WeightedMeasure) -> float:
    """``sum_{i <= m} ||phi^{(i)}||_{L^2(mu)}``.

    For the residual measure the negative half-line is truncated at
    ``mu.left`` and at twice that; growth between the two signals that
    ``phi`` is not square integrable there.
    """
    if m > min(phi.depth, K_MAX):
        raise TestFunctionError(f"seminorm order {m} exceeds available depth")
    total = 0.0
    for i in range(m + 1):
        sq = lambda y, i=i: phi.jet(y, i)[i] ** 2
        try:
            val = integrate(sq, mu)
            if mu.kind == "residual":
                wider = integrate(sq, mu, left=2.0 * mu.left)
                if abs(wider - val) > 1e-8 * max(1.0, abs(val)):
                    raise NotInSpaceError(
                        f"{phi.name}: order-{i} seminorm diverges on the negative half-line"
                    )
        except QuadratureError as exc:
            raise NotInSpaceError(f"{phi.name}: seminorm quadrature failed ({exc})") from exc
        total += math.sqrt(val)
    return total


# name strings ---------------------------------------------------------------

def _residual(phi: TestFunction, name: str) -> TestFunction:
    out = phi * left_cutoff()
    out.name = name
    out.domain = "residuals"
    out.decay = "left-decaying"
    return out


def parse(text: str) -> TestFunction:
    """Build a test function from its name string.

    ========================  =================================================
    ``one``                   constant 1
    ``const:c``               constant c
    ``poly:c0:c1:...``        polynomial with ascending coefficients
    ``exp:a``                 ``exp(-a y)``
    ``yexp:a``                ``y exp(-a y)``
    ``logistic:k:c``          ``sigma(k (y - c))``
    ``ramp:k:c``              softplus ramp, smooth ``(y - c)^+``
    ``sin:w`` / ``cos:w``     trigonometric
    ``count:k``               residual surrogate of ``1{y > 0}``: ``sigma(k y)``
    ``workload:k``            residual surrogate of ``y^+``: softplus ramp at 0
    ``cutexp:a``              ``exp(-a y)`` times the left cutoff
    ``cutyexp:a``             ``y exp(-a y)`` times the left cutoff
    ``cutlogistic:k:c``       logistic times the left cutoff
    ========================  =================================================
    """
    head, *rest = text.strip().split(":")
    try:
        args = [float(x) for x in rest]
    except ValueError as exc:
        raise TestFunctionError(f"bad numeric argument in test function {text!r}") from exc

    def need(n):
        if len(args) != n:
            raise TestFunctionError(f"test function {text!r} expects {n} argument(s)")

    if head == "one":
        need(0)
        return constant(1.0, name=text)
    if head == "const":
        need(1)
        return constant(args[0], name=text)
    if head == "poly":
        if not args:
            raise TestFunctionError("poly needs at least one coefficient")
        return polynomial(args, name=text)
    if head == "exp":
        need(1)
        return exponential(args[0], name=text)
    if head == "yexp":
        need(1)
        return yexp(args[0], name=text)
    if head == "logistic":
        need(2)
        return logistic(*args, name=text)
    if head == "ramp":
        need(2)
        return ramp(*args, name=text)
    if head == "sin":
        need(1)
        return sine(args[0], name=text)
    if head == "cos":
        need(1)
        return cosine(args[0], name=text)
    if head == "count":
        need(1)
        return logistic(args[0], 0.0, name=text, domain="residuals", decay="left-decaying")
    if head == "workload":
        need(1)
        return ramp(args[0], 0.0, name=text, domain="residuals", decay="left-decaying")
    if head == "cutexp":
        need(1)
        if args[0] >= CUTOFF_STEEPNESS:
            raise TestFunctionError("cutexp rate must be below the cutoff steepness")
        return _residual(exponential(args[0]), text)
    if head == "cutyexp":
        need(1)
        if args[0] >= CUTOFF_STEEPNESS:
            raise TestFunctionError("cutyexp rate must be below the cutoff steepness")
        return _residual(yexp(args[0]), text)
    if head == "cutlogistic":
        need(2)
        return _residual(logistic(*args), text)
    raise TestFunctionError(f"unknown test function {text!r}")


def generator_limit(semigroup, phi: TestFunction, y, h0: float = 0.02, levels: int = 5):
    """Richardson-extrapolated ``lim_{h -> 0} (S_h phi - phi) / h`` at ``y``.

    ``semigroup(h, phi)`` returns ``S_h phi``. Difference quotients at
    ``h0 / 2^j`` are combined by Neville extrapolation in ``h``.
    """
    y = np.asarray(y, dtype=float)
    base = phi(y)
    table = [(semigroup(h0 / 2**j, phi)(y) - base) / (h0 / 2**j) for j in range(levels)]
    for m in range(1, levels):
        table = [(2**m * table[j + 1] - table[j]) / (2**m - 1) for j in range(len(table) - 1)]
    return table[0]
