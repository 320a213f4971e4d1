"""Gaussian laws against first-principles oracles.

With Poisson arrivals every customer contributes independently, so the
covariance of the centred, scaled age (or residual) pairing is a sum of
per-customer covariances. These shot-noise integrals are evaluated with
scipy and compared with the library's operator-based formulas.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from gginf import distributions as D
from gginf import laws as L
from gginf.fluid import AtomMeasure, FluidInput, stationary_fluid_age
from gginf.testfunctions import AGE_BATTERY, RESIDUAL_BATTERY, parse


def quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)[0]


def scalar(fn):
    return lambda y: float(fn(np.array(y)))


def age_oracle(d, s, t, phi, psi, lam):
    """Quantile start, Poisson arrivals, ``s <= t``."""
    Fb, f, g = scalar(d.ccdf), scalar(phi), scalar(psi)
    arr = lam * quad(lambda u: f(s - u) * g(t - u) * Fb(t - u), 0, s)
    r = lambda y, a: Fb(y + a) / Fb(y)
    init = quad(lambda y: lam * Fb(y) * r(y, t) * (1 - r(y, s)) * f(y + s) * g(y + t), 0, d.y_max)
    return arr + init


def residual_oracle(d, s, t, phi, psi, lam):
    """Empty start, Poisson arrivals, ``s <= t``."""
    f, g, pdf = scalar(phi), scalar(psi), scalar(d.pdf)
    inner = lambda u, v: quad(lambda y: f(y - u) * g(y - v) * pdf(y), 0, d.y_max)
    return lam * quad(lambda u: inner(s - u, t - u), 0, s)


@pytest.mark.parametrize("strings", [("one", "one"), ("exp:1", "yexp:1"), ("logistic:4:1", "one")])
@pytest.mark.parametrize("st", [(1.0, 1.0), (0.5, 1.2)])
def test_age_two_time_against_shot_noise(dist, strings, st):
    phi, psi = map(parse, strings)
    s, t = st
    got = L.ou_cov_age_general(s, t, phi, psi, 1.3, 1.3, dist)
    assert got == pytest.approx(age_oracle(dist, s, t, phi, psi, 1.3), rel=1e-9, abs=1e-11)
    assert L.ou_cov_age_general(t, s, psi, phi, 1.3, 1.3, dist) == pytest.approx(got, abs=1e-12)


def test_residual_two_time_against_shot_noise(dist):
    phi, psi = parse("cutexp:1"), parse("cutyexp:1")
    got = L.ou_cov_residual(0.5, 1.2, phi, psi, 1.3, 1.3, dist)
    assert got == pytest.approx(residual_oracle(dist, 0.5, 1.2, phi, psi, 1.3), rel=1e-9, abs=1e-11)


def test_mm_inf_examples():
    e = D.exponential()
    one = parse("one")
    assert L.ou_transient_cov_age(1.0, one, one, 1.0, 1.0, e) == pytest.approx(1 - math.exp(-2),
                                                                              rel=1e-12)
    assert L.ou_stationary_cov_age(one, one, 1.0, 1.0, e) == pytest.approx(1.0, rel=1e-12)
    assert L.ou_stationary_cov_age(parse("exp:1"), parse("exp:1"), 1.0, 1.0, e) == pytest.approx(
        1 / 3, rel=1e-12)
    # Poisson start adds lam <F_e, (S_t 1)^2> = e^{-2t}
    assert L.poisson_init_extra(1.0, one, one, 1.0, e) == pytest.approx(math.exp(-2), rel=1e-12)


def test_gamma_stationary_quadrature():
    g = D.gamma(2)
    phi = parse("exp:1")
    lam, s2 = 1.0, 1.0
    want = quad(lambda y: float(g.ccdf(y)) * (lam * float(g.cdf(y)) + s2 * float(g.ccdf(y)))
                * math.exp(-2 * y), 0, g.y_max)
    assert L.ou_stationary_cov_age(phi, phi, lam, s2, g) == pytest.approx(want, rel=1e-11)


def test_driving_noises(dist):
    one, ex = parse("one"), parse("exp:1")
    # stationary fluid: <A_u h, 1> = lam, so cov_D = lam (s ^ t)
    fl = L.covariance_functional("D-noise", 1.4, 1.4, dist)
    assert fl.eval(0.7, one, 1.5, one) == pytest.approx(1.4 * 0.7, rel=1e-10)
    assert L.cov_G(1.0, one, 1.0, one, 1.4, dist) == pytest.approx(0.0, abs=1e-12)
    var = dist.expect(lambda y: np.exp(-2 * y)) - dist.expect(lambda y: np.exp(-y)) ** 2
    assert L.cov_G(2.0, ex, 3.0, ex, 1.4, dist) == pytest.approx(1.4 * 2.0 * var, rel=1e-10)
    fluid = FluidInput(stationary_fluid_age(1.0, dist), 1.0, dist)
    assert L.cov_age_driving(1.0, one, 1.0, one, 0.5, fluid) == pytest.approx(0.5 + 1.0, rel=1e-10)


def test_transient_mean():
    e = D.exponential()
    A0 = AtomMeasure(np.array([0.5, 2.0]), np.array([1.0, -1.0]))
    # <A0, S_t phi> with S_t phi = e^{-t} phi(. + t)
    phi = parse("exp:1")
    want = math.exp(-1.0) * (math.exp(-1.5) - math.exp(-3.0))
    assert L.ou_transient_mean_age(1.0, phi, A0, e) == pytest.approx(want, rel=1e-12)
    assert L.ou_transient_mean_age(1.0, phi, None, e) == 0.0


@pytest.mark.parametrize("text", AGE_BATTERY)
def test_bar(dist, text):
    assert L.bar_check(parse(text), 1.0, 1.0, dist) < 1e-8
    assert L.bar_check(parse(text), 2.0, 0.5, dist) < 1e-8


def test_generator_value_mm_inf():
    e = D.exponential()
    # phi = 1, one atom: B phi = -1 and c = 1/2 + 1/2, so (i * -1 - 1) e^{i}
    mu = AtomMeasure(np.array([0.5]), np.array([1.0]))
    val = L.generator_apply(parse("one"), mu, 1.0, 1.0, e)
    assert isinstance(val, complex)
    assert abs(val - (-1j - 1) * np.exp(1j)) < 1e-12


@pytest.mark.parametrize("text", AGE_BATTERY)
def test_transient_reaches_stationary(dist, text):
    phi = parse(text)
    t = L.stationary_horizon(dist)
    assert t >= 40
    assert abs(L.ou_transient_cov_age(t, phi, phi, 1.0, 1.0, dist)
               - L.ou_stationary_cov_age(phi, phi, 1.0, 1.0, dist)) < 1e-6


BATTERY = [parse(s) for s in ("one", "exp:1", "yexp:1", "logistic:4:1", "ramp:4:1", "cutexp:1")]


@pytest.mark.parametrize("kind", L.KINDS)
def test_functional_symmetric_psd(kind):
    d = D.gamma(2)
    cf = L.covariance_functional(kind, 1.0, 1.0, d)
    G = cf.gram(1.0, BATTERY)
    assert np.max(np.abs(G - G.T)) <= 1e-12
    assert np.linalg.eigvalsh(0.5 * (G + G.T)).min() >= -1e-9


def test_unknown_kind():
    with pytest.raises(ValueError):
        L.covariance_functional("nope", 1.0, 1.0, D.exponential())


def test_law_containers():
    e = D.exponential()
    one = parse("one")
    law = L.stationary_law(1.0, 1.0, e)
    assert law.mean(one) == 0.0 and law.cov(one, one) == pytest.approx(1.0)
    tl = L.transient_law(1.0, 1.0, 1.0, e)
    assert tl.cov(one, one) == pytest.approx(1 - math.exp(-2))


@pytest.mark.parametrize("text", RESIDUAL_BATTERY)
def test_residual_variance_nonnegative(dist, text):
    phi = parse(text)
    assert L.ou_cov_residual(1.0, 1.0, phi, phi, 1.0, 1.0, dist) >= 0.0
