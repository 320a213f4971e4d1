import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gginf import distributions as D
from gginf import testfunctions as T

GRID = np.linspace(0.0, 8.0, 41)
TIMES = (0.1, 0.7, 1.3)


def sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


# seminorms and integration -------------------------------------------------

def test_seminorm_examples():
    mu = T.WeightedMeasure("age", D.exponential())
    assert T.seminorm(T.parse("one"), 0, mu) == pytest.approx(1.0, rel=1e-12)
    assert T.seminorm(T.parse("one"), 5, mu) == pytest.approx(1.0, rel=1e-12)
    assert T.seminorm(T.parse("exp:1"), 1, mu) == pytest.approx(2 / math.sqrt(3), rel=1e-12)


def test_integrate_examples():
    mu = T.WeightedMeasure("age", D.exponential())
    assert T.integrate(lambda y: np.ones_like(y), mu) == pytest.approx(1.0, rel=1e-10)
    assert T.integrate(lambda y: np.zeros_like(y), mu) == 0.0
    res = T.WeightedMeasure("residual", D.exponential())
    # Lebesgue part of e^{y} on (-60, 0] plus int e^{y} e^{-y} on [0, y_max]
    val = T.integrate(lambda y: np.exp(np.minimum(y, 0.0)) * (y <= 0) + (y > 0) * np.exp(-y), res)
    assert val == pytest.approx(1.0 + 0.5, rel=1e-9)


def test_constant_not_in_residual_space():
    mu = T.WeightedMeasure("residual", D.exponential())
    with pytest.raises(T.NotInSpaceError):
        T.seminorm(T.parse("one"), 0, mu)
    assert math.isfinite(T.seminorm(T.parse("cutexp:1"), 3, mu))


def test_seminorm_order_beyond_depth():
    mu = T.WeightedMeasure("age", D.exponential())
    phi = T.apply_B_residual(T.parse("exp:1"))
    with pytest.raises(T.TestFunctionError):
        T.seminorm(phi, phi.depth + 1, mu)


# operators ------------------------------------------------------------------

def test_B_age_examples():
    e, g = D.exponential(), D.gamma(2)
    assert np.allclose(T.apply_B_age(T.parse("one"), e)(GRID), -1.0, atol=1e-14)
    assert np.allclose(T.apply_B_age(T.parse("poly:0:1"), e)(GRID), 1.0 - GRID, atol=1e-13)
    expected = -np.exp(-GRID) * (1 + 4 * GRID / (1 + 2 * GRID))
    assert np.allclose(T.apply_B_age(T.parse("exp:1"), g)(GRID), expected, rtol=1e-12, atol=1e-15)


def test_B_residual_examples():
    assert np.allclose(T.apply_B_residual(T.parse("const:3"))(GRID), 0.0)
    assert np.allclose(T.apply_B_residual(T.parse("poly:0:1"))(GRID), -1.0)
    assert np.allclose(T.apply_B_residual(T.parse("sin:1"))(GRID), -np.cos(GRID), atol=1e-15)


def test_depth_exhausted():
    phi = T.parse("exp:1")
    for _ in range(phi.depth):
        phi = T.apply_B_residual(phi)
    with pytest.raises(T.TestFunctionError):
        T.apply_B_residual(phi)


def test_age_semigroup_examples():
    e, g = D.exponential(), D.gamma(2)
    phi = T.parse("yexp:1")
    assert T.semigroup_age(0.0, phi, e) is phi
    assert np.allclose(T.semigroup_age(1.3, phi, e)(GRID), math.exp(-1.3) * phi(GRID + 1.3),
                       rtol=1e-13)
    assert np.allclose(T.semigroup_age(2.0, T.parse("one"), e)(GRID), math.exp(-2.0), rtol=1e-13)
    f = T.parse("exp:1")
    two = T.semigroup_age(0.3, T.semigroup_age(0.7, f, g), g)
    assert sup(two(GRID), T.semigroup_age(1.0, f, g)(GRID)) < 1e-10


def test_residual_semigroup_examples():
    phi = T.parse("poly:0:1")
    assert np.allclose(T.semigroup_residual(2.0, phi)(GRID), GRID - 2.0)
    assert T.semigroup_residual(0.0, phi) is phi
    with pytest.raises(T.TestFunctionError):
        T.semigroup_residual(-1.0, phi)


@pytest.mark.parametrize("text", T.AGE_BATTERY)
def test_semigroup_law_all_families(dist, text):
    phi = T.parse(text)
    for s in TIMES:
        for t in TIMES:
            lhs = T.semigroup_age(s, T.semigroup_age(t, phi, dist), dist)
            assert sup(lhs.jet(GRID, 2), T.semigroup_age(s + t, phi, dist).jet(GRID, 2)) < 1e-9
            lhs = T.semigroup_residual(s, T.semigroup_residual(t, phi))
            assert sup(lhs(GRID), T.semigroup_residual(s + t, phi)(GRID)) < 1e-12


@pytest.mark.parametrize("text", T.AGE_BATTERY)
def test_generator_consistency(dist, text):
    phi = T.parse(text)
    y = np.linspace(0.0, 5.0, 11)
    lim = T.generator_limit(lambda h, f: T.semigroup_age(h, f, dist), phi, y)
    assert sup(lim, T.apply_B_age(phi, dist)(y)) < 1e-6
    lim = T.generator_limit(T.semigroup_residual, phi, y)
    assert sup(lim, T.apply_B_residual(phi)(y)) < 1e-6


def _l2(phi, i, mu):
    return math.sqrt(T.integrate(lambda y: phi.jet(y, i)[i] ** 2, mu))


@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_seminorm_bound(dist, t):
    mu = T.WeightedMeasure("age", dist)
    H = dist.hazard_bound
    for text in T.AGE_BATTERY:
        phi = T.parse(text)
        norms = [_l2(phi, i, mu) for i in range(4)]
        St = T.semigroup_age(t, phi, dist)
        for n in range(4):
            M = max(math.comb(n, i) * 2 * H ** (n - i) for i in range(n + 1))
            assert _l2(St, n, mu) <= M * sum(norms[: n + 1]) * (1 + 1e-10)


@pytest.mark.parametrize("text", T.RESIDUAL_BATTERY)
def test_shift_contraction(text):
    mu = T.WeightedMeasure("residual", D.gamma(2))
    phi = T.parse(text)
    for t in (0.1, 1.0, 5.0):
        moved = T.semigroup_residual(t, phi)
        for n in range(3):
            assert _l2(moved, n, mu) <= _l2(phi, n, mu) * (1 + 1e-10)


def test_survival_ratio_jet_matches_ratio(dist):
    r = T.survival_ratio_jet(dist, 0.8, GRID, 2)
    assert np.allclose(r[0], dist.ccdf(GRID + 0.8) / dist.ccdf(GRID), rtol=1e-12)
    eps = 1e-5
    fd = (dist.ccdf(GRID + eps + 0.8) / dist.ccdf(GRID + eps)
          - dist.ccdf(GRID - eps + 0.8) / dist.ccdf(GRID - eps)) / (2 * eps)
    assert np.allclose(r[1][1:], fd[1:], rtol=1e-7, atol=1e-10)


# algebra and parsing --------------------------------------------------------

ALL_NAMES = T.AGE_BATTERY + T.RESIDUAL_BATTERY + ("sin:2", "cos:0.5", "poly:1:-2:0.5", "const:-2")


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ALL_NAMES), st.floats(-3.0, 6.0))
def test_jets_match_finite_differences(text, y):
    phi = T.parse(text)
    eps = 1e-5
    j = phi.jet(np.array([y]), 3)
    for m in range(1, 4):
        lo, hi = phi.jet(np.array([y - eps]), m - 1)[m - 1], phi.jet(np.array([y + eps]), m - 1)[m - 1]
        assert j[m][0] == pytest.approx((hi - lo)[0] / (2 * eps), rel=1e-5, abs=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL_NAMES), st.sampled_from(ALL_NAMES), st.floats(-2.0, 5.0))
def test_product_and_sum_rules(a, b, y):
    f, g = T.parse(a), T.parse(b)
    x = np.array([y])
    fj, gj = f.jet(x, 2), g.jet(x, 2)
    pj = (f * g).jet(x, 2)
    assert pj[0][0] == pytest.approx((fj[0] * gj[0])[0], rel=1e-12, abs=1e-14)
    assert pj[2][0] == pytest.approx((fj[2] * gj[0] + 2 * fj[1] * gj[1] + fj[0] * gj[2])[0],
                                     rel=1e-12, abs=1e-12)
    assert (f - g).jet(x, 1)[1][0] == pytest.approx((fj[1] - gj[1])[0], rel=1e-12, abs=1e-14)
    assert f.scale(2.5)(x)[0] == pytest.approx(2.5 * fj[0][0], rel=1e-14, abs=1e-300)


def test_parse_domains():
    assert T.parse("count:8").domain == "residuals"
    assert T.parse("cutexp:1").decay == "left-decaying"
    assert T.parse("exp:1").domain == "ages"


@pytest.mark.parametrize("bad", ["nope", "exp", "exp:x", "logistic:1", "cutexp:9", "poly"])
def test_parse_errors(bad):
    with pytest.raises(T.TestFunctionError):
        T.parse(bad)


def test_count_surrogate_bias_bound():
    k = 8.0
    mu = T.WeightedMeasure("residual", D.exponential())
    phi = T.parse(f"count:{k:g}")
    bias = T.integrate(lambda y: phi(y) - (y > 0), mu)
    assert abs(bias) <= T.surrogate_bias_bound(k)
    assert T.surrogate_bias_bound(k) == pytest.approx(2 * math.log(2) / k)


def test_hazard_function(dist):
    h = T.hazard_function(dist)
    assert np.allclose(h(GRID), dist.hazard(GRID), rtol=1e-13)
