"""Acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL ...`` line; the lines are also
collected into the pytest terminal summary.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE_LINES
from gginf import cli
from gginf import distributions as D
from gginf import laws as L
from gginf import simulator as S
from gginf import testfunctions as T
from gginf.arrivals import ArrivalProcess
from gginf.config import parse_config
from gginf.fluid import (FluidInput, ZeroMeasure, fixed_point_residual, fluid_age,
                         stationary_fluid_age)
from gginf.harness import run_experiment

ROOT = Path(__file__).resolve().parents[1]
FAMILIES = (D.exponential(), D.gamma(2), D.hyperexponential([0.3, 0.7], [0.5, 2.0]))


def record(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def mminf():
    return parse_config(ROOT / "configs" / "mminf.ini")


@pytest.fixture(scope="module")
def mgamma():
    return parse_config(ROOT / "configs" / "mgamma.ini")


def test_criterion_01_path_identities():
    t0 = time.perf_counter()
    cps = np.linspace(0.0, 2.0, 17)
    age_fns = [T.parse(s) for s in T.AGE_BATTERY]
    res_fns = [T.parse(s) for s in T.RESIDUAL_BATTERY]
    kinds = ("poisson", "renewal", "deterministic")
    modes = ("quantile", "poisson", "empty")
    worst = 0.0
    paths = 0
    for i in range(102):
        dist = FAMILIES[i % 3]
        rng = np.random.default_rng([2024, i])
        n = int(rng.integers(5, 201))
        init = S.init_stationary_fluid(n, 1.0, dist, modes[(i // 3) % 3], rng)
        arr = ArrivalProcess(kinds[(i // 9) % 3], 1.0, scv=0.5 if kinds[(i // 9) % 3] == "renewal" else 1.0)
        path = S.simulate(arr, dist, n, 2.0, rng, init)
        phi, psi = age_fns[i % 5], res_fns[(i // 5) % 5]
        a = S.age_apply(path, cps, phi)
        worst = max(worst, np.max(np.abs(a - S.decomposition_residual_age(path, cps, phi))
                                  / np.maximum(1.0, np.abs(a))))
        r = S.residual_apply(path, cps, psi)
        worst = max(worst, np.max(np.abs(r - S.decomposition_residual_res(path, cps, psi))
                                  / np.maximum(1.0, np.abs(r))))
        paths += 1
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-8 and paths >= 100 and dt < 60,
           f"paths={paths} worst_rel={worst:.2e} (tol 1e-8) runtime={dt:.1f}s")


def test_criterion_02_semigroups():
    t0 = time.perf_counter()
    grid = np.linspace(0.0, 8.0, 81)
    times = (0.1, 0.7, 1.3)
    comp = ident = gen = 0.0
    bound_ok = True
    for dist in FAMILIES:
        mu = T.WeightedMeasure("age", dist)
        H = dist.hazard_bound
        for text in T.AGE_BATTERY:
            phi = T.parse(text)
            ident = max(ident, np.max(np.abs(T.semigroup_age(0.0, phi, dist)(grid) - phi(grid))),
                        np.max(np.abs(T.semigroup_residual(0.0, phi)(grid) - phi(grid))))
            for s in times:
                for t in times:
                    lhs = T.semigroup_age(s, T.semigroup_age(t, phi, dist), dist)(grid)
                    comp = max(comp, np.max(np.abs(lhs - T.semigroup_age(s + t, phi, dist)(grid))))
                    lhs = T.semigroup_residual(s, T.semigroup_residual(t, phi))(grid)
                    comp = max(comp, np.max(np.abs(lhs - T.semigroup_residual(s + t, phi)(grid))))
            y = grid[::8]
            lim = T.generator_limit(lambda h, f: T.semigroup_age(h, f, dist), phi, y)
            gen = max(gen, np.max(np.abs(lim - T.apply_B_age(phi, dist)(y))))
            lim = T.generator_limit(T.semigroup_residual, phi, y)
            gen = max(gen, np.max(np.abs(lim - T.apply_B_residual(phi)(y))))
            norms = [math.sqrt(T.integrate(lambda x, i=i: phi.jet(x, i)[i] ** 2, mu))
                     for i in range(4)]
            for t in (0.1, 1.0, 5.0):
                St = T.semigroup_age(t, phi, dist)
                for n in range(4):
                    lhs = math.sqrt(T.integrate(lambda x: St.jet(x, n)[n] ** 2, mu))
                    M = max(math.comb(n, i) * 2 * H ** (n - i) for i in range(n + 1))
                    bound_ok &= lhs <= M * sum(norms[: n + 1])
    dt = time.perf_counter() - t0
    ok = ident == 0.0 and comp <= 1e-9 and gen <= 1e-6 and bound_ok and dt < 60
    record(2, ok, f"identity={ident:.1e} composition={comp:.2e} (tol 1e-9) "
                  f"generator={gen:.2e} (tol 1e-6) seminorm_bound={'ok' if bound_ok else 'violated'} "
                  f"runtime={dt:.1f}s")


def test_criterion_03_fluid():
    worst = 0.0
    for dist in FAMILIES:
        for text in T.AGE_BATTERY + T.RESIDUAL_BATTERY:
            worst = max(worst, fixed_point_residual(1.0, dist, T.parse(text), 1.0))
    val = fluid_age(1.0, T.parse("one"), FluidInput(ZeroMeasure(), 1.0, D.exponential()))
    err = abs(val - (1 - math.exp(-1)))
    record(3, worst < 1e-8 and err <= 1e-9,
           f"fixed_point_max={worst:.2e} (tol 1e-8) mm_inf_transient_err={err:.2e} (tol 1e-9)")


def _ratios(report):
    return [r for r in report.rows if r.statistic.startswith("ratio_")]


def test_criterion_04_lln_rate(mminf, mgamma):
    t0 = time.perf_counter()
    rows = _ratios(run_experiment(mminf.select("lln")[0])) + \
        _ratios(run_experiment(mgamma.select("lln")[0]))
    dt = time.perf_counter() - t0
    vals = [r.empirical for r in rows]
    ok = len(rows) == 4 and all(1.5 <= v <= 2.7 for v in vals) and dt < 300
    record(4, ok, "ratios=" + ",".join(f"{v:.3f}" for v in vals)
           + f" (band [1.5, 2.7]) runtime={dt:.1f}s")


def _row(report, stat, phi="one"):
    (r,) = [r for r in report.rows if r.statistic == stat and r.phi == phi]
    return r


def test_criterion_05_clt(mminf):
    t0 = time.perf_counter()
    rep = run_experiment(mminf.select("clt")[0])
    dt = time.perf_counter() - t0
    var, mean = _row(rep, "var"), _row(rep, "mean")
    skew, kurt = _row(rep, "skew").empirical, _row(rep, "kurt").empirical
    target = 1 - math.exp(-2)
    ok = (abs(var.empirical - target) <= 0.1 * target and abs(mean.empirical) <= 3 * mean.se
          and abs(skew) < 0.15 and abs(kurt) < 0.3 and dt < 300)
    record(5, ok, f"var={var.empirical:.4f} (target {target:.5f} +-10%) "
                  f"mean={mean.empirical:.4f} (3SE {3 * mean.se:.4f}) skew={skew:.3f} "
                  f"kurt={kurt:.3f} runtime={dt:.1f}s")


def test_criterion_06_martingale(mminf):
    t0 = time.perf_counter()
    cfg = mminf.select("martingale")[0]
    rep = run_experiment(cfg)
    dt = time.perf_counter() - t0
    dist = cfg.dist()
    ok = dt < 300
    parts = []
    for text in cfg.phi:
        phi = T.parse(text)
        d = _row(rep, "D_var", text)
        # stationary fluid: <lam F_e h, phi^2> = lam int f phi^2 = lam E phi(eta)^2
        pred = cfg.lam * 1.0 * dist.expect(lambda y: phi(y) ** 2)
        fluid = FluidInput(stationary_fluid_age(cfg.lam, dist), cfg.lam, dist)
        assert abs(L.cov_D(1.0, phi, 1.0, phi, fluid) - pred) < 1e-9
        ok &= abs(d.empirical - pred) <= 0.1 * pred
        g = _row(rep, "G_var", text)
        m1 = dist.expect(lambda y: phi(y))
        gpred = cfg.lam * 1.0 * (dist.expect(lambda y: phi(y) ** 2) - m1 ** 2)
        ok &= abs(g.empirical - gpred) <= max(0.1 * gpred, 1e-10)
        parts.append(f"{text}: D_var={d.empirical:.4f}/{pred:.4f} G_var={g.empirical:.4f}/{gpred:.4f}")
    record(6, ok, "; ".join(parts) + f" runtime={dt:.1f}s")


def test_criterion_07_stationary(mminf, mgamma):
    t0 = time.perf_counter()
    a = run_experiment(mminf.select("stationary")[0])
    cfg = mgamma.select("stationary")[0]
    b = run_experiment(cfg)
    dt = time.perf_counter() - t0
    va = _row(a, "var").empirical
    ok = abs(va - 1.0) <= 0.1 and dt < 600
    parts = [f"mminf var={va:.4f} (target 1)"]
    g = cfg.dist()
    for text in cfg.phi:
        phi = T.parse(text)
        f = lambda y: float(g.ccdf(y)) * (float(g.cdf(y)) + float(g.ccdf(y))) * float(phi(np.array(y))) ** 2
        target = integrate.quad(f, 0, g.y_max, epsabs=1e-13, limit=200)[0]
        v = _row(b, "var", text).empirical
        ok &= abs(v - target) <= 0.1 * target
        parts.append(f"gamma {text} var={v:.4f} (target {target:.4f})")
    record(7, ok, "; ".join(parts) + f" runtime={dt:.1f}s")


def test_criterion_08_bar():
    bar = gap = 0.0
    for dist in FAMILIES:
        for text in T.AGE_BATTERY:
            phi = T.parse(text)
            bar = max(bar, L.bar_check(phi, 1.0, 1.0, dist))
            gap = max(gap, abs(L.ou_transient_cov_age(40.0, phi, phi, 1.0, 1.0, dist)
                               - L.ou_stationary_cov_age(phi, phi, 1.0, 1.0, dist)))
    record(8, bar < 1e-8 and gap <= 1e-6, f"bar_defect_max={bar:.2e} (tol 1e-8) "
                                            f"transient40_gap={gap:.2e} (tol 1e-6)")


def test_criterion_09_covariance_functionals():
    battery = [T.parse(s) for s in ("one", "exp:1", "yexp:1", "logistic:4:1", "ramp:4:1",
                                    "cutexp:1")]
    asym, low = 0.0, np.inf
    for dist in FAMILIES:
        for kind in L.KINDS:
            G = L.covariance_functional(kind, 1.0, 1.0, dist).gram(1.0, battery)
            asym = max(asym, float(np.max(np.abs(G - G.T))))
            low = min(low, float(np.linalg.eigvalsh(0.5 * (G + G.T)).min()))
    record(9, asym <= 1e-12 and low >= -1e-9,
           f"kinds={len(L.KINDS)} max_asymmetry={asym:.1e} (tol 1e-12) min_eig={low:.2e}")


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "det.ini"
    cfg.write_text("""
[DEFAULT]
service.family = gamma
service.params = 2
arrivals.lambda = 1.0
n = 50
replications = 200
rel_tol = 0.3
horizon = 1.0
checkpoints = 5
phi = one, exp:1
seed = 42

[experiment:det_lln]
kind = lln
n = 10, 40, 160

[experiment:det_clt]
kind = clt
""")
    outs = []
    for tag, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / tag
        cli.main(["verify", "--config", str(cfg), "--out", str(out), "--workers", workers])
        outs.append(out)
    files = ("det_lln.csv", "det_clt.csv", "det_lln.json", "det_clt.json", "summary.json")
    same = all((outs[0] / f).read_bytes() == (o / f).read_bytes() for o in outs[1:] for f in files)
    record(10, same, f"files={len(files)} runs=3 (workers 1, 1, 2) byte_identical={same}")
