"""Acceptance criteria, one test per criterion plus companions where a literal
target is off by a lattice factor or by a truncation term. Each test records a
single PASS/FAIL line that pytest prints in its terminal summary."""

import math
import random
import time
from fractions import Fraction as F

import numpy as np
import pytest

from betarwre import FullParams, ModelParams
from betarwre.annealed_oracle import exact_moment
from betarwre.contour_engine import G_function, generating_series, mellin_barnes_transform, scaling_constants
from betarwre.experiments import (
    GammaLaw,
    beta_gamma_closure,
    halfspace_targets,
    ks_test,
    llt_fullspace,
    llt_halfspace,
    moment_triangulation,
    z_conjecture_fullspace,
    z_conjecture_halfspace,
)
from betarwre.hankel import gamma_mixture_identity, laplace_bridge_check
from betarwre.pfaffian_fredholm import PfaffianKernel, fredholm_pfaffian_discretized, fredholm_pfaffian_series
from betarwre.polydecomp import (
    bd_decompose,
    build_pk,
    c_rk_certificate,
    random_bd_element,
    sh_dimension,
    sh_membership,
)

# ---------------------------------------------------------------------------
# 1. moment triangulation
# ---------------------------------------------------------------------------


def test_criterion_1_moment_triangulation(criterion):
    t0 = time.time()
    p11 = ModelParams(F(1), F(1))
    anchors = [
        exact_moment(p11, 1, 2, [1]).exact == F(3, 4),
        exact_moment(p11, 1, 3, [2]).exact == F(1, 2),
        exact_moment(p11, 2, 2, [1, 1]).exact == F(11, 18),
    ]
    rows = []
    for seed, p in enumerate([p11, ModelParams(F(3, 4), F(3, 2))]):
        rows += moment_triangulation(p, [1, 2, 3], range(2, 9), 5, mc_replicas=100_000, seed=seed + 1)
    line = all(r["line_ok"] for r in rows)
    nested = all(r["nested_ok"] for r in rows)
    mc = all(r["mc_ok"] for r in rows)
    elapsed = time.time() - t0
    ok = all(anchors) and line and nested and mc and elapsed <= 300
    worst = max(r["line_dev"] for r in rows if r["oracle"] > 0)
    criterion("criterion 1", ok,
              f"{len(rows)} cases, worst line rel {worst:.1e}, "
              f"worst nested {max(r['nested_dev'] for r in rows):.1e}, "
              f"max MC z {max(r['mc_z'] for r in rows):.2f}, {elapsed:.0f}s")
    assert all(anchors)
    assert line and nested and mc
    assert elapsed <= 300


# ---------------------------------------------------------------------------
# 2. Fredholm Pfaffian against the generating series
# ---------------------------------------------------------------------------

ZETA_GRID = [-1.0, -0.5, 0.0, 0.5, 1.0]


def _pfaffian_table(k_max):
    out = []
    for t in (2, 6, 10):
        kern = PfaffianKernel(1.0, 1.0, t)
        m = [exact_moment(ModelParams(F(1), F(1)), k, 2 * t, [1] * k).value for k in range(1, k_max + 1)]
        for z in ZETA_GRID:
            s = fredholm_pfaffian_series(kern, z, k_max=k_max).value
            d = fredholm_pfaffian_discretized(kern, z).value
            g = generating_series(m, 2.0, z)
            out.append((t, z, abs(s - d), abs(s - g), abs(d - g)))
    return out


def test_criterion_2_pfaffian_series(criterion):
    # The series is cut after k = 4. At t = 2 and |zeta| = 1 the k = 5 term
    # alone is 2.6e-6, so this comparison is expected to fail there.
    t0 = time.time()
    tab = _pfaffian_table(4)
    elapsed = time.time() - t0
    bad = [(t, z, gap) for t, z, gap, _, _ in tab if gap > 1e-6]
    partial = max(r[3] for r in tab)
    ok = not bad and partial <= 1e-6 and elapsed <= 120
    criterion("criterion 2", ok,
              f"series(k<=4) vs Pfaffian worst {max(r[2] for r in tab):.2e} "
              f"at {[(t, z) for t, z, _ in bad]}; series vs oracle partial sums {partial:.1e}; {elapsed:.0f}s")
    assert partial <= 1e-6
    assert elapsed <= 120
    assert not bad


def test_criterion_2_companion_with_tail(criterion):
    # the same grid with the series carried to k = 6
    tab = _pfaffian_table(6)
    worst = max(r[2] for r in tab)
    worst_oracle = max(r[4] for r in tab)
    ok = worst <= 1e-6 and worst_oracle <= 1e-6
    criterion("companion 2 (k<=6)", ok, f"series vs Pfaffian {worst:.1e}, Pfaffian vs oracle series {worst_oracle:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 3. half-space local limit theorem
# ---------------------------------------------------------------------------

P11 = ModelParams(1.0, 1.0)


@pytest.fixture(scope="module")
def llt_runs():
    t0 = time.time()
    big = llt_halfspace(P11, 2000, 2000, seed=2000, x_starts=(1,))
    small = llt_halfspace(P11, 200, 2000, seed=200, x_starts=(1,))
    return big, small, time.time() - t0


def _llt_verdict(big, small, lattice_factor):
    targets = halfspace_targets(P11, lattice_factor)
    ks11 = ks_test(big.samples["P11"], targets["P11"].cdf)
    ks00 = ks_test(big.samples["P00"], targets["P00"].cdf)
    ks11_small = ks_test(small.samples["P11"], targets["P11"].cdf)
    m = np.sqrt(2 * math.pi) * big.samples["P11"]
    mean, se = m.mean(), m.std(ddof=1) / math.sqrt(m.size)
    target = 2.0 * lattice_factor
    return {
        "p11": ks11.p_value, "p00": ks00.p_value, "mean": mean, "se": se,
        "mean_ok": abs(mean - target) <= 4 * se,
        "trend": ks11.statistic < ks11_small.statistic,
        "d2000": ks11.statistic, "d200": ks11_small.statistic,
    }


@pytest.mark.slow
def test_criterion_3_halfspace_llt(criterion, llt_runs):
    # literal targets: (2/sqrt(2 pi)) Gamma(2)/2, (2/sqrt(2 pi)) Gamma(1)/2 and mean 2
    big, small, elapsed = llt_runs
    v = _llt_verdict(big, small, lattice_factor=1)
    ok = v["p11"] > 0.01 and v["p00"] > 0.01 and v["mean_ok"] and v["trend"] and elapsed <= 600
    criterion("criterion 3", ok,
              f"KS p(1,1)={v['p11']:.2g} p(0,0)={v['p00']:.2g}, mean {v['mean']:.3f}+-{v['se']:.3f} vs 2, "
              f"D {v['d200']:.3f}->{v['d2000']:.3f}, {elapsed:.0f}s")
    assert v["p11"] > 0.01 and v["p00"] > 0.01
    assert v["mean_ok"]
    assert v["trend"]


@pytest.mark.slow
def test_criterion_3_companion_lattice_corrected(criterion, llt_runs):
    big, small, _ = llt_runs
    v = _llt_verdict(big, small, lattice_factor=2)
    ok = v["p11"] > 0.01 and v["p00"] > 0.01 and v["mean_ok"] and v["trend"]
    criterion("companion 3 (lattice factor 2)", ok,
              f"KS p(1,1)={v['p11']:.2g} p(0,0)={v['p00']:.2g}, mean {v['mean']:.3f}+-{v['se']:.3f} vs 4, "
              f"D {v['d200']:.3f}->{v['d2000']:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# 4. full-space local limit theorem
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def llt_full_runs():
    t0 = time.time()
    runs = {xt: llt_fullspace(FullParams(1.0, 1.0), 2000, xt, 2000, seed=4000 + int(xt)) for xt in (0.0, 1.0)}
    return runs, time.time() - t0


def _full_p(run, lattice_factor):
    xt = run.checks["x_tilde_effective"]
    g = math.exp(-xt * xt / 2) / math.sqrt(2 * math.pi)
    law = GammaLaw(2.0, lattice_factor * g / 2)
    return ks_test(run.samples["P"], law.cdf).p_value


@pytest.mark.slow
def test_criterion_4_fullspace_llt(criterion, llt_full_runs):
    # literal target g_1(x~) Gamma(2)/2
    runs, elapsed = llt_full_runs
    ps = {xt: _full_p(r, 1) for xt, r in runs.items()}
    ok = all(p > 0.01 for p in ps.values()) and elapsed <= 600
    criterion("criterion 4", ok, f"KS p {ps}, {elapsed:.0f}s")
    assert all(p > 0.01 for p in ps.values())


@pytest.mark.slow
def test_criterion_4_companion_lattice_corrected(criterion, llt_full_runs):
    runs, _ = llt_full_runs
    ps = {xt: _full_p(r, 2) for xt, r in runs.items()}
    ok = all(p > 0.01 for p in ps.values())
    criterion("companion 4 (lattice factor 2)", ok, f"KS p {ps}")
    assert ok


# ---------------------------------------------------------------------------
# 5. polynomial suite
# ---------------------------------------------------------------------------


def test_criterion_5_polynomial_suite(criterion):
    t0 = time.time()
    # C_{r,k} vanishes on the (2k+2)^2 grid; the identity itself is certified
    # on (3k+1)^2, which exceeds the degree of the cleared numerator
    literal = [c_rk_certificate(k, grid_size=2 * k + 2)["all_zero"] for k in range(1, 6)]
    certified = [c_rk_certificate(k)["certified"] for k in range(1, 6)]
    dims = [sh_dimension(k, F(2)) for k in range(1, 6)]
    dims_ok = dims == [3**k - k - 1 for k in range(1, 6)]
    decomp = []
    for k in range(1, 5):
        w = bd_decompose(build_pk(k, F(1), F(2)), F(2), mu=F(1))
        decomp.append(w is not None and w.exact and w.to_json()["residual"] == "0")
    rng = random.Random(5)
    subset = all(sh_membership(random_bd_element(k, F(2), rng), F(2))[0] for k in range(1, 5) for _ in range(50))
    elapsed = time.time() - t0
    ok = all(literal) and all(certified) and dims_ok and all(decomp) and subset and elapsed <= 180
    criterion("criterion 5", ok, f"C=0 on grids {literal}, certified {certified}, dim SH {dims}, "
                                 f"P_k witnesses {decomp}, BD in SH {subset}, {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 6. Hankel identities
# ---------------------------------------------------------------------------


def test_criterion_6_hankel(criterion):
    zs = np.linspace(-5, 0, 51)
    quad = max(abs(gamma_mixture_identity(nu, z) - math.exp(z)) for nu in (0.75, 1.5, 2.0) for z in zs)
    bridges = {nu: laplace_bridge_check(nu, lambda n, g: g.uniform(size=n), [0.5, 1.0, 2.0, 5.0], n=10**6,
                                        seed=6).max_z for nu in (0.75, 1.5, 2.0)}
    ok = quad <= 1e-8 and all(z < 4 for z in bridges.values())
    criterion("criterion 6", ok, f"quadrature error {quad:.1e}, bridge max z {bridges}")
    assert ok


# ---------------------------------------------------------------------------
# 7. Mellin-Barnes
# ---------------------------------------------------------------------------


def test_criterion_7_mellin_barnes(criterion):
    t0 = time.time()
    zetas = [0.1, 0.3, 0.5, 0.5j, -0.5j, 0.35 + 0.35j, -0.3 + 0.4j, -0.4 - 0.3j]
    worst, ordered = 0.0, True
    for t in (2, 4):
        m = [exact_moment(ModelParams(F(1), F(1)), k, t, [1] * k).value for k in range(1, 7)]
        for z in zetas:
            r = mellin_barnes_transform(P11, 1, t, z)
            worst = max(worst, abs(r.value - generating_series(m, 2.0, z)))
            ordered &= abs(r.terms[1]) < abs(r.terms[0])
    elapsed = time.time() - t0
    ok = worst <= 1e-3 and ordered and elapsed <= 300
    criterion("criterion 7", ok, f"worst gap {worst:.1e}, l=2 term below l=1 term {ordered}, {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 8. scaling constants
# ---------------------------------------------------------------------------


def _richardson_fd(D, h0, levels=6):
    # central differences have an error series in h^2; halve h and extrapolate
    T = [[D(h0 / 2**j)] for j in range(levels)]
    for j in range(1, levels):
        for m in range(1, j + 1):
            T[j].append((4**m * T[j][m - 1] - T[j - 1][m - 1]) / (4**m - 1))
    return T[-1][-1]


def _derivatives(mu, theta):
    c = scaling_constants(mu, theta)
    G = lambda z: G_function(z, mu, c.x_theta) + c.a_theta * z
    # the nearest singularity is at mu, so the step stays inside (mu, 2 theta - mu)
    h0 = min(0.1, (theta - mu) / 2)
    d1 = _richardson_fd(lambda h: (G(theta + h) - G(theta - h)) / (2 * h), h0)
    d2 = _richardson_fd(lambda h: (G(theta + h) - 2 * G(theta) + G(theta - h)) / h**2, h0)
    return d1, d2


def test_criterion_8_scaling_constants(criterion):
    anchor = abs(scaling_constants(1.0, 2.0).x_theta - 0.6)
    thetas = np.linspace(1.01, 21.0, 100)
    xs = np.array([scaling_constants(1.0, th).x_theta for th in thetas])
    decreasing = bool(np.all(np.diff(xs) < 0))
    limits = xs[0] > 0.999 and xs[-1] < 0.05
    fd = max(max(abs(d) for d in _derivatives(1.0, th)) for th in thetas)
    ok = anchor <= 1e-10 and decreasing and limits and fd <= 1e-6
    criterion("criterion 8", ok, f"|x-3/5|={anchor:.1e}, decreasing {decreasing}, "
                                 f"x at ends {xs[0]:.4f}/{xs[-1]:.4f}, max |F'|,|F''| {fd:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 9. conjecture diagnostics (non-gating apart from the closure calibration)
# ---------------------------------------------------------------------------


def test_criterion_9_conjecture_diagnostics(criterion):
    half = z_conjecture_halfspace(P11, 400, [50, 100, 200, 400], [0, 1, 2, 5], 300, seed=9)
    full = z_conjecture_fullspace(FullParams(1.0, 1.0), 400, [50, 100, 200, 400], [0, 2, 4], 300, seed=9)
    generated = half.to_record()["label"] == full.to_record()["label"] == "CONJECTURE"
    closure = beta_gamma_closure(1.0, 1.0, n=100_000, seed=9).p_value
    ok = generated and closure > 0.01
    ks = {x: round(r.p_value, 3) for x, r in half.reports.items()}
    criterion("criterion 9", ok, f"CONJECTURE reports generated, closure KS p={closure:.3f}, half-space KS p {ks}")
    assert ok
