import math
from fractions import Fraction as F
from itertools import combinations

import numpy as np
import pytest

from betarwre.annealed_oracle import exact_moment, exact_moment_fullspace
from betarwre.contour_engine import line_nodes
from betarwre.core_model import FullParams, ModelParams
from betarwre.pfaffian_fredholm import (
    PfaffianKernel,
    ScalarKernel,
    SkewMatrix,
    envelope_check,
    fredholm_determinant,
    fredholm_pfaffian_discretized,
    fredholm_pfaffian_series,
    fullspace_limit_value,
    halfspace_limit_value,
    pfaffian,
    pfaffian_naive,
    series_coefficients,
)

P11 = ModelParams(1.0, 1.0)


def _skew(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a - a.T


def test_pfaffian_trivial():
    assert pfaffian([[0, 2.5], [-2.5, 0]]) == 2.5
    J = np.kron(np.eye(3), [[0, 1], [-1, 0]])
    assert pfaffian(J) == 1


@pytest.mark.parametrize("n", [2, 4, 6])
def test_pfaffian_matches_naive(n):
    a = _skew(n, n)
    assert abs(pfaffian(a) - pfaffian_naive(a)) < 1e-12 * max(1, abs(pfaffian_naive(a)))


@pytest.mark.parametrize("n", [6, 20, 60])
def test_pfaffian_squared_is_det(n):
    a = _skew(n, 100 + n)
    p = pfaffian(a)
    assert abs(p**2 / np.linalg.det(a) - 1) < 1e-10


def test_pfaffian_congruence():
    rng = np.random.default_rng(5)
    a = _skew(10, 7)
    b = rng.normal(size=(10, 10))
    lhs = pfaffian(b.T @ a @ b)
    rhs = np.linalg.det(b) * pfaffian(a)
    assert abs(lhs - rhs) < 1e-8 * abs(rhs)


def test_pfaffian_reads_upper_triangle():
    a = _skew(4, 1)
    junk = np.triu(a) + np.tril(np.ones((4, 4)), -1)
    assert abs(pfaffian(junk) - pfaffian(a)) < 1e-14
    assert abs(SkewMatrix(junk).pfaffian() - pfaffian(a)) < 1e-14


def test_odd_dimension_rejected():
    with pytest.raises(ValueError):
        pfaffian(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        SkewMatrix(np.zeros((5, 5)))


def test_kernel_skew_structure():
    K = PfaffianKernel.from_params(ModelParams(0.75, 1.5), 3)
    z, w = 0.4j, -1.3j
    assert K.K12(z, w) == -K.K21(w, z)
    assert K.K11(z, w) == pytest.approx(-K.K11(w, z))
    assert K.K22(z, w) == pytest.approx(-K.K22(w, z))
    assert K.K12(z, z) == pytest.approx(2 * z * K.phi(z))
    zs = [0.3j, -0.8j, 1.7j]
    blocks = K.block_matrix(zs)
    assert np.allclose(blocks, -blocks.T)
    cauchy = K.cauchy_matrix(zs)
    assert pfaffian(blocks) == pytest.approx(pfaffian(cauchy) * np.prod(K.phi(np.array(zs))), rel=1e-12)


def test_phi_on_one_row_only_is_not_skew():
    # putting phi(z) on K11 alone breaks K11(z, w) = -K11(w, z)
    K = PfaffianKernel.from_params(P11, 2)
    z, w = 0.4j, -1.3j
    one_sided = lambda a, b: (a - b) / (a + b + 1) * K.phi(a)
    assert abs(one_sided(z, w) + one_sided(w, z)) > 1e-3


def test_series_coefficients_are_subset_sums():
    K = PfaffianKernel.from_params(P11, 2)
    c = line_nodes(5, 2.0)
    A = K.weighted_matrix(c)
    coeffs = series_coefficients(K, c, 3)
    for k in (1, 2, 3):
        brute = 0
        for S in combinations(range(5), k):
            idx = [i for s in S for i in (2 * s, 2 * s + 1)]
            brute += pfaffian(A[np.ix_(idx, idx)])
        assert abs(coeffs[k] - brute) < 1e-12


def _oracle_terms(t, kmax):
    o = [exact_moment(ModelParams(F(1), F(1)), k, 2 * t, [1] * k).value for k in range(1, kmax + 1)]
    return [(-1) ** k * o[k - 1] / (math.factorial(k) * math.factorial(k + 1)) for k in range(1, kmax + 1)]


@pytest.mark.parametrize("t", [1, 3, 5])
def test_series_terms_match_oracle(t):
    K = PfaffianKernel.from_params(P11, t)
    r = fredholm_pfaffian_series(K, 1.0, k_max=4)
    ora = _oracle_terms(t, 4)
    assert abs(r.info["terms"][1] - ora[0]) < 1e-8
    for got, want in zip(r.info["terms"][1:], ora):
        assert abs(got - want) < 1e-8
    assert r.info["tail_bound"] > 0


def test_series_at_zero():
    K = PfaffianKernel.from_params(P11, 2)
    assert fredholm_pfaffian_series(K, 0).value == 1
    assert fredholm_pfaffian_discretized(K, 0).value == 1


@pytest.mark.parametrize("t", [2, 7])
@pytest.mark.parametrize("zeta", [1.0, -0.6, 0.8j])
def test_discretized_matches_series(t, zeta):
    K = PfaffianKernel.from_params(P11, t)
    d = fredholm_pfaffian_discretized(K, zeta)
    s = fredholm_pfaffian_series(K, zeta, k_max=6)
    assert abs(d.value - s.value) < 1e-6
    truth = 1 + sum(zeta**k * v for k, v in enumerate(_oracle_terms(t, 6), start=1))
    assert abs(d.value - truth) < 1e-6


def test_discretized_single_level():
    K = PfaffianKernel.from_params(P11, 2)
    v = fredholm_pfaffian_discretized(K, 0.5, node_count=200).value
    assert abs(v - fredholm_pfaffian_discretized(K, 0.5).value) < 1e-3


def test_halfspace_limit_by_extrapolation():
    # finite-t corrections decay like t^{-1/2}; one Richardson step in t removes the leading one
    zt = 0.5
    vals = []
    for t in (500, 2000):
        K = PfaffianKernel.from_params(P11, t)
        vals.append(fredholm_pfaffian_discretized(K, 2 * zt * math.sqrt(2 * t), tol=1e-3).value)
    extrap = 2 * vals[1] - vals[0]
    assert abs(extrap - halfspace_limit_value(1.0, zt)) < 1e-3
    assert abs(vals[1] - halfspace_limit_value(1.0, zt, lattice_factor=1.0)) > 0.1


def test_envelope_bound_stable():
    K = PfaffianKernel.from_params(ModelParams(1.0, 2.0), 4)
    c1 = envelope_check(K, line_nodes(64, 3.0))
    c2 = envelope_check(K, line_nodes(512, 3.0))
    assert np.isfinite(c2) and c2 < 1.05 * c1


@pytest.mark.parametrize("t,x", [(2, 0), (5, 1), (6, -2)])
def test_determinant_first_coefficient(t, x):
    for ab in [(F(1), F(1)), (F(1, 2), F(3, 2))]:
        fp = FullParams(*map(float, ab))
        L = ScalarKernel.from_params(fp, t, x)
        # a single variable needs no extrapolation
        c = series_coefficients(L, line_nodes(192, 2.0, L.default_shift()), 2)
        e1 = exact_moment_fullspace(FullParams(*ab), 1, t, [x]).value
        assert abs(c[1] - e1 / float(sum(ab))) < 1e-8


def test_determinant_matches_series():
    fp = FullParams(1.0, 1.0)
    L = ScalarKernel.from_params(fp, 4, 0)
    ex = [exact_moment_fullspace(FullParams(F(1), F(1)), k, 4, [0] * k).value for k in range(1, 7)]
    for zeta in (0.7, -1.0, 0.5j):
        truth = 1 + sum(zeta**k * e / (math.factorial(k) * math.factorial(k + 1)) for k, e in enumerate(ex, 1))
        assert abs(fredholm_determinant(L, zeta).value - truth) < 1e-7
    assert fredholm_determinant(L, 0).value == 1


def test_determinant_strip_constraint():
    L = ScalarKernel.from_params(FullParams(1.0, 1.0), 4, 0)
    with pytest.raises(ValueError):
        fredholm_determinant(L, 0.5, shift=0.2)
    with pytest.raises(ValueError):
        ScalarKernel.from_params(FullParams(1.0, 1.0), 4, 1)


def test_fullspace_limit():
    fp = FullParams(1.0, 1.0)
    zt = 0.5
    L = ScalarKernel.from_params(fp, 2000, 0)
    v = fredholm_determinant(L, zt * math.sqrt(2000)).value
    assert abs(v - fullspace_limit_value(fp, 0.0, zt)) < 1e-3
    assert abs(v.imag) < 1e-10
