"""Exact rational algebra for the boundary decomposition of cube polynomials.

Polynomials live in the space spanned by z^m with m in C_k = {0,1,2}^k.
The parameters mu and eta are substituted as Fractions; identities in
(mu, eta) are certified by vanishing on a tensor grid larger than the degree.

A polynomial p has a boundary decomposition when

    p = (z_1 + eta) F_1 + sum_{i>=2} (z_{i-1} - z_i - 1) F_i

with F_1 even in z_1 (hence free of z_1) and F_i symmetric under
z_{i-1} <-> z_i with degree <= 1 in both. Each F_i then has 3^{k-1} free
coefficients and the decomposition is a linear system with k 3^{k-1}
unknowns and 3^k equations, solved here by fraction-free elimination.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations, product
from typing import Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "CubePoly",
    "DecompositionWitness",
    "build_pk",
    "shuffles",
    "shuffle_map",
    "sh_coefficient",
    "sh_membership",
    "c_rk",
    "c_rk_extracted",
    "c_rk_certificate",
    "bd_decompose",
    "bd_generators",
    "bd_dimension",
    "random_bd_element",
    "sh_dimension",
    "condition_check",
    "bareiss_echelon",
    "exact_rank",
    "solve_exact",
    "beta_product_check",
]

Rat = Union[int, Fraction]
K_MAX = 6


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


# ---------------------------------------------------------------------------
# Cube polynomials
# ---------------------------------------------------------------------------


class CubePoly:
    """Sparse polynomial in k variables with every exponent at most 2."""

    __slots__ = ("k", "coeffs")

    def __init__(self, k: int, coeffs: Optional[dict] = None):
        self.k = k
        self.coeffs: dict = {}
        for m, c in (coeffs or {}).items():
            m = tuple(m)
            if len(m) != k or any(e < 0 or e > 2 for e in m):
                raise ValueError(f"exponent {m} outside the cube C_{k}")
            c = _frac(c)
            if c:
                self.coeffs[m] = c

    @classmethod
    def constant(cls, k: int, c: Rat) -> "CubePoly":
        return cls(k, {(0,) * k: c})

    @classmethod
    def var(cls, k: int, i: int) -> "CubePoly":
        """z_{i+1} (0-based index i)."""
        m = [0] * k
        m[i] = 1
        return cls(k, {tuple(m): 1})

    @classmethod
    def monomial(cls, m: Sequence[int], c: Rat = 1) -> "CubePoly":
        return cls(len(m), {tuple(m): c})

    @staticmethod
    def basis(k: int) -> list:
        return list(product(range(3), repeat=k))

    @classmethod
    def from_vector(cls, k: int, vec: Sequence[Rat]) -> "CubePoly":
        return cls(k, dict(zip(cls.basis(k), vec)))

    def to_vector(self) -> list:
        return [self.coeffs.get(m, Fraction(0)) for m in self.basis(self.k)]

    def __add__(self, other: "CubePoly") -> "CubePoly":
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out.get(m, 0) + c
        return CubePoly(self.k, out)

    def __neg__(self) -> "CubePoly":
        return CubePoly(self.k, {m: -c for m, c in self.coeffs.items()})

    def __sub__(self, other: "CubePoly") -> "CubePoly":
        return self + (-other)

    def __mul__(self, other) -> "CubePoly":
        if not isinstance(other, CubePoly):
            c = _frac(other)
            return CubePoly(self.k, {m: v * c for m, v in self.coeffs.items()})
        out: dict = {}
        for m1, c1 in self.coeffs.items():
            for m2, c2 in other.coeffs.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0) + c1 * c2
        return CubePoly(self.k, out)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, CubePoly) and self.k == other.k and self.coeffs == other.coeffs

    def __repr__(self) -> str:
        return f"CubePoly(k={self.k}, terms={len(self.coeffs)})"

    def is_zero(self) -> bool:
        return not self.coeffs

    def coefficient(self, m: Sequence[int]) -> Fraction:
        return self.coeffs.get(tuple(m), Fraction(0))

    def evaluate(self, point: Sequence[Rat]) -> Fraction:
        total = Fraction(0)
        for m, c in self.coeffs.items():
            term = c
            for v, e in zip(point, m):
                if e:
                    term *= _frac(v) ** e
            total += term
        return total

    def to_json(self) -> dict:
        return {"".join(map(str, m)): str(c) for m, c in sorted(self.coeffs.items())}


def _linear(k: int, coeffs: dict, const: Rat) -> CubePoly:
    """sum_i coeffs[i] z_i + const."""
    out = {(0,) * k: const}
    for i, c in coeffs.items():
        m = [0] * k
        m[i] = 1
        out[tuple(m)] = c
    return CubePoly(k, out)


def _poch(a: Fraction, n: int) -> Fraction:
    out = Fraction(1)
    for j in range(n):
        out *= a + j
    return out


def build_pk(k: int, mu: Rat, eta: Rat) -> CubePoly:
    """P_k = prod z_i^2 - prod(z_i - mu) sum_i binom(k,i) (mu)_i (eta)_{k-i}/(eta+mu)_k
    prod_{l<=k-i}(z_l + mu) prod_{j>k-i} z_j."""
    if not 1 <= k <= K_MAX:
        raise ValueError(f"k must be in 1..{K_MAX}")
    mu, eta = _frac(mu), _frac(eta)
    sq = CubePoly.monomial((2,) * k)
    left = CubePoly.constant(k, 1)
    for i in range(k):
        left = left * _linear(k, {i: 1}, -mu)
    inner = CubePoly(k)
    denom = _poch(eta + mu, k)
    for i in range(k + 1):
        w = math.comb(k, i) * _poch(mu, i) * _poch(eta, k - i) / denom
        term = CubePoly.constant(k, w)
        for l in range(k - i):
            term = term * _linear(k, {l: 1}, mu)
        for j in range(k - i, k):
            term = term * CubePoly.var(k, j)
        inner = inner + term
    return sq - left * inner


# ---------------------------------------------------------------------------
# Shuffles
# ---------------------------------------------------------------------------


def shuffles(r: int, k: int) -> list:
    """All (r, k-r) shuffles as permutations of 1..k, by enumeration."""
    if not 0 <= r <= k:
        raise ValueError("need 0 <= r <= k")
    out = []
    for s in permutations(range(1, k + 1)):
        if all(s[i] < s[i + 1] for i in range(r - 1)) and all(s[i] < s[i + 1] for i in range(r, k - 1)):
            out.append(s)
    return out


def _constant_placements(r: int, k: int):
    """Positions of the k-r constants, one tuple per shuffle.

    A shuffle keeps the constants and the variables in order, so it is fixed
    by the set of coordinates receiving constants.
    """
    return combinations(range(k), k - r)


def shuffle_map(p: CubePoly, r: int, eta: Rat) -> CubePoly:
    """L_{r,k}(p): sum over shuffles of p with -eta, -eta-1, ... in the constant slots."""
    k = p.k
    if not 0 <= r <= k:
        raise ValueError("need 0 <= r <= k")
    eta = _frac(eta)
    consts = [-eta - j for j in range(k - r)]
    out: dict = {}
    for S in _constant_placements(r, k):
        cval = dict(zip(S, consts))
        for m, c in p.coeffs.items():
            val = c
            xm = []
            for pos in range(k):
                if pos in cval:
                    if m[pos]:
                        val *= cval[pos] ** m[pos]
                else:
                    xm.append(m[pos])
            if val:
                key = tuple(xm)
                out[key] = out.get(key, 0) + val
    return CubePoly(r, out)


def sh_coefficient(p: CubePoly, r: int, eta: Rat) -> Fraction:
    """[x_1^2 ... x_r^2] L_{r,k}(p) without building the whole image."""
    k = p.k
    eta = _frac(eta)
    consts = [-eta - j for j in range(k - r)]
    total = Fraction(0)
    for S in _constant_placements(r, k):
        Sset = set(S)
        for m, c in p.coeffs.items():
            if any(m[pos] != 2 for pos in range(k) if pos not in Sset):
                continue
            val = c
            for pos, cv in zip(S, consts):
                if m[pos]:
                    val *= cv ** m[pos]
            total += val
    return total


def sh_membership(p: CubePoly, eta: Rat) -> tuple[bool, dict]:
    """Whether p is in SH_k, with the coefficient for every r."""
    report = {r: sh_coefficient(p, r, eta) for r in range(p.k + 1)}
    return all(v == 0 for v in report.values()), report


# ---------------------------------------------------------------------------
# C_{r,k}
# ---------------------------------------------------------------------------


def c_rk(k: int, r: int, mu: Rat, eta: Rat) -> Fraction:
    """Closed form of [x_1^2 ... x_r^2] L_{r,k}(P_k)."""
    if not 0 <= r <= k <= 8:
        raise ValueError("need 0 <= r <= k <= 8")
    mu, eta = _frac(mu), _frac(eta)
    n = k - r
    first = math.comb(k, r) * _poch(eta, n) ** 2
    s = Fraction(0)
    denom = _poch(eta + mu, k)
    for i in range(k + 1):
        inner = Fraction(0)
        for l in range(n + 1):
            b = math.comb(i, l) * math.comb(k - i, n - l)
            if b:
                inner += b * _poch(eta + n - l, l) * _poch(eta - mu, n - l)
        s += math.comb(k, i) * _poch(mu, i) * _poch(eta, k - i) / denom * inner
    return first - _poch(eta + mu, n) * s


def c_rk_extracted(k: int, r: int, mu: Rat, eta: Rat) -> Fraction:
    return sh_coefficient(build_pk(k, mu, eta), r, eta)


def _grid(n: int, offset: Fraction) -> list:
    return [offset + Fraction(j, 2) for j in range(n)]


def c_rk_certificate(k: int, grid_size: Optional[int] = None) -> dict:
    """Certify C_{r,k}(mu, eta) = 0 identically for all 0 <= r <= k.

    (eta+mu)_k C_{r,k} is a polynomial of degree at most 3k in each of mu and
    eta, so vanishing on a (3k+1) x (3k+1) tensor grid proves the identity.
    Both the closed form and the coefficient extracted from P_k are checked
    at every grid point.
    """
    n = grid_size or 3 * k + 1
    mus = _grid(n, Fraction(1, 3))
    etas = _grid(n, Fraction(1, 5))
    bad = []
    for mu in mus:
        for eta in etas:
            p = build_pk(k, mu, eta)
            for r in range(k + 1):
                a = c_rk(k, r, mu, eta)
                b = sh_coefficient(p, r, eta)
                if a != 0 or b != 0:
                    bad.append((r, str(mu), str(eta), str(a), str(b)))
    return {"k": k, "grid": n, "points": n * n, "certified": n >= 3 * k + 1 and not bad,
            "all_zero": not bad, "failures": bad}


# ---------------------------------------------------------------------------
# Exact linear algebra
# ---------------------------------------------------------------------------


def _integer_rows(rows: Sequence[Sequence[Rat]]) -> list:
    out = []
    for row in rows:
        row = [_frac(v) for v in row]
        den = 1
        for v in row:
            den = den * v.denominator // math.gcd(den, v.denominator)
        out.append([int(v * den) for v in row])
    return out


def bareiss_echelon(rows: Sequence[Sequence[Rat]], ncols: Optional[int] = None) -> tuple[list, list]:
    """Fraction-free row echelon form; returns (matrix, pivot columns).

    Pivots are searched only among the first ``ncols`` columns, so an
    augmented column is carried along without being pivoted on.
    """
    M = _integer_rows(rows)
    if not M:
        return [], []
    m, n = len(M), len(M[0])
    ncols = n if ncols is None else ncols
    prev = 1
    pivots = []
    row = 0
    for col in range(ncols):
        piv = next((i for i in range(row, m) if M[i][col] != 0), None)
        if piv is None:
            continue
        M[row], M[piv] = M[piv], M[row]
        p = M[row][col]
        for i in range(row + 1, m):
            a = M[i][col]
            Mi, Mr = M[i], M[row]
            for j in range(col, n):
                Mi[j] = (p * Mi[j] - a * Mr[j]) // prev
        # Bareiss division is exact; rows above keep their integers
        prev = p
        pivots.append(col)
        row += 1
        if row == m:
            break
    return M, pivots


def exact_rank(rows: Sequence[Sequence[Rat]]) -> int:
    return len(bareiss_echelon(rows)[1])


def solve_exact(A: Sequence[Sequence[Rat]], b: Sequence[Rat]) -> Optional[list]:
    """A particular solution of A x = b (free variables 0), or None if inconsistent."""
    n = len(A[0])
    E, piv = bareiss_echelon([list(r) + [bv] for r, bv in zip(A, b)], ncols=n)
    for i in range(len(piv), len(E)):
        if E[i][n] != 0:
            return None
    x = [Fraction(0)] * n
    for i in reversed(range(len(piv))):
        c = piv[i]
        s = Fraction(E[i][n]) - sum(Fraction(E[i][j]) * x[j] for j in range(c + 1, n) if E[i][j])
        x[c] = s / E[i][c]
    return x


# ---------------------------------------------------------------------------
# Boundary decompositions
# ---------------------------------------------------------------------------


@dataclass
class DecompositionWitness:
    k: int
    eta: Fraction
    F: list
    residual: CubePoly
    mu: Optional[Fraction] = None

    @property
    def exact(self) -> bool:
        return self.residual.is_zero()

    def recombine(self) -> CubePoly:
        return _recombine(self.k, self.eta, self.F)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "mu": None if self.mu is None else str(self.mu),
            "eta": str(self.eta),
            "F": [f.to_json() for f in self.F],
            "residual": "0" if self.exact else json.dumps(self.residual.to_json()),
        }


def _factor(k: int, i: int, eta: Fraction) -> CubePoly:
    """(z_1 + eta) for i = 0, (z_i - z_{i+1} - 1) otherwise (0-based i)."""
    if i == 0:
        return _linear(k, {0: 1}, eta)
    return _linear(k, {i - 1: 1, i: -1}, -1)


def bd_generators(k: int) -> list:
    """Basis of the admissible F_i, as (i, CubePoly) pairs (0-based i).

    F_1 ranges over monomials free of z_1. F_i ranges over products of
    1, z_{i-1} + z_i or z_{i-1} z_i with a monomial in the other variables.
    """
    gens = []
    for rest in product(range(3), repeat=k - 1):
        gens.append((0, CubePoly.monomial((0,) + rest)))
    for i in range(1, k):
        others = [j for j in range(k) if j not in (i - 1, i)]
        for rest in product(range(3), repeat=k - 2):
            base = [0] * k
            for j, e in zip(others, rest):
                base[j] = e
            sym = []
            one = list(base)
            sym.append(CubePoly.monomial(one))
            a, b = list(base), list(base)
            a[i - 1] = 1
            b[i] = 1
            sym.append(CubePoly.monomial(a) + CubePoly.monomial(b))
            ab = list(base)
            ab[i - 1] = ab[i] = 1
            sym.append(CubePoly.monomial(ab))
            gens.extend((i, s) for s in sym)
    return gens


def _recombine(k: int, eta: Fraction, F: Sequence[CubePoly]) -> CubePoly:
    out = CubePoly(k)
    for i, f in enumerate(F):
        if not f.is_zero():
            out = out + _factor(k, i, eta) * f
    return out


def _bd_columns(k: int, eta: Fraction):
    gens = bd_generators(k)
    cols = [(_factor(k, i, eta) * g).to_vector() for i, g in gens]
    return gens, cols


def bd_decompose(p: CubePoly, eta: Rat, mu: Optional[Rat] = None) -> Optional[DecompositionWitness]:
    """Exact boundary decomposition of p, or None when none exists."""
    k = p.k
    if not 1 <= k <= 4:
        raise ValueError("bd_decompose supports k <= 4")
    eta = _frac(eta)
    gens, cols = _bd_columns(k, eta)
    A = [list(row) for row in zip(*cols)]
    x = solve_exact(A, p.to_vector())
    if x is None:
        return None
    F = [CubePoly(k) for _ in range(k)]
    for (i, g), c in zip(gens, x):
        if c:
            F[i] = F[i] + g * c
    res = p - _recombine(k, eta, F)
    return DecompositionWitness(k=k, eta=eta, F=F, residual=res, mu=None if mu is None else _frac(mu))


def bd_dimension(k: int, eta: Rat) -> int:
    """dim BD_k as the exact rank of the decomposition map."""
    _, cols = _bd_columns(k, _frac(eta))
    return exact_rank(cols)


def random_bd_element(k: int, eta: Rat, rng: random.Random, density: float = 0.3) -> CubePoly:
    """A random element of BD_k with small random rational F coefficients."""
    eta = _frac(eta)
    F = [CubePoly(k) for _ in range(k)]
    for i, g in bd_generators(k):
        if rng.random() < density:
            F[i] = F[i] + g * Fraction(rng.randint(-9, 9), rng.randint(1, 5))
    return _recombine(k, eta, F)


def sh_dimension(k: int, eta: Rat) -> int:
    """3^k minus the exact rank of the k+1 shuffle conditions."""
    if not 1 <= k <= 5:
        raise ValueError("sh_dimension supports k <= 5")
    rows = []
    for r in range(k + 1):
        rows.append([sh_coefficient(CubePoly.monomial(m), r, eta) for m in CubePoly.basis(k)])
    return 3**k - exact_rank(rows)


def _w_set(k: int) -> list:
    top = (2,) * k
    out = [top]
    for i in range(k):
        m = list(top)
        m[i] = 1
        out.append(tuple(m))
    return out


def condition_check(k: int, which: str, eta: Rat) -> dict:
    """Conditions II_k and III_k: each monomial of W_{k-1} x {1} (resp. x {0})
    lies in BD_k + span(L_k^2 u W_k) (resp. span(L_k^1 u L_k^2))."""
    if not 2 <= k <= 4:
        raise ValueError("condition checks run for 2 <= k <= 4")
    eta = _frac(eta)
    _, cols = _bd_columns(k, eta)
    basis = CubePoly.basis(k)
    if which == "II":
        targets = [w + (1,) for w in _w_set(k - 1)]
        extra = {m for m in basis if m[-1] == 2} | set(_w_set(k))
    elif which == "III":
        targets = [w + (0,) for w in _w_set(k - 1)]
        extra = {m for m in basis if m[-1] in (1, 2)}
    else:
        raise ValueError("which must be 'II' or 'III'")
    ecols = [CubePoly.monomial(m).to_vector() for m in sorted(extra)]
    A = [list(row) for row in zip(*(cols + ecols))]
    results = {}
    for t in targets:
        x = solve_exact(A, CubePoly.monomial(t).to_vector())
        results["".join(map(str, t))] = x is not None
    return {"k": k, "condition": which, "monomials": results, "holds": all(results.values())}


def beta_product_check(mu: float, eta: float, n: int = 100_000, seed: int = 0) -> dict:
    """Monte Carlo check that (1-X)(1-Y) ~ Beta(mu, eta) for X ~ Beta(mu, eta),
    Y ~ Beta(eta - mu, mu), eta > mu; returns the KS p-value."""
    from scipy import stats

    if not eta > mu > 0:
        raise ValueError("need eta > mu > 0")
    g = np.random.default_rng(seed)
    prod_ = (1 - g.beta(mu, eta, n)) * (1 - g.beta(eta - mu, mu, n))
    res = stats.kstest(prod_, stats.beta(mu, eta).cdf)
    return {"mu": mu, "eta": eta, "n": n, "ks_stat": float(res.statistic), "p_value": float(res.pvalue)}
