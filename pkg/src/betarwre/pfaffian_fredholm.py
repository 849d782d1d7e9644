"""Finite Pfaffians and the two Fredholm objects built on the contour iR.

Half space: the 2x2 matrix kernel K acting on iR x {1, 2}. With the pair
coordinates u = (-z - 1/2, z - 1/2) every block is

    K_{ab}(z, w) = (u_a(z) - u_b(w)) / (u_a(z) + u_b(w)) * phi(.)

where phi(z) = (z^2/(z^2-mu^2))^t z / ((z^2-mu^2)(z^2-eta^2)) is carried by
each variable exactly once in every term of a Pfaffian expansion. How phi is
split between the two rows of a variable does not change any Pfaffian. A
discretization is therefore the genuinely skew matrix D M D with
D^2 = w phi on both rows of a node, and

    Pf(J + zeta D M D) = sum over node subsets S of zeta^|S| Pf((D M D)_S),

whose zeta^k coefficient is the product-quadrature value of the k-th
Fredholm series term. Writing B = J^T (D M D),
log Pf(J + zeta A) = (1/2) log det(I + zeta B), which gives the low series
terms from a handful of matrix traces.

Full space: the scalar kernel L(z, z') = f(z) / (z - z' - 1) on a vertical
line in the strip -alpha-beta < Re z < 0.

Both kernels couple nodes through poles at unit distance from the contour,
so refinement uses the same node doubling with half-integer Richardson
extrapolation as the line method in ``contour_engine``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numba
import numpy as np

from betarwre.contour_engine import ContourSpec, ContourValue, QuadConfig, _line_scale, _romberg, line_nodes
from betarwre.core_model import FullParams, ModelParams

__all__ = [
    "SkewMatrix",
    "pfaffian",
    "pfaffian_naive",
    "PfaffianKernel",
    "ScalarKernel",
    "fredholm_pfaffian_series",
    "fredholm_pfaffian_discretized",
    "fredholm_determinant",
    "series_coefficients",
    "hadamard_tail_bound",
    "halfspace_limit_value",
    "fullspace_limit_value",
    "envelope_check",
]


# ---------------------------------------------------------------------------
# Finite Pfaffians
# ---------------------------------------------------------------------------


class SkewMatrix:
    """Even-dimensional skew matrix built from its strict upper triangle."""

    def __init__(self, upper: np.ndarray):
        a = np.asarray(upper, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square array")
        if a.shape[0] % 2:
            raise ValueError("Pfaffian needs even dimension")
        u = np.triu(a, 1)
        self.data = u - u.T

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def pfaffian(self) -> complex:
        return pfaffian(self.data)


@numba.njit(cache=True)
def _parlett_reid(A):
    n = A.shape[0]
    pf = 1.0 + 0.0j
    for k in range(0, n - 1, 2):
        # pivot the largest entry of column k below the diagonal into row k+1
        kp = k + 1
        best = abs(A[k + 1, k])
        for i in range(k + 2, n):
            if abs(A[i, k]) > best:
                best = abs(A[i, k])
                kp = i
        if kp != k + 1:
            for j in range(n):
                tmp = A[k + 1, j]
                A[k + 1, j] = A[kp, j]
                A[kp, j] = tmp
            for i in range(n):
                tmp = A[i, k + 1]
                A[i, k + 1] = A[i, kp]
                A[i, kp] = tmp
            pf = -pf
        piv = A[k, k + 1]
        if piv == 0:
            return 0.0 + 0.0j
        pf *= piv
        if k + 2 < n:
            m = n - k - 2
            tau = np.empty(m, dtype=A.dtype)
            col = np.empty(m, dtype=A.dtype)
            for i in range(m):
                tau[i] = A[k, k + 2 + i] / piv
                col[i] = A[k + 2 + i, k + 1]
            for i in range(m):
                ti = tau[i]
                ci = col[i]
                for j in range(m):
                    A[k + 2 + i, k + 2 + j] += ti * col[j] - ci * tau[j]
    return pf


def pfaffian(A) -> complex:
    """Pf(A) by Gaussian skew tridiagonalization with pivoting.

    Only the strict upper triangle of ``A`` is read.
    """
    if isinstance(A, SkewMatrix):
        A = A.data
    a = np.asarray(A, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square array")
    n = a.shape[0]
    if n % 2:
        raise ValueError("Pfaffian needs even dimension")
    if n == 0:
        return 1.0 + 0.0j
    u = np.triu(a, 1)
    return complex(_parlett_reid(np.ascontiguousarray(u - u.T)))


def pfaffian_naive(A) -> complex:
    """Expansion along the first row; exponential cost, used as a check."""
    a = np.asarray(A, dtype=complex)
    n = a.shape[0]
    if n % 2:
        raise ValueError("Pfaffian needs even dimension")
    if n == 0:
        return 1.0 + 0.0j
    total = 0.0 + 0.0j
    for j in range(1, n):
        rest = [i for i in range(1, n) if i != j]
        total += (-1) ** (j + 1) * a[0, j] * pfaffian_naive(a[np.ix_(rest, rest)])
    return total


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PfaffianKernel:
    """The half-space matrix kernel K at time parameter t (walk length 2t)."""

    mu: float
    eta: float
    t: int

    @classmethod
    def from_params(cls, params: ModelParams, t: int) -> "PfaffianKernel":
        mu, eta = params.as_float()
        if t < 0:
            raise ValueError("t must be nonnegative")
        return cls(mu, eta, int(t))

    def phi(self, z):
        z = np.asarray(z, dtype=complex)
        z2 = z * z
        m2 = self.mu**2
        return (z2 / (z2 - m2)) ** self.t * z / ((z2 - m2) * (z2 - self.eta**2))

    # Blocks M_ab(z, w) c_a(z) c_b(w) with c_1 = phi, c_2 = 1. Every Pfaffian
    # term then carries each phi(z_i) exactly once, as the symmetrised moment
    # integrand requires, and K is skew: K_ab(z, w) = -K_ba(w, z).
    def K11(self, z, w):
        return (z - w) / (z + w + 1) * self.phi(z) * self.phi(w)

    def K12(self, z, w):
        return (z + w) / (z - w + 1) * self.phi(z)

    def K21(self, z, w):
        return -self.K12(w, z)

    def K22(self, z, w):
        return (w - z) / (1 - z - w)

    def block_matrix(self, zs: Sequence[complex]) -> np.ndarray:
        """The 2k x 2k matrix [K(z_i, z_j)]."""
        zs = np.asarray(zs, dtype=complex)
        k = len(zs)
        out = np.zeros((2 * k, 2 * k), dtype=complex)
        for i in range(k):
            for j in range(k):
                z, w = zs[i], zs[j]
                blk = np.array([[self.K11(z, w), self.K12(z, w)], [self.K21(z, w), self.K22(z, w)]])
                out[2 * i:2 * i + 2, 2 * j:2 * j + 2] = blk
        return out

    def cauchy_matrix(self, zs) -> np.ndarray:
        """Skew matrix (u_a - u_b)/(u_a + u_b) without the phi factors."""
        zs = np.asarray(zs, dtype=complex)
        u = np.empty(2 * len(zs), dtype=complex)
        u[0::2] = -zs - 0.5
        u[1::2] = zs - 0.5
        num = u[:, None] - u[None, :]
        den = u[:, None] + u[None, :]
        np.fill_diagonal(den, 1.0)
        return num / den

    def weighted_matrix(self, contour: ContourSpec) -> np.ndarray:
        """D M D with D^2 = w phi on both rows of every node."""
        d = np.sqrt(contour.weights * self.phi(contour.nodes))
        d2 = np.repeat(d, 2)
        return d2[:, None] * self.cauchy_matrix(contour.nodes) * d2[None, :]

    def default_scale(self) -> float:
        return _line_scale(2 * self.t, 1)


@dataclass(frozen=True)
class ScalarKernel:
    """The full-space kernel L(z, z') = f_{t,x}(z)/(z - z' - 1)."""

    alpha: float
    beta: float
    t: int
    x: int

    @classmethod
    def from_params(cls, params: FullParams, t: int, x: int) -> "ScalarKernel":
        a, b = params.as_float()
        if (t + x) % 2:
            raise ValueError("parity violation: t + x must be even")
        return cls(a, b, int(t), int(x))

    def f(self, z):
        # integer exponents, so principal logs give the same value without overflow at large t
        z = np.asarray(z, dtype=complex)
        s = self.alpha + self.beta
        t, x = self.t, self.x
        return np.exp(t * np.log(self.alpha + z) - ((t + x) // 2 + 1) * np.log(z)
                      + ((x - t) // 2 - 1) * np.log(z + s))

    def __call__(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        return self.f(z) / (z - w - 1)

    def default_shift(self) -> float:
        s = self.alpha + self.beta
        return -self.alpha if self.alpha < s else -s / 2

    def check_contour(self, shift: float):
        s = self.alpha + self.beta
        if not -s < shift < 0:
            raise ValueError("contour must satisfy -alpha-beta < Re z < 0")

    def weighted_matrix(self, contour: ContourSpec) -> np.ndarray:
        z = contour.nodes
        return (contour.weights * self.f(z))[:, None] / (z[:, None] - z[None, :] - 1)


# ---------------------------------------------------------------------------
# Series and discretization
# ---------------------------------------------------------------------------


def _coefficients_from_traces(p: Sequence[complex], half: bool) -> np.ndarray:
    """Taylor coefficients of exp(-c sum_m p_m x^m / m), c = 1/2 or 1."""
    c = 0.5 if half else 1.0
    kmax = len(p)
    g = [0.0] + [-c * p[m - 1] for m in range(1, kmax + 1)]
    e = np.zeros(kmax + 1, dtype=complex)
    e[0] = 1.0
    # e' = (sum_m g_m x^{m-1}) e, so n e_n = sum_{m=1}^n g_m e_{n-m}
    for n in range(1, kmax + 1):
        e[n] = sum(g[m] * e[n - m] for m in range(1, n + 1)) / n
    return e


def _power_traces(B: np.ndarray, kmax: int) -> list:
    p = [np.trace(B)]
    P = B
    for _ in range(2, kmax + 1):
        P = P @ B
        p.append(np.trace(P))
    return p


def series_coefficients(kernel, contour: ContourSpec, k_max: int) -> np.ndarray:
    """Product-quadrature values of the Fredholm series terms k = 0..k_max at zeta = 1."""
    A = kernel.weighted_matrix(contour)
    if isinstance(kernel, PfaffianKernel):
        # J^T A just permutes and negates rows
        B = np.empty_like(A)
        B[0::2] = -A[1::2]
        B[1::2] = A[0::2]
        # Pf(J + zeta A)^2 = det(I + zeta B)
        p = _power_traces(-B, k_max)
        return _coefficients_from_traces(p, half=True)
    # det(I + zeta L) = exp(sum (-1)^{m+1} zeta^m tr(L^m)/m)
    p = _power_traces(-A, k_max)
    return _coefficients_from_traces(p, half=False)


def hadamard_tail_bound(kernel: PfaffianKernel, contour: ContourSpec, zeta: complex, k_max: int,
                        terms: int = 200) -> float:
    """Bound on sum_{k > k_max} |zeta|^k/k! int |Pf| from Hadamard's inequality.

    On iR each entry of the pair matrix is bounded by 2|z| + 1 for either of
    its arguments, so |Pf| <= (2k)^{k/2} prod_i |phi(z_i)| (2|z_i| + 1).
    """
    G = float(np.sum(np.abs(contour.weights * kernel.phi(contour.nodes)) * (2 * np.abs(contour.nodes) + 1)))
    a = abs(zeta) * G
    tail = 0.0
    for k in range(k_max + 1, k_max + 1 + terms):
        log_term = k * math.log(a) + 0.5 * k * math.log(2 * k) - math.lgamma(k + 1) if a > 0 else -math.inf
        term = math.exp(log_term)
        tail += term
        if k > 2 * a * a + 10 and term < 1e-300:
            break
    if not math.isfinite(tail):
        raise ArithmeticError("divergent tail estimate")
    return tail


def _richardson(vals: list) -> tuple[np.ndarray, np.ndarray]:
    """Romberg table over node doubling for vectors of values, as in the line method."""
    table = [list(vals)]
    for j in range(1, len(vals)):
        f = 2 ** (j + 0.5)
        prev = table[-1]
        table.append([(f * prev[i + 1] - prev[i]) / (f - 1) for i in range(len(prev) - 1)])
    best = np.asarray(table[-1][0])
    return best, np.abs(best - np.asarray(table[-2][-1]))


def _half_contour(kernel: PfaffianKernel, n: int, cfg: QuadConfig) -> ContourSpec:
    return line_nodes(n, cfg.scale or kernel.default_scale())


def fredholm_pfaffian_series(
    kernel: PfaffianKernel, zeta: complex, k_max: int = 4, cfg: Optional[QuadConfig] = None
) -> ContourValue:
    """1 + sum_{k=1}^{k_max} zeta^k/k! int Pf[K(z_i, z_j)] on iR.

    Each term is extrapolated over node doubling. ``info`` carries the
    individual terms and the Hadamard tail bound.
    """
    cfg = cfg or QuadConfig(line_levels=5)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    if k_max == 0 or zeta == 0:
        return ContourValue(1.0 + 0j, 0.0, 0, "pfaffian-series", {"terms": [1.0], "tail_bound": 0.0})
    levels = [series_coefficients(kernel, _half_contour(kernel, cfg.line_base * 2**j, cfg), k_max)
              for j in range(cfg.line_levels)]
    coeffs, errs = _richardson(levels)
    coeffs, errs = coeffs[1:], errs[1:]
    terms = [1.0 + 0j] + [zeta**k * c for k, c in enumerate(coeffs, start=1)]
    top = _half_contour(kernel, cfg.line_base * 2 ** (cfg.line_levels - 1), cfg)
    tail = hadamard_tail_bound(kernel, top, zeta, k_max)
    err = sum(abs(zeta) ** k * e for k, e in enumerate(errs, start=1))
    return ContourValue(value=complex(sum(terms)), error=float(err), nodes=top.nodes.size,
                        method="pfaffian-series",
                        info={"terms": [complex(v) for v in terms], "tail_bound": tail, "k_max": k_max})


def fredholm_pfaffian_discretized(
    kernel: PfaffianKernel,
    zeta: complex,
    node_count: Optional[int] = None,
    cfg: Optional[QuadConfig] = None,
    tol: float = 1e-5,
) -> ContourValue:
    """Pf(J + zeta K) on iR from the 2N x 2N weighted matrix.

    With ``node_count`` a single discretization is returned. Otherwise N runs
    over line_base 2^j and the values are Richardson-extrapolated; a final
    correction above ``tol`` counts as non-convergence.
    """
    cfg = cfg or QuadConfig(line_levels=5)
    if zeta == 0:
        return ContourValue(1.0 + 0j, 0.0, 0, "pfaffian-discretized", {})

    def evaluate(n):
        c = _half_contour(kernel, n, cfg)
        A = zeta * kernel.weighted_matrix(c)
        A[0::2, 1::2][np.diag_indices(n)] += 1.0
        A[1::2, 0::2][np.diag_indices(n)] -= 1.0
        return pfaffian(A)

    if node_count is not None:
        v = evaluate(int(node_count))
        return ContourValue(v, float("nan"), int(node_count), "pfaffian-discretized", {})
    r = _romberg(evaluate, cfg.line_base, cfg.line_levels, "pfaffian-discretized", {"zeta": complex(zeta)})
    if r.error > tol:
        raise ArithmeticError(f"no convergence across refinement (correction {r.error:.2e})")
    return r


def fredholm_determinant(
    kernel: ScalarKernel,
    zeta: complex,
    node_count: Optional[int] = None,
    shift: Optional[float] = None,
    cfg: Optional[QuadConfig] = None,
    tol: float = 1e-5,
) -> ContourValue:
    """det(I + zeta L) on the line shift + iR by Nystrom discretization."""
    cfg = cfg or QuadConfig(line_levels=5)
    shift = kernel.default_shift() if shift is None else shift
    kernel.check_contour(shift)
    if zeta == 0:
        return ContourValue(1.0 + 0j, 0.0, 0, "fredholm-determinant", {})
    scale = cfg.scale or _line_scale(kernel.t, abs(kernel.x))

    def evaluate(n):
        c = line_nodes(n, scale, shift)
        M = zeta * kernel.weighted_matrix(c)
        M[np.diag_indices(n)] += 1.0
        return complex(np.linalg.det(M))

    if node_count is not None:
        v = evaluate(int(node_count))
        return ContourValue(v, float("nan"), int(node_count), "fredholm-determinant", {})
    r = _romberg(evaluate, cfg.line_base, cfg.line_levels, "fredholm-determinant", {"zeta": complex(zeta)})
    if r.error > tol:
        raise ArithmeticError(f"no convergence across refinement (correction {r.error:.2e})")
    return r


# ---------------------------------------------------------------------------
# Large-t limits
# ---------------------------------------------------------------------------


def halfspace_limit_value(mu: float, zeta_tilde: complex, lattice_factor: float = 2.0) -> complex:
    """Limit of E[F_{mu+eta}(-2 zeta~ sqrt(2t) P_{0,2t}(1,1))] as t grows.

    ``lattice_factor`` = 1 is the value obtained when the walk is treated as
    if it could sit at every site; the parity of the lattice doubles the local
    density and gives 2.
    """
    return complex(np.exp(-lattice_factor * (zeta_tilde / mu) * 2 / math.sqrt(2 * math.pi)))


def fullspace_limit_value(params: FullParams, x_tilde: float, zeta_tilde: complex,
                          lattice_factor: float = 2.0) -> complex:
    """Limit of E[F_{alpha+beta}(zeta~ sqrt(t) P^Z_{0,t}(x~ sqrt(t), 0))]."""
    sigma = math.sqrt(params.sigma2)
    g = math.exp(-x_tilde**2 / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
    return complex(np.exp(lattice_factor * zeta_tilde * g / float(params.nu)))


def envelope_check(kernel: PfaffianKernel, contour: ContourSpec) -> float:
    """Smallest C with |K11(z, w)| <= C/|z^2 - mu^2| on the sampled node pairs.

    A value that stays put as the contour is extended indicates the bound holds.
    """
    z = contour.nodes[:, None]
    w = contour.nodes[None, :]
    val = np.abs(kernel.K11(z, w)) * np.abs(z * z - kernel.mu**2)
    return float(val.max())
