"""Numerical evaluation of the contour-integral moment formulas.

All k-fold integrals have the form

    sum over nodes of  prod_i S(z_i)  prod_{a<b} C(z_a, z_b),

so a product quadrature reduces to a tensor contraction of per-node vectors
and pairwise tables, evaluated with ``numpy.einsum``.

Half-space moments use the single-variable factor

    g(z) = z^{t+1} (z-mu)^{(x-t-3)/2} (z+mu)^{-(x+t+1)/2} / (z+eta),

which is the product of the fractional powers in the moment formula combined
into integer exponents (t + x odd). It decays like z^{-2}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special

from betarwre.core_model import FullParams, ModelParams
from betarwre.specfun import pochhammer, polygamma

__all__ = [
    "QuadConfig",
    "ContourSpec",
    "ContourValue",
    "ScalingConstants",
    "line_nodes",
    "circle_nodes",
    "wedge_nodes",
    "half_factor",
    "full_factor",
    "moment_integral_line",
    "moment_integral_nested",
    "nested_geometry",
    "check_nested_geometry",
    "moment_integral_fullspace",
    "moment_integral_fullspace_line",
    "averaging_property_check",
    "boundary_property_integral",
    "pk_numeric",
    "pk_terms",
    "mellin_barnes_transform",
    "mellin_barnes_discrete",
    "generating_series",
    "scaling_constants",
    "G_function",
]


@dataclass
class QuadConfig:
    """Quadrature settings; ``scale`` and ``left_edge`` override contour geometry."""

    rel_tol: float = 1e-10
    scale: Optional[float] = None
    left_edge: Optional[float] = None
    wedge_radius: Optional[float] = None
    circle_radius: float = 0.2
    line_base: int = 24
    line_levels: int = 6

    @classmethod
    def from_json(cls, text: Union[str, dict]) -> "QuadConfig":
        data = json.loads(text) if isinstance(text, str) else dict(text)
        overrides = data.pop("contour overrides", None) or data.pop("contour_overrides", None) or {}
        data.update(overrides)
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ValueError(f"unknown quadrature keys: {sorted(bad)}")
        return cls(**data)


@dataclass
class ContourSpec:
    """A contour with quadrature nodes z and weights w approximating dz / (2 pi i)."""

    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    center: Optional[float] = None
    radius: Optional[float] = None
    apex: Optional[float] = None
    angle: Optional[float] = None
    truncation: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("line", "circle", "wedge"):
            raise ValueError("unknown contour kind")
        if self.kind == "circle" and not self.radius > 0:
            raise ValueError("circle radius must be positive")
        if self.kind == "wedge" and not 0 < self.angle < math.pi:
            raise ValueError("wedge angle must lie in (0, pi)")


@dataclass
class ContourValue:
    value: complex
    error: float
    nodes: int
    method: str
    info: dict = field(default_factory=dict)

    @property
    def real(self) -> float:
        return float(np.real(self.value))

    @property
    def imag(self) -> float:
        return float(np.imag(self.value))

    def to_record(self) -> dict:
        return {
            "method": self.method, "value": self.real, "imag": self.imag,
            "error": float(self.error), "nodes": self.nodes, **self.info,
        }


# ---------------------------------------------------------------------------
# Nodes
# ---------------------------------------------------------------------------


def line_nodes(n: int, scale: float, shift: float = 0.0) -> ContourSpec:
    """shift + i R, upward, via z = shift + i scale tan(u) and the midpoint rule in u."""
    u = -math.pi / 2 + (np.arange(n) + 0.5) * math.pi / n
    z = shift + 1j * scale * np.tan(u)
    w = scale / np.cos(u) ** 2 / (2 * n)
    return ContourSpec("line", z, w.astype(complex))


def circle_nodes(center: complex, radius: float, n: int) -> ContourSpec:
    """Positively oriented circle with the trapezoidal rule."""
    th = 2 * math.pi * np.arange(n) / n
    e = np.exp(1j * th)
    return ContourSpec("circle", center + radius * e, radius * e / n, center=center, radius=radius)


def _default_wedge_radius(angle: float, target: float = 1e-12) -> float:
    # first r with exp(-r log r cos(angle) + r) below target
    r = 2.0
    while -r * math.log(r) * math.cos(angle) + r > math.log(target):
        r += 0.5
    return r


def wedge_nodes(apex: float, angle: float, radius: Optional[float] = None, order: int = 16) -> ContourSpec:
    """Two rays apex + r e^{+-i angle}, r in [0, R], oriented bottom to top.

    Composite Gauss-Legendre on geometrically growing panels.
    """
    R = radius if radius is not None else _default_wedge_radius(angle)
    edges = [0.0, 0.25]
    while edges[-1] < R:
        edges.append(min(R, edges[-1] * 2 + 0.25))
    x, wx = np.polynomial.legendre.leggauss(order)
    rs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        rs.append((b - a) / 2 * x + (a + b) / 2)
        ws.append((b - a) / 2 * wx)
    r = np.concatenate(rs)
    wr = np.concatenate(ws)
    up = np.exp(1j * angle)
    dn = np.exp(-1j * angle)
    z = np.concatenate([apex + r * dn, apex + r * up])
    w = np.concatenate([-dn * wr, up * wr]) / (2j * math.pi)
    return ContourSpec("wedge", z, w, apex=apex, angle=angle, truncation=R)


# ---------------------------------------------------------------------------
# Integrands
# ---------------------------------------------------------------------------


def _half_exponents(t: int, x: int) -> tuple[int, int]:
    if (t + x) % 2 != 1:
        raise ValueError("parity violation: t + x must be odd")
    return (x - t - 3) // 2, -(x + t + 1) // 2


def half_factor(z, mu: float, eta: float, t: int, x: int):
    """g(z) = (z^2/(z^2-mu^2))^{t/2+1} ((z-mu)/(z+mu))^{(x-1)/2} / (z (z+eta))."""
    a, b = _half_exponents(t, x)
    z = np.asarray(z, dtype=complex)
    return z ** (t + 1) * (z - mu) ** a * (z + mu) ** b / (z + eta)


def full_factor(z, alpha: float, beta: float, t: int, x: int):
    """f(z) = ((alpha+z)^2/(z(z+alpha+beta)))^{t/2} ((z+alpha+beta)/z)^{x/2+1} / (z+alpha+beta)^2."""
    if (t + x) % 2 != 0:
        raise ValueError("parity violation: t + x must be even")
    s = alpha + beta
    z = np.asarray(z, dtype=complex)
    return (alpha + z) ** t * z ** (-(t + x) // 2 - 1) * (z + s) ** ((x - t) // 2 - 1)


def _half_cross(za, zb):
    d = za - zb
    s = za + zb
    return d / (d - 1) * s / (s + 1)


def _full_cross(za, zb):
    d = za - zb
    return d / (d - 1)


def _contract(singles: Sequence[np.ndarray], pairs: dict) -> complex:
    """sum_{i_1..i_k} prod_d singles[d][i_d] prod_{a<b} pairs[(a,b)][i_a, i_b], k <= 4."""
    k = len(singles)
    if k == 1:
        return complex(singles[0].sum())
    if k == 2:
        return complex(singles[0] @ pairs[(0, 1)] @ singles[1])
    if k == 3:
        U = pairs[(0, 1)] * singles[1][None, :]
        V = pairs[(0, 2)] * singles[2][None, :]
        return complex(singles[0] @ np.sum((U @ pairs[(1, 2)]) * V, axis=1))
    if k == 4:
        rest = {(a - 1, b - 1): tab for (a, b), tab in pairs.items() if a > 0}
        tot = 0j
        for i, s0 in enumerate(singles[0]):
            sub = [singles[d] * pairs[(0, d)][i] for d in (1, 2, 3)]
            tot += s0 * _contract(sub, rest)
        return tot
    raise ValueError("contraction implemented for k <= 4")


def _k_fold(contours, factors, cross) -> complex:
    singles = [c.weights * f for c, f in zip(contours, factors)]
    pairs = {}
    k = len(contours)
    for a, b in combinations(range(k), 2):
        pairs[(a, b)] = cross(contours[a].nodes[:, None], contours[b].nodes[None, :])
    return _contract(singles, pairs)


def _romberg(evaluate, n0: int, levels: int, method: str, info: dict) -> ContourValue:
    """Midpoint values at n0 2^j extrapolated in powers n^{-1/2-j}.

    Pairwise cross factors have poles at unit distance from the line; after the
    tan map these pinch the corners of the square of integration, and the
    product midpoint rule then has an asymptotic error expansion in half-integer
    powers of 1/n instead of converging geometrically.
    """
    vals = [evaluate(n0 * 2**j) for j in range(levels)]
    if info.get("k") == 1:
        # a single variable has no cross factors and the midpoint rule is spectral
        return ContourValue(value=complex(vals[-1]), error=float(abs(vals[-1] - vals[-2])),
                            nodes=n0 * 2 ** (levels - 1), method=method, info=info)
    table = [vals]
    for j in range(1, levels):
        f = 2 ** (j + 0.5)
        prev = table[-1]
        table.append([(f * prev[i + 1] - prev[i]) / (f - 1) for i in range(len(prev) - 1)])
    best = table[-1][0]
    err = abs(best - table[-2][-1]) if levels > 1 else float("inf")
    return ContourValue(value=complex(best), error=float(err), nodes=n0 * 2 ** (levels - 1), method=method,
                        info={**info, "raw": complex(vals[-1])})


def _check_half_args(k, t, x):
    x = tuple(int(v) for v in x)
    if len(x) != k or k < 1:
        raise ValueError("x must have k >= 1 entries")
    if t <= 0:
        raise ValueError("t must be positive")
    if any(v < 1 for v in x):
        raise ValueError("x_i must be >= 1")
    for v in x:
        _half_exponents(t, v)
    return tuple(sorted(x))


# ---------------------------------------------------------------------------
# Half-space moment formula
# ---------------------------------------------------------------------------


def _line_scale(t: int, xmax: int) -> float:
    # the integrand spreads over |z| ~ sqrt(t + x); this keeps the tan map balanced
    return max(1.5, 0.75 * math.sqrt(t + xmax))


def moment_integral_line(
    params: ModelParams, k: int, t: int, x: Sequence[int], cfg: Optional[QuadConfig] = None
) -> ContourValue:
    """E[prod_i P_{0,t}(x_i, 1)] from the vertical-line moment formula (k <= 3)."""
    cfg = cfg or QuadConfig()
    if k > 3:
        raise ValueError("the line method is limited to k <= 3")
    x = _check_half_args(k, t, x)
    mu, eta = params.as_float()
    scale = cfg.scale or _line_scale(t, max(x))
    pref = (-2) ** k * pochhammer(mu + eta, k)

    def evaluate(n):
        c = line_nodes(n, scale)
        facs = [half_factor(c.nodes, mu, eta, t, xi) for xi in x]
        return pref * _k_fold([c] * k, facs, _half_cross)

    return _romberg(evaluate, cfg.line_base, cfg.line_levels, "line", {"k": k, "t": t, "x": list(x)})


def _best_left_edge(gaps, lo: float, hi: float) -> float:
    grid = np.linspace(lo, hi, 2001)[1:-1]
    return float(grid[np.argmax(np.min([g(grid) for g in gaps], axis=0))])


def nested_geometry(params: ModelParams, k: int, left_edge: Optional[float] = None) -> list[tuple[float, float]]:
    """(center, radius) of nested circles sharing the left edge L.

    The innermost circle is centered at mu; each outer circle is one unit
    larger, so gamma_{a+1} + 1 is concentric with gamma_a at distance 1. L
    maximizes the distance to mu, -mu, -eta and the reflected circles -1 - gamma_b.
    """
    mu, eta = params.as_float()
    lo = -min(mu, eta, 0.5)
    if left_edge is None:
        L = _best_left_edge([lambda v: mu - v, lambda v: 2 * v + 1, lambda v: v + eta, lambda v: v + mu], lo, mu)
    else:
        L = left_edge
    if not lo < L < mu:
        raise ValueError(f"left edge must lie in ({lo}, {mu})")
    radii = [mu - L + (k - 1 - j) for j in range(k)]
    return [(L + r, r) for r in radii]


def _node_counts(circles, inside, outside, reflect: bool, tol: float = 1e-14, floor: int = 16,
                 order: int = 1) -> list[int]:
    """Trapezoid node counts from the annulus of analyticity around each circle.

    On a circle of radius r the rule converges like N^{order-1} rho^N with
    rho = max(r_in / r, r / r_out), where r_in and r_out bound the singularities
    seen by that variable when the others run over their own circles, and
    ``order`` is the highest pole order.
    """
    out = []
    for a, (ca, ra) in enumerate(circles):
        r_in = max(abs(p - ca) for p in inside)
        r_out = min(abs(p - ca) for p in outside)
        for b, (cb, rb) in enumerate(circles):
            if b > a:
                r_in = max(r_in, abs(cb + 1 - ca) + rb)
            if b < a:
                r_out = min(r_out, rb - abs(cb - 1 - ca))
            if reflect and b != a:
                r_out = min(r_out, abs(-1 - cb - ca) - rb)
        rho = max(r_in / ra, ra / r_out)
        if not rho < 1:
            raise ValueError(f"circle {a} touches a singularity")
        n = math.log(tol) / math.log(rho)
        for _ in range(20):
            n = (math.log(tol) - (order - 1) * math.log(max(n, 2.0))) / math.log(rho)
        out.append(max(floor, int(math.ceil(n))))
    return out


def _fixed_counts(evaluate, counts, method, info) -> ContourValue:
    fine = evaluate(counts)
    coarse = evaluate([max(8, int(0.8 * n)) for n in counts])
    return ContourValue(value=complex(fine), error=float(abs(fine - coarse)), nodes=max(counts),
                        method=method, info={**info, "nodes_per_circle": list(counts)})


def _inside(p, center, radius):
    return np.abs(np.asarray(p) - center) < radius


def check_nested_geometry(params: ModelParams, circles: Sequence[tuple[float, float]], n: int = 256) -> float:
    """Verify the nesting conditions; returns the minimal pole clearance.

    Raises ValueError on invalid nesting or a circle crossing a pole.
    """
    mu, eta = params.as_float()
    k = len(circles)
    nodes = [circle_nodes(c, r, n).nodes for c, r in circles]
    clear = float("inf")
    for a, (ca, ra) in enumerate(circles):
        if not _inside(mu, ca, ra):
            raise ValueError(f"circle {a} does not enclose mu")
        for p in (-mu, -eta):
            if _inside(p, ca, ra):
                raise ValueError(f"circle {a} encloses the pole {p}")
            clear = min(clear, abs(abs(p - ca) - ra))
        clear = min(clear, abs(ra - abs(mu - ca)))
        for b in range(k):
            if b == a:
                continue
            shifted_neg = -1 - nodes[b]
            if np.any(_inside(shifted_neg, ca, ra)):
                raise ValueError(f"circle {a} encloses -1 - gamma_{b}")
            clear = min(clear, float(np.min(np.abs(np.abs(shifted_neg - ca) - ra))))
            if b > a:
                shifted = nodes[b] + 1
                if not np.all(_inside(shifted, ca, ra)):
                    raise ValueError(f"circle {a} does not enclose gamma_{b} + 1")
                clear = min(clear, float(np.min(ra - np.abs(shifted - ca))))
    return clear


def moment_integral_nested(
    params: ModelParams,
    k: int,
    t: int,
    x: Sequence[int],
    radii: Optional[Sequence[float]] = None,
    cfg: Optional[QuadConfig] = None,
    centers: Optional[Sequence[float]] = None,
) -> ContourValue:
    """E[prod_i P_{0,t}(x_i, 1)] from the nested-circle formula (k <= 4).

    Without ``radii`` the shared-left-edge geometry of ``nested_geometry`` is
    used; with ``radii`` the circles are centered at mu (or at ``centers``).
    """
    cfg = cfg or QuadConfig()
    if k > 4:
        raise ValueError("the nested method is limited to k <= 4")
    x = _check_half_args(k, t, x)
    mu, eta = params.as_float()
    if radii is None:
        circles = nested_geometry(params, k, cfg.left_edge)
    else:
        if len(radii) != k:
            raise ValueError("need one radius per variable")
        cs = centers if centers is not None else [mu] * k
        circles = list(zip(cs, radii))
    clearance = check_nested_geometry(params, circles)
    order = max(max(-e for e in _half_exponents(t, xi)) for xi in x)
    counts = _node_counts(circles, [mu], [-mu, -eta], reflect=True, tol=cfg.rel_tol * 1e-4, order=order)
    pref = 2**k * pochhammer(mu + eta, k)

    def evaluate(ns):
        cons = [circle_nodes(c, r, n) for (c, r), n in zip(circles, ns)]
        facs = [half_factor(c.nodes, mu, eta, t, xi) for c, xi in zip(cons, x)]
        return pref * _k_fold(cons, facs, _half_cross)

    return _fixed_counts(evaluate, counts, "nested", {"k": k, "t": t, "x": list(x), "clearance": clearance})


# ---------------------------------------------------------------------------
# Full-space moment formula
# ---------------------------------------------------------------------------


def _full_geometry(params: FullParams, k: int, left_edge: Optional[float]) -> list[tuple[float, float]]:
    """Innermost circle centered at 0, outer circles one unit larger, shared left edge."""
    s = float(params.alpha + params.beta)
    L = -s / 2 if left_edge is None else left_edge
    if not -s < L < 0:
        raise ValueError(f"left edge must lie in ({-s}, 0)")
    radii = [-L + (k - 1 - j) for j in range(k)]
    return [(L + r, r) for r in radii]


def moment_integral_fullspace(
    params: FullParams,
    k: int,
    t: int,
    x: Sequence[int],
    radii: Optional[Sequence[float]] = None,
    cfg: Optional[QuadConfig] = None,
) -> ContourValue:
    """E[prod_i P^Z_{0,t}(x_i, 0)] from the nested full-space formula (x sorted decreasingly)."""
    cfg = cfg or QuadConfig()
    x = tuple(sorted((int(v) for v in x), reverse=True))
    if len(x) != k or not 1 <= k <= 4:
        raise ValueError("need 1 <= k <= 4 and k positions")
    a, b = params.as_float()
    s = a + b
    if radii is None:
        circles = _full_geometry(params, k, cfg.left_edge)
    else:
        circles = [(r - s / 2, r) for r in radii]
    for i, (c, r) in enumerate(circles):
        if abs(c) >= r:
            raise ValueError(f"circle {i} does not contain 0")
        if abs(-s - c) <= r:
            raise ValueError(f"circle {i} contains -alpha-beta")
    order = max(max((t + xi) // 2 + 1, (t - xi) // 2 + 1) for xi in x)
    counts = _node_counts(circles, [0.0], [-s], reflect=False, tol=cfg.rel_tol * 1e-4, order=order)
    pref = pochhammer(s, k)

    def evaluate(ns):
        cons = [circle_nodes(c, r, n) for (c, r), n in zip(circles, ns)]
        facs = [full_factor(c.nodes, a, b, t, xi) for c, xi in zip(cons, x)]
        return pref * _k_fold(cons, facs, _full_cross)

    return _fixed_counts(evaluate, counts, "fullspace-nested", {"k": k, "t": t, "x": list(x)})


def moment_integral_fullspace_line(
    params: FullParams, k: int, t: int, x: int, cfg: Optional[QuadConfig] = None
) -> ContourValue:
    """E[P^Z_{0,t}(x, 0)^k] from the determinantal form on a vertical line."""
    cfg = cfg or QuadConfig()
    if not 1 <= k <= 3:
        raise ValueError("k must be in 1..3")
    a, b = params.as_float()
    s = a + b
    shift = cfg.left_edge if cfg.left_edge is not None else -a if a < s else -s / 2
    if not -s < shift < 0:
        raise ValueError("line must satisfy -alpha-beta < Re z < 0")
    scale = cfg.scale or _line_scale(t, abs(x))

    def evaluate(n):
        c = line_nodes(n, scale, shift)
        f = c.weights * full_factor(c.nodes, a, b, t, x)
        A = f[:, None] / (c.nodes[:, None] - c.nodes[None, :] - 1)
        # det over permutations; diagonal entries are -1, cycles give traces of powers of A
        S1 = f.sum()
        if k == 1:
            tot = -S1
        elif k == 2:
            tot = S1**2 - np.trace(A @ A)
        else:
            A2 = A @ A
            tot = -(S1**3) + 3 * S1 * np.trace(A2) + 2 * np.trace(A2 @ A)
        return pochhammer(s, k) * complex(tot)

    return _romberg(evaluate, cfg.line_base, cfg.line_levels, "fullspace-line", {"k": k, "t": t, "x": x})


# ---------------------------------------------------------------------------
# Structural property checks
# ---------------------------------------------------------------------------


def averaging_property_check(
    params: ModelParams, k: int, t: int, x: Sequence[int], i: int, cfg: Optional[QuadConfig] = None
) -> tuple[complex, complex]:
    """Integral with and without the averaged shift factor ((z-mu)/z + (z+mu)/z)/2 on variable i.

    The factor equals 1 identically, so both numbers agree up to rounding.
    """
    cfg = cfg or QuadConfig()
    x = _check_half_args(k, t, x)
    if x[i] < 2:
        raise ValueError("the averaging property applies to x_i >= 2")
    mu, eta = params.as_float()
    pref = (-2) ** k * pochhammer(mu + eta, k)
    scale = cfg.scale or _line_scale(t, max(x))

    def run(avg):
        def evaluate(n):
            c = line_nodes(n, scale)
            facs = [half_factor(c.nodes, mu, eta, t, xi) for xi in x]
            if avg:
                z = c.nodes
                facs[i] = facs[i] * ((z - mu) / z + (z + mu) / z) / 2
            return pref * _k_fold([c] * k, facs, _half_cross)
        return _romberg(evaluate, cfg.line_base, cfg.line_levels, "line", {}).value

    return run(False), run(True)


def pk_terms(k: int, mu: float, eta: float) -> list:
    """P_k as a list of (coefficient, [per-variable polynomial callables])."""
    terms = [(1.0, [lambda z: z**2] * k)]
    den = pochhammer(eta + mu, k)
    for i in range(k + 1):
        coef = math.comb(k, i) * pochhammer(mu, i) * pochhammer(eta, k - i) / den
        fs = [(lambda z: (z - mu) * (z + mu)) for _ in range(k - i)] + [(lambda z: (z - mu) * z) for _ in range(i)]
        terms.append((-coef, fs))
    return terms


def pk_numeric(zs: Sequence[np.ndarray], mu: float, eta: float) -> np.ndarray:
    """P_k evaluated on broadcastable arrays z_1..z_k."""
    out = 0
    for coef, fs in pk_terms(len(zs), mu, eta):
        term = coef
        for f, z in zip(fs, zs):
            term = term * f(z)
        out = out + term
    return out


def boundary_property_integral(params: ModelParams, r: int, t: int, cfg: Optional[QuadConfig] = None) -> ContourValue:
    """The r-fold line integral with the P_r insertion, which vanishes identically (r <= 3)."""
    cfg = cfg or QuadConfig()
    if not 1 <= r <= 3:
        raise ValueError("r must be in 1..3")
    if t % 2:
        raise ValueError("t must be even (x_i = 1 with t + x_i odd)")
    mu, eta = params.as_float()
    scale = cfg.scale or _line_scale(t, 1)
    pref = (-2) ** r * pochhammer(mu + eta, r)
    terms = pk_terms(r, mu, eta)

    def evaluate(n):
        c = line_nodes(n, scale)
        z = c.nodes
        base = z ** (t - 1) * (z - mu) ** (-t // 2 - 1) * (z + mu) ** (-t // 2 - 1) / (z + eta)
        tot = 0j
        for coef, fs in terms:
            tot += coef * _k_fold([c] * r, [base * f(z) for f in fs], _half_cross)
        return pref * tot

    return _romberg(evaluate, cfg.line_base, cfg.line_levels, "line", {"r": r, "t": t})


# ---------------------------------------------------------------------------
# Mellin-Barnes formula
# ---------------------------------------------------------------------------


def _lg(z):
    return special.loggamma(z)


def _mb_z_log(z, mu, eta, t, x):
    a, b = (x - t - 3) // 2, -(x + t + 1) // 2
    return -_lg(z + eta) + a * _lg(z - mu) + b * _lg(z + mu) + t * _lg(z)


def _mb_w_log(w, mu, eta, t, x):
    return (
        _lg(w + eta) + ((t - x + 3) // 2) * _lg(w - mu) + ((x + t + 1) // 2) * _lg(w + mu)
        - t * _lg(w) - _lg(2 * w)
    )


def generating_series(moments: Sequence[float], nu: float, zeta: complex) -> complex:
    """1 + sum_k (-zeta)^k m_k / (k! (nu)_k) for moments m_1, m_2, ..."""
    out = 1.0 + 0j
    for k, m in enumerate(moments, start=1):
        out += (-zeta) ** k * m / (math.factorial(k) * pochhammer(nu, k))
    return out


@dataclass
class MBResult:
    value: complex
    terms: list
    truncation: float
    method: str

    def to_record(self) -> dict:
        return {
            "method": self.method, "value": [float(np.real(self.value)), float(np.imag(self.value))],
            "terms": [[float(np.real(v)), float(np.imag(v))] for v in self.terms],
            "truncation": self.truncation,
        }


def _check_zeta(zeta: complex):
    z = complex(zeta)
    if z.imag == 0 and z.real < 0:
        raise ValueError("zeta lies on the cut (-inf, 0)")
    return z


def mellin_barnes_transform(
    params: ModelParams,
    x: int,
    t: int,
    zeta: complex,
    ell_max: int = 2,
    cfg: Optional[QuadConfig] = None,
    wedge_order: int = 12,
    circle_n: int = 24,
) -> MBResult:
    """E[F_{mu+eta}(-zeta P_{0,t}(x,1))] truncated after the ell_max-th term (ell_max <= 2)."""
    cfg = cfg or QuadConfig()
    zeta = _check_zeta(zeta)
    if (x + t) % 2 != 1 or x < 1 or t < 1:
        raise ValueError("need positive x, t with x + t odd")
    if ell_max not in (1, 2):
        raise ValueError("the integral form supports ell_max in {1, 2}; use mellin_barnes_discrete for 3")
    if zeta == 0:
        return MBResult(1.0 + 0j, [0j] * ell_max, 0.0, "mellin-barnes")
    if not cfg.circle_radius < 0.25:
        raise ValueError("w circle radius must be below 1/4")
    mu, eta = params.as_float()
    lz = np.log(zeta)
    zc = wedge_nodes(mu + 0.5, math.pi / 3, cfg.wedge_radius, wedge_order)
    wc = circle_nodes(mu, cfg.circle_radius, circle_n)
    z, w = zc.nodes, wc.nodes
    Sz = zc.weights * np.exp(_mb_z_log(z, mu, eta, t, x) + z * lz)
    Sw = wc.weights * np.exp(_mb_w_log(w, mu, eta, t, x) - w * lz)
    ZW = z[:, None] + w[None, :]
    Gzw = np.exp(_lg(ZW))
    diag = Gzw * math.pi / np.sin(math.pi * (w[None, :] - z[:, None])) / (z[:, None] - w[None, :])
    A = Sz[:, None] * Sw[None, :] * diag
    term1 = complex(A.sum())
    terms = [term1]
    if ell_max >= 2:
        # cross term and determinant for ell = 2
        Ginv_ww = np.exp(-_lg(w[:, None] + w[None, :]))
        Ginv_zz = np.exp(-_lg(z[:, None] + z[None, :]))
        B = Sz[:, None] * Sw[None, :] * Gzw * math.pi / np.sin(math.pi * (w[None, :] - z[:, None]))
        K = 1.0 / (z[:, None] - w[None, :])
        # sum over z1,w1,z2,w2 of B11 B22 G(z1+w2) G(w1+z2) / (G(w1+w2) G(z1+z2)) det[K]
        tot = 0j
        for i in range(len(z)):
            # indices: w1 = a, z2 = j, w2 = b
            b1 = B[i, :]  # (a)
            kz1 = K[i, :]  # K(z1, w)
            g1 = Gzw[i, :]  # G(z1 + w2) over b
            # M[a, j, b] = b1[a] B[j, b] G(z1+w_b) G(w_a+z_j) Ginv_zz[z1, z_j] Ginv_ww[w_a, w_b] det
            M = (
                b1[:, None, None] * B[None, :, :] * g1[None, None, :] * Gzw.T[:, :, None]
                * Ginv_zz[i][None, :, None] * Ginv_ww[:, None, :]
            )
            det = kz1[:, None, None] * K[None, :, :] - kz1[None, None, :] * K.T[:, :, None]
            tot += complex((M * det).sum())
        terms.append(tot / 2)
    value = 1.0 + sum(terms)
    return MBResult(value, terms, float(abs(terms[-1])), "mellin-barnes")


def mellin_barnes_discrete(
    params: ModelParams,
    x: int,
    t: int,
    zeta: complex,
    ell_max: int = 3,
    lambda_max: int = 24,
    circle_n: int = 24,
    radius: float = 0.2,
) -> MBResult:
    """Same series with the z integrals replaced by their residues z = w + lambda."""
    zeta = complex(zeta)
    if (x + t) % 2 != 1 or x < 1 or t < 1:
        raise ValueError("need positive x, t with x + t odd")
    if not 1 <= ell_max <= 3:
        raise ValueError("ell_max must be in 1..3")
    mu, eta = params.as_float()
    wc = circle_nodes(mu, radius, circle_n)
    w = wc.nodes
    lam = np.arange(1, lambda_max + 1)
    Z = w[:, None] + lam[None, :]
    logS = _mb_z_log(Z, mu, eta, t, x) + _mb_w_log(w, mu, eta, t, x)[:, None] + _lg(2 * w[:, None] + lam[None, :])
    sgn = (-zeta) ** lam
    S = wc.weights[:, None] * np.exp(logS) * sgn[None, :]  # (w, lambda)
    terms = []
    # ell = 1: det = 1 / lambda
    terms.append(complex((S / lam[None, :]).sum()))
    if ell_max >= 2:
        WW = w[:, None] + w[None, :]
        # cross factor for a pair (w_a, l_a), (w_b, l_b)
        lgWW = _lg(WW)
        tot = 0j
        for la in range(len(lam)):
            l1 = lam[la]
            for lb in range(len(lam)):
                l2 = lam[lb]
                cross = np.exp(_lg(WW + l1) + _lg(WW + l2) - lgWW - _lg(WW + l1 + l2))
                det = 1.0 / (l1 * l2) - 1.0 / ((w[:, None] + l1 - w[None, :]) * (w[None, :] + l2 - w[:, None]))
                tot += complex((S[:, la][:, None] * S[:, lb][None, :] * cross * det).sum())
        terms.append(tot / 2)
    if ell_max >= 3:
        terms.append(_mb_discrete_ell3(S, w, lam))
    value = 1.0 + sum(terms)
    return MBResult(value, terms, float(abs(terms[-1])), "mellin-barnes-discrete")


def _mb_discrete_ell3(S, w, lam, keep: int = 12) -> complex:
    """Third term of the discrete series, lambdas truncated at ``keep``."""
    L = min(keep, len(lam))
    WW = w[:, None] + w[None, :]
    lgWW = _lg(WW)
    tot = 0j
    idx = range(L)
    for a in idx:
        for b in idx:
            for c in idx:
                la, lb, lc = lam[a], lam[b], lam[c]
                lams = (la, lb, lc)
                cr = {}
                for (i, li), (j, lj) in combinations(enumerate(lams), 2):
                    cr[(i, j)] = np.exp(_lg(WW + li) + _lg(WW + lj) - lgWW - _lg(WW + li + lj))
                # det[1/(w_i + l_i - w_j)] for 3 x 3
                shape = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
                ws = [np.reshape(w, s) for s in shape]
                M = [[1.0 / (ws[i] + lams[i] - ws[j]) for j in range(3)] for i in range(3)]
                det = (
                    M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
                    - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
                    + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0])
                )
                val = (
                    np.reshape(S[:, a], shape[0]) * np.reshape(S[:, b], shape[1]) * np.reshape(S[:, c], shape[2])
                    * cr[(0, 1)][:, :, None] * cr[(0, 2)][:, None, :] * cr[(1, 2)][None, :, :] * det
                )
                tot += complex(val.sum())
    return tot / 6


# ---------------------------------------------------------------------------
# Scaling constants
# ---------------------------------------------------------------------------


@dataclass
class ScalingConstants:
    theta: float
    mu: float
    x_theta: float
    a_theta: float
    b_theta: float

    def to_record(self) -> dict:
        return asdict(self)


def G_function(z, mu: float, x_theta: float):
    """log(Gamma(z)^2 / (Gamma(z+mu) Gamma(z-mu))) + x_theta log(Gamma(z-mu) / Gamma(z+mu))."""
    lg = special.gammaln
    return 2 * lg(z) - lg(z + mu) - lg(z - mu) + x_theta * (lg(z - mu) - lg(z + mu))


def scaling_constants(mu: float, theta: float) -> ScalingConstants:
    """x_theta, a_theta = -G'(theta), b_theta = (G'''(theta)/2)^{1/3}."""
    if not theta > mu > 0:
        raise ValueError("need theta > mu > 0")
    p1 = lambda v: polygamma(1, v)
    xt = (2 * p1(theta) - p1(theta + mu) - p1(theta - mu)) / (p1(theta + mu) - p1(theta - mu))
    d1 = 2 * polygamma(0, theta) - polygamma(0, theta + mu) - polygamma(0, theta - mu) + xt * (
        polygamma(0, theta - mu) - polygamma(0, theta + mu)
    )
    d3 = 2 * polygamma(2, theta) - polygamma(2, theta + mu) - polygamma(2, theta - mu) + xt * (
        polygamma(2, theta - mu) - polygamma(2, theta + mu)
    )
    return ScalingConstants(theta=theta, mu=mu, x_theta=xt, a_theta=-d1, b_theta=float(np.cbrt(d3 / 2)))
