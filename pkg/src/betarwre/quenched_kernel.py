"""Quenched heat kernels by backward dynamic programming.

Every observable fixes the endpoint (t, y), so the kernel is propagated
backwards: v_t = 1[x = y] and

    v_s(x) = W_{s,x} v_{s+1}(x+1) + (1 - W_{s,x}) v_{s+1}(x-1),   x >= 1
    v_s(0) = v_{s+1}(1)                                           (half-space)

which yields x -> P_{s,t}(x, y) for every start x in one sweep. The sweep is
restricted to the intersection of the backward light cone of (t, y) with the
forward cone of the requested start positions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit, prange

from betarwre.core_model import (
    Environment,
    FullParams,
    ModelParams,
    _beta_at,
    _half_weight,
    _key,
)

__all__ = [
    "KernelSlice",
    "ZSample",
    "backward_kernel",
    "z_functional",
    "coalescence_gap",
    "kernel_batch",
    "z_batch",
    "forward_mass",
    "geometric_ladder",
    "write_slice_csv",
]

_EMPTY_GRID = np.zeros((0, 0), dtype=np.float64)
_NO_LADDER = np.zeros(0, dtype=np.int64)


@njit(cache=True, inline="always")
def _w(half, p1, p2, k0, k1, replica, grid, t_min, x_min, t, x):
    if grid.shape[0] > 0:
        return grid[t - t_min, x - x_min]
    if half:
        return _half_weight(p1, p2, k0, k1, t, x, replica)
    return _beta_at(p1, p2, k0, k1, t, x, replica)


@njit(cache=True)
def _sweep(half, p1, p2, k0, k1, replica, grid, t_min, x_min, T, y, s0, xlo, xhi, ladder):
    """Backward sweep from (T, y) to time s0; returns v_{s0}(xlo..xhi) and ladder sums.

    ``ladder`` lists depths L (sorted ascending); entry i of the second output is
    the compensated sum over x of v_{T-L_i}(x).
    """
    depth = T - s0
    base = -3 if half else y - depth - 3
    size = y + depth + 3 - base + 1
    nxt = np.zeros(size, dtype=np.float64)
    cur = np.zeros(size, dtype=np.float64)
    nxt[y - base] = 1.0
    sums = np.zeros(ladder.shape[0], dtype=np.float64)
    li = 0
    while li < ladder.shape[0] and ladder[li] == 0:
        sums[li] = 1.0
        li += 1
    for s in range(T - 1, s0 - 1, -1):
        back = T - s
        fwd = s - s0
        lo = max(y - back, xlo - fwd)
        hi = min(y + back, xhi + fwd)
        if half and lo < 0:
            lo = 0
        if (lo + s + y + T) % 2 != 0:
            lo += 1
        a = max(lo - 2 - base, 0)
        b = min(hi + 2 - base, size - 1)
        for i in range(a, b + 1):
            cur[i] = 0.0
        for x in range(lo, hi + 1, 2):
            i = x - base
            if half and x == 0:
                cur[i] = nxt[i + 1]
            else:
                w = _w(half, p1, p2, k0, k1, replica, grid, t_min, x_min, s, x)
                cur[i] = w * nxt[i + 1] + (1.0 - w) * nxt[i - 1]
        while li < ladder.shape[0] and ladder[li] == back:
            acc = 0.0
            comp = 0.0
            for x in range(lo, hi + 1, 2):
                yk = cur[x - base] - comp
                tk = acc + yk
                comp = (tk - acc) - yk
                acc = tk
            sums[li] = acc
            li += 1
        tmp = nxt
        nxt = cur
        cur = tmp
    out = np.zeros(xhi - xlo + 1, dtype=np.float64)
    for x in range(xlo, xhi + 1):
        i = x - base
        if 0 <= i < size:
            out[x - xlo] = nxt[i]
    return out, sums


@njit(cache=True, parallel=True)
def _batch(half, p1, p2, k0, k1, first, count, T, y, s0, xlo, xhi, ladder):
    vals = np.empty((count, xhi - xlo + 1), dtype=np.float64)
    sums = np.empty((count, ladder.shape[0]), dtype=np.float64)
    for r in prange(count):
        v, sm = _sweep(
            half, p1, p2, k0, k1, first + r, _EMPTY_GRID, 0, 0, T, y, s0, xlo, xhi, ladder
        )
        vals[r, :] = v
        sums[r, :] = sm
    return vals, sums


@njit(cache=True)
def _forward(half, p1, p2, k0, k1, replica, grid, t_min, x_min, s, t, x0):
    """Forward propagation of a unit mass from (s, x0); returns the total at time t."""
    n = t - s
    base = -2 if half else x0 - n - 2
    size = x0 + n + 2 - base + 1
    m = np.zeros(size, dtype=np.float64)
    m2 = np.zeros(size, dtype=np.float64)
    m[x0 - base] = 1.0
    for u in range(s, t):
        lo = x0 - (u - s)
        if half and lo < 0:
            lo = (u - s + x0) % 2
        hi = x0 + (u - s)
        for i in range(size):
            m2[i] = 0.0
        for x in range(lo, hi + 1, 2):
            i = x - base
            if half and x == 0:
                m2[i + 1] += m[i]
            else:
                w = _w(half, p1, p2, k0, k1, replica, grid, t_min, x_min, u, x)
                m2[i + 1] += w * m[i]
                m2[i - 1] += (1.0 - w) * m[i]
        tmp = m
        m = m2
        m2 = tmp
    return m.sum()


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


@dataclass
class KernelSlice:
    """x -> P_{s,t}(x, y_star) for x in [x_lo, x_lo + len(values))."""

    s: int
    t: int
    y_star: int
    x_lo: int
    values: np.ndarray

    def __call__(self, x: int) -> float:
        i = x - self.x_lo
        if 0 <= i < len(self.values):
            return float(self.values[i])
        return 0.0

    def items(self):
        return [(self.x_lo + i, float(v)) for i, v in enumerate(self.values)]


@dataclass
class ZSample:
    """Point-to-line sum into (t, x), truncated at depth L, with its ladder."""

    t: int
    x: int
    L: int
    value: float
    ladder: list = field(default_factory=list)
    converged: bool = True


def _env_args(env: Environment):
    p1, p2 = env.params.as_float()
    k0, k1 = env.key
    grid = getattr(env, "grid", None)
    if grid is None:
        return p1, p2, k0, k1, _EMPTY_GRID, 0, 0
    return p1, p2, k0, k1, grid, env.window.t_min, env.window.x_min


def _check_window(env: Environment, s: int, t: int, x_needed_lo: int, x_needed_hi: int):
    w = env.window
    if t - 1 < s:
        return
    if w.t_min > s or w.t_max < t - 1:
        raise ValueError(f"environment window [{w.t_min}, {w.t_max}] does not cover times [{s}, {t - 1}]")
    if w.x_max < x_needed_hi or w.x_min > x_needed_lo:
        raise ValueError("environment window too small in space")


def backward_kernel(
    env: Environment,
    t: int,
    y_star: int,
    s: int = 0,
    x_range: Optional[tuple[int, int]] = None,
) -> KernelSlice:
    """P_{s,t}(x, y_star) for x in ``x_range`` (default: every start that can reach y_star)."""
    half = env.mode == "half"
    if s > t:
        raise ValueError("need s <= t")
    if half and y_star < 0:
        raise ValueError("half-space targets are nonnegative")
    depth = t - s
    if x_range is None:
        x_range = (max(0, y_star - depth) if half else y_star - depth, y_star + depth)
    xlo, xhi = x_range
    if half:
        xlo = max(xlo, 0)
    if xhi < xlo:
        raise ValueError("empty x range")
    # sites actually visited by the sweep
    need_hi = min(y_star + depth - 1, xhi + depth - 1)
    need_lo = max(y_star - depth + 1, xlo - depth + 1)
    if half:
        need_lo = max(need_lo, 1)
    _check_window(env, s, t, need_lo, need_hi)
    p1, p2, k0, k1, grid, tm, xm = _env_args(env)
    v, _ = _sweep(half, p1, p2, k0, k1, env.replica, grid, tm, xm, t, y_star, s, xlo, xhi, _NO_LADDER)
    return KernelSlice(s=s, t=t, y_star=y_star, x_lo=xlo, values=v)


def geometric_ladder(L: int, ratio: float = 2.0) -> list[int]:
    """1, 2, 4, ... up to and including L."""
    out, v = [], 1
    while v < L:
        out.append(v)
        v = max(v + 1, int(round(v * ratio)))
    out.append(L)
    return out


def _flag(ladder_vals, rel=1e-3) -> bool:
    if len(ladder_vals) < 2:
        return True
    a, b = ladder_vals[-2], ladder_vals[-1]
    return abs(b - a) <= rel * max(abs(b), 1e-300)


def z_functional(env: Environment, t: int, x: int, L: int, ladder: Optional[Sequence[int]] = None) -> ZSample:
    """Sum over z of P_{t-L,t}(z, x), with values along a truncation ladder."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    half = env.mode == "half"
    steps = sorted(set(ladder or geometric_ladder(max(L, 1)))) if L > 0 else [0]
    steps = [l for l in steps if l <= L]
    if L not in steps:
        steps.append(L)
    s0 = t - L
    need_lo = max(1, x - L + 1) if half else x - L + 1
    _check_window(env, s0, t, need_lo, x + L - 1)
    p1, p2, k0, k1, grid, tm, xm = _env_args(env)
    lad = np.asarray(steps, dtype=np.int64)
    xlo = max(0, x - L) if half else x - L
    _, sums = _sweep(half, p1, p2, k0, k1, env.replica, grid, tm, xm, t, x, s0, xlo, x + L, lad)
    vals = [float(v) for v in sums]
    return ZSample(t=t, x=x, L=L, value=vals[-1], ladder=list(zip(steps, vals)), converged=_flag(vals))


def coalescence_gap(env: Environment, t: int, x: int) -> float:
    """|P_{0,t}(1,1) - P_{0,t}(x,1)| in one environment."""
    if x <= 1:
        raise ValueError("x must exceed 1")
    ks = backward_kernel(env, t, 1, 0, (0, x))
    return abs(ks(1) - ks(x))


def forward_mass(env: Environment, s: int, t: int, x0: int) -> float:
    """Total mass at time t of a unit mass started at (s, x0); equals 1 up to rounding."""
    half = env.mode == "half"
    p1, p2, k0, k1, grid, tm, xm = _env_args(env)
    return float(_forward(half, p1, p2, k0, k1, env.replica, grid, tm, xm, s, t, x0))


def kernel_batch(
    params: Union[ModelParams, FullParams],
    seed: int,
    replicas: int,
    t: int,
    y_star: int,
    x_range: tuple[int, int],
    s: int = 0,
    first_replica: int = 0,
) -> np.ndarray:
    """P_{s,t}(x, y_star) for ``replicas`` independent environments; shape (replicas, nx)."""
    if replicas <= 0:
        raise ValueError("replicas must be positive")
    half = isinstance(params, ModelParams)
    p1, p2 = params.as_float()
    k0, k1 = _key(seed)
    xlo, xhi = x_range
    vals, _ = _batch(half, p1, p2, k0, k1, first_replica, replicas, t, y_star, s, xlo, xhi, _NO_LADDER)
    return vals


def z_batch(
    params: Union[ModelParams, FullParams],
    seed: int,
    replicas: int,
    t: int,
    x: int,
    ladder: Sequence[int],
    first_replica: int = 0,
) -> np.ndarray:
    """Truncated point-to-line sums into (t, x) along ``ladder``; shape (replicas, len(ladder))."""
    half = isinstance(params, ModelParams)
    p1, p2 = params.as_float()
    k0, k1 = _key(seed)
    lad = np.asarray(sorted(ladder), dtype=np.int64)
    L = int(lad[-1])
    xlo = max(0, x - L) if half else x - L
    _, sums = _batch(half, p1, p2, k0, k1, first_replica, replicas, t, x, t - L, xlo, x + L, lad)
    return sums


def write_slice_csv(ks: KernelSlice, path: Union[str, Path]) -> Path:
    """CSV with header (s, x, value)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "x", "value"])
        for x, v in ks.items():
            wr.writerow([ks.s, x, repr(v)])
    return path
