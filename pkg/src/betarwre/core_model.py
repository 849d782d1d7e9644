"""Model parameters, the space-time lattice and the random environment.

Every environment weight W_{t,x} is a pure function of
(seed, replica, t, x, parameters): it is produced by a Philox4x32-10
counter-based generator whose counter encodes the coordinates, so weights can
be generated in any order, on any thread, and always agree bit for bit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

import numpy as np
from numba import njit, prange

__all__ = [
    "ModelParams",
    "FullParams",
    "HalfLatticePoint",
    "Window",
    "Environment",
    "Stream",
    "sample_environment",
    "beta_draw",
    "beta_sample",
    "gamma_sample",
    "averaged_step_law",
    "philox4x32",
    "parse_seed",
    "write_environment",
    "read_environment",
]

MASK32 = 0xFFFFFFFF
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = np.uint64(0x9E3779B9)
_PHILOX_W1 = np.uint64(0xBB67AE85)
_M32 = np.uint64(MASK32)
_S32 = np.uint64(32)

# Stream tags occupy the top byte of the fourth counter word.
STREAM_GAMMA_A = 0
STREAM_GAMMA_B = 1
_ATTEMPT_BITS = 24


def _as_number(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


@dataclass(frozen=True)
class ModelParams:
    """Half-space parameters: mu (bulk Beta shape) and eta (boundary shape)."""

    mu: Union[float, Fraction]
    eta: Union[float, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_number(self.mu))
        object.__setattr__(self, "eta", _as_number(self.eta))
        if not (self.mu > 0 and self.eta > 0):
            raise ValueError("mu and eta must be positive")

    @property
    def nu(self):
        """Order of the Hankel transform attached to the model, mu + eta."""
        return self.mu + self.eta

    def as_float(self) -> tuple[float, float]:
        return float(self.mu), float(self.eta)


@dataclass(frozen=True)
class FullParams:
    """Full-space parameters: W ~ Beta(alpha, beta) at every site."""

    alpha: Union[float, Fraction]
    beta: Union[float, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "alpha", _as_number(self.alpha))
        object.__setattr__(self, "beta", _as_number(self.beta))
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")

    @property
    def nu(self):
        return self.alpha + self.beta

    @property
    def sigma2(self) -> float:
        a, b = float(self.alpha), float(self.beta)
        return 4.0 * a * b / (a + b) ** 2

    @property
    def drift(self) -> float:
        """Mean step of the averaged walk, (alpha - beta) / (alpha + beta)."""
        a, b = float(self.alpha), float(self.beta)
        return (a - b) / (a + b)

    def as_float(self) -> tuple[float, float]:
        return float(self.alpha), float(self.beta)


@dataclass(frozen=True)
class HalfLatticePoint:
    """A point (t, x) of the half-space lattice, t + x odd, x >= 0."""

    t: int
    x: int

    def __post_init__(self):
        if self.x < 0:
            raise ValueError("x must be nonnegative")
        if (self.t + self.x) % 2 != 1:
            raise ValueError("t + x must be odd")


@dataclass(frozen=True)
class Window:
    """Space-time window [t_min, t_max] x [x_min, x_max] of materialized weights."""

    t_min: int
    t_max: int
    x_max: int
    x_min: int = 1

    def __post_init__(self):
        if self.t_max < self.t_min or self.x_max < self.x_min:
            raise ValueError("empty window")
        if self.t_max - self.t_min > 10**7 or self.x_max - self.x_min > 10**7:
            raise ValueError("window overflow")

    def contains(self, t: int, x: int) -> bool:
        return self.t_min <= t <= self.t_max and self.x_min <= x <= self.x_max


@dataclass(frozen=True)
class Stream:
    """Coordinates addressing one Beta draw: (seed, replica, t, x)."""

    seed: int
    replica: int = 0
    t: int = 0
    x: int = 0


# ---------------------------------------------------------------------------
# Philox4x32-10 and samplers (numba)
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _PHILOX_M0 * c0
        p1 = _PHILOX_M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _M32
        hi1 = p1 >> _S32
        lo1 = p1 & _M32
        c0 = (hi1 ^ c1 ^ k0) & _M32
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _M32
        c3 = lo0
        k0 = (k0 + _PHILOX_W0) & _M32
        k1 = (k1 + _PHILOX_W1) & _M32
    return c0, c1, c2, c3


@njit(cache=True)
def _philox_array(ctr, key):
    r = _philox(
        np.uint64(ctr[0]), np.uint64(ctr[1]), np.uint64(ctr[2]), np.uint64(ctr[3]),
        np.uint64(key[0]), np.uint64(key[1]),
    )
    out = np.empty(4, dtype=np.uint64)
    out[0], out[1], out[2], out[3] = r
    return out


def philox4x32(counter, key) -> tuple[int, int, int, int]:
    """Philox4x32-10 block function on a 4-word counter and 2-word key."""
    ctr = np.array([int(c) & MASK32 for c in counter], dtype=np.uint64)
    k = np.array([int(c) & MASK32 for c in key], dtype=np.uint64)
    return tuple(int(v) for v in _philox_array(ctr, k))


@njit(cache=True, inline="always")
def _u32_to_open01(w):
    # (w + 1/2) / 2^32, strictly inside (0, 1)
    return (np.float64(w) + 0.5) * 2.3283064365386963e-10


@njit(cache=True, inline="always")
def _u53_open01(a, b):
    hi = np.float64(a >> np.uint64(5))
    lo = np.float64(b >> np.uint64(6))
    return (hi * 67108864.0 + lo + 0.5) * 1.1102230246251565e-16


@njit(cache=True)
def _gamma_draw(shape, k0, k1, c0, c1, c2, stream):
    """Gamma(shape, 1) from the counter block (c0, c1, c2, stream | attempt)."""
    base = np.uint64(stream) << np.uint64(_ATTEMPT_BITS)
    attempt = np.uint64(0)
    if shape == 1.0:
        r0, r1, r2, r3 = _philox(c0, c1, c2, base, k0, k1)
        return -math.log(_u53_open01(r0, r1))
    boost = 1.0
    a = shape
    if shape < 1.0:
        r0, r1, r2, r3 = _philox(c0, c1, c2, base, k0, k1)
        attempt += np.uint64(1)
        boost = math.exp(math.log(_u53_open01(r0, r1)) / shape)
        a = shape + 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        r0, r1, r2, r3 = _philox(c0, c1, c2, base | attempt, k0, k1)
        attempt += np.uint64(1)
        u1 = _u32_to_open01(r0)
        u2 = _u32_to_open01(r1)
        rad = math.sqrt(-2.0 * math.log(u1))
        n1 = rad * math.cos(2.0 * math.pi * u2)
        n2 = rad * math.sin(2.0 * math.pi * u2)
        for j in range(2):
            xn = n1 if j == 0 else n2
            u = _u32_to_open01(r2) if j == 0 else _u32_to_open01(r3)
            v = 1.0 + c * xn
            if v <= 0.0:
                continue
            v = v * v * v
            x2 = xn * xn
            if u < 1.0 - 0.0331 * x2 * x2:
                return d * v * boost
            if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
                return d * v * boost


@njit(cache=True)
def _beta_at(a, b, k0, k1, t, x, replica):
    c0 = np.uint64(x) & _M32
    c1 = np.uint64(t) & _M32
    c2 = np.uint64(replica) & _M32
    ga = _gamma_draw(a, k0, k1, c0, c1, c2, STREAM_GAMMA_A)
    gb = _gamma_draw(b, k0, k1, c0, c1, c2, STREAM_GAMMA_B)
    w = ga / (ga + gb)
    # keep strictly inside (0, 1) even when one Gamma draw underflows
    if w <= 0.0:
        w = 5e-324
    elif w >= 1.0:
        w = 1.0 - 1.1102230246251565e-16
    return w


@njit(cache=True)
def _half_weight(mu, eta, k0, k1, t, x, replica):
    if x == 1:
        return _beta_at(mu, eta, k0, k1, t, x, replica)
    return _beta_at(mu, mu, k0, k1, t, x, replica)


def _key(seed: int) -> tuple[np.uint64, np.uint64]:
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return np.uint64(seed & MASK32), np.uint64(seed >> 32)


@njit(cache=True, parallel=True)
def _beta_many(a, b, k0, k1, n, replica):
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        # index i spread over (x, t) so that each draw has a distinct counter
        out[i] = _beta_at(a, b, k0, k1, i >> 20, i & 0xFFFFF, replica)
    return out


@njit(cache=True, parallel=True)
def _gamma_many(shape, k0, k1, n, replica):
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        out[i] = _gamma_draw(
            shape, k0, k1, np.uint64(i & 0xFFFFF), np.uint64(i >> 20),
            np.uint64(replica), STREAM_GAMMA_A,
        )
    return out


def _check_shape(a, b):
    if not (a > 0 and b > 0):
        raise ValueError("Beta shapes must be positive")


def beta_draw(a: float, b: float, stream: Stream) -> float:
    """One Beta(a, b) value, G_a / (G_a + G_b), addressed by ``stream``."""
    _check_shape(a, b)
    k0, k1 = _key(stream.seed)
    return float(_beta_at(float(a), float(b), k0, k1, stream.t, stream.x, stream.replica))


def beta_sample(a: float, b: float, n: int, seed: int, replica: int = 0) -> np.ndarray:
    """``n`` independent Beta(a, b) draws (distinct counters, fixed seed)."""
    _check_shape(a, b)
    if n > 1 << 40:
        raise ValueError("sample too large for the counter layout")
    k0, k1 = _key(seed)
    return _beta_many(float(a), float(b), k0, k1, int(n), int(replica))


def gamma_sample(shape: float, n: int, seed: int, replica: int = 0) -> np.ndarray:
    """``n`` independent Gamma(shape, 1) draws."""
    if shape <= 0:
        raise ValueError("shape must be positive")
    k0, k1 = _key(seed)
    return _gamma_many(float(shape), k0, k1, int(n), int(replica))


# ---------------------------------------------------------------------------
# Environments
# ---------------------------------------------------------------------------


@dataclass
class Environment:
    """Lazily materialized field of jump probabilities W_{t,x}.

    ``mode`` is ``"half"`` (x >= 1, Beta(mu, eta) at x = 1, Beta(mu, mu)
    beyond) or ``"full"`` (Beta(alpha, beta) at every integer x).
    """

    params: Union[ModelParams, FullParams]
    window: Window
    seed: int
    replica: int = 0
    grid: Optional[np.ndarray] = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_snapshot(cls, path: Union[str, Path]) -> "Environment":
        """Replay environment whose weights come from a snapshot file."""
        header, grid = read_environment(path)
        p1, p2 = header["params"]
        params = ModelParams(p1, p2) if header["mode"] == "half" else FullParams(p1, p2)
        window = Window(header["t_min"], header["t_max"], header["x_max"], header["x_min"])
        return cls(params=params, window=window, seed=header["seed"],
                   replica=header["replica"], grid=np.ascontiguousarray(grid, dtype=np.float64))

    @property
    def mode(self) -> str:
        return "half" if isinstance(self.params, ModelParams) else "full"

    @property
    def key(self) -> tuple[np.uint64, np.uint64]:
        return _key(self.seed)

    def shape_pair(self, x: int) -> tuple[float, float]:
        if self.mode == "half":
            mu, eta = self.params.as_float()
            return (mu, eta) if x == 1 else (mu, mu)
        return self.params.as_float()

    def weight(self, t: int, x: int) -> float:
        if not self.window.contains(t, x):
            raise IndexError(f"({t}, {x}) outside the environment window")
        if self.mode == "half" and x < 1:
            raise IndexError("half-space weights live on x >= 1")
        if self.grid is not None:
            return float(self.grid[t - self.window.t_min, x - self.window.x_min])
        a, b = self.shape_pair(x)
        k0, k1 = self.key
        return float(_beta_at(a, b, k0, k1, t, x, self.replica))

    def materialize(self) -> np.ndarray:
        """Dense array W[t - t_min, x - x_min] over the window."""
        if self.grid is not None:
            return self.grid
        if "dense" not in self._cache:
            w = self.window
            k0, k1 = self.key
            p1, p2 = self.params.as_float()
            self._cache["dense"] = _materialize(
                self.mode == "half", p1, p2, k0, k1, w.t_min, w.t_max, w.x_min, w.x_max,
                self.replica,
            )
        return self._cache["dense"]


@njit(cache=True, parallel=True)
def _materialize(half, p1, p2, k0, k1, t_min, t_max, x_min, x_max, replica):
    nt = t_max - t_min + 1
    nx = x_max - x_min + 1
    out = np.empty((nt, nx), dtype=np.float64)
    for i in prange(nt):
        for j in range(nx):
            t = t_min + i
            x = x_min + j
            if half:
                out[i, j] = _half_weight(p1, p2, k0, k1, t, x, replica)
            else:
                out[i, j] = _beta_at(p1, p2, k0, k1, t, x, replica)
    return out


def sample_environment(
    params: Union[ModelParams, FullParams],
    window: Union[Window, tuple],
    seed: int,
    replica: int = 0,
) -> Environment:
    """Environment handle for ``params`` on ``window``; weights are generated on demand."""
    if not isinstance(params, (ModelParams, FullParams)):
        raise TypeError("params must be ModelParams or FullParams")
    if not isinstance(window, Window):
        window = Window(*window)
    if isinstance(params, ModelParams) and window.x_min < 1:
        raise ValueError("half-space windows start at x = 1")
    if not 0 <= int(seed) < 1 << 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return Environment(params=params, window=window, seed=int(seed), replica=int(replica))


def averaged_step_law(params: ModelParams, x: int):
    """(p_up, p_down) of the environment-averaged walk at site x."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return (1, 0) if isinstance(params.mu, Fraction) else (1.0, 0.0)
    if x == 1:
        s = params.mu + params.eta
        return (params.mu / s, params.eta / s)
    half = Fraction(1, 2) if isinstance(params.mu, Fraction) else 0.5
    return (half, half)


def parse_seed(text: Union[str, int]) -> int:
    """Decimal or 0x-prefixed hexadecimal 64-bit seed."""
    if isinstance(text, int):
        value = text
    else:
        s = text.strip().lower()
        value = int(s, 16) if s.startswith("0x") else int(s, 10)
    if not 0 <= value < 1 << 64:
        raise ValueError("seed must fit in 64 unsigned bits")
    return value


# ---------------------------------------------------------------------------
# Binary snapshot: little-endian header followed by the f64 grid (row = time)
# ---------------------------------------------------------------------------

_MAGIC = b"BRWE"
_VERSION = 1
_HEADER = struct.Struct("<4sIIQQqqqqdd")


def write_environment(env: Environment, path: Union[str, Path]) -> Path:
    """Write the materialized window of ``env`` for later replay."""
    path = Path(path)
    w = env.window
    p1, p2 = env.params.as_float()
    header = _HEADER.pack(
        _MAGIC, _VERSION, 0 if env.mode == "half" else 1, env.seed, env.replica,
        w.t_min, w.t_max, w.x_min, w.x_max, p1, p2,
    )
    grid = np.ascontiguousarray(env.materialize(), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(grid.tobytes())
    return path


def read_environment(path: Union[str, Path]) -> tuple[dict, np.ndarray]:
    """Read a snapshot; returns (header dict, grid array)."""
    raw = Path(path).read_bytes()
    fields = _HEADER.unpack_from(raw, 0)
    magic, version, mode, seed, replica, t_min, t_max, x_min, x_max, p1, p2 = fields
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not an environment snapshot")
    shape = (t_max - t_min + 1, x_max - x_min + 1)
    grid = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(shape)
    header = {
        "mode": "half" if mode == 0 else "full", "seed": seed, "replica": replica,
        "t_min": t_min, "t_max": t_max, "x_min": x_min, "x_max": x_max,
        "params": (p1, p2),
    }
    return header, grid
