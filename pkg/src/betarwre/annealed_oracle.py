"""Exact annealed moments through the cluster Markov chain.

k walkers started at x_1..x_k in one common environment move independently
given the environment; averaging out the environment, walkers that share a
site form a cluster, and a cluster of size c at a site with weight
W ~ Beta(a, b) sends j walkers down with probability

    C(c, j) (b)_j (a)_{c-j} / (a + b)_c .

The mixed moment E[prod_i P_{0,t}(x_i, y)] is the probability that the chain
sits at (y, ..., y) after t steps. With Fraction parameters the result is an
exact rational.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import groupby, product
from typing import Optional, Sequence, Union

import numpy as np

from betarwre.core_model import FullParams, ModelParams
from betarwre.specfun import pochhammer

__all__ = [
    "MomentValue",
    "cluster_step_law",
    "cluster_transition",
    "exact_moment",
    "exact_moment_fullspace",
    "averaged_walk_probability",
    "mc_moment",
    "mc_moment_fullspace",
    "moment_products",
]

K_MAX = 6


@dataclass
class MomentValue:
    k: int
    t: int
    x: tuple
    value: float
    method: str
    stderr: Optional[float] = None
    exact: Optional[Fraction] = None

    def to_record(self) -> dict:
        rec = {"k": self.k, "t": self.t, "x": list(self.x), "method": self.method, "value": float(self.value)}
        if self.stderr is not None:
            rec["stderr"] = float(self.stderr)
        if self.exact is not None:
            rec["exact_num"] = str(self.exact.numerator)
            rec["exact_den"] = str(self.exact.denominator)
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def _exact(params) -> bool:
    return all(isinstance(v, Fraction) for v in (params.__dict__.values()))


def _step_law(up_shape, down_shape, c: int) -> tuple:
    """P(j of c walkers step down), j = 0..c, for a Beta(up_shape, down_shape) weight."""
    den = pochhammer(up_shape + down_shape, c)
    return tuple(
        math.comb(c, j) * pochhammer(down_shape, j) * pochhammer(up_shape, c - j) / den
        for j in range(c + 1)
    )


@lru_cache(maxsize=None)
def _cached_law(up_shape, down_shape, c):
    return _step_law(up_shape, down_shape, c)


def cluster_step_law(params: Union[ModelParams, FullParams], site: int, c: int) -> tuple:
    """Distribution of the number of walkers, out of c at ``site``, that step down."""
    if c < 1:
        raise ValueError("cluster size must be positive")
    if isinstance(params, FullParams):
        return _cached_law(params.alpha, params.beta, c)
    if site < 0:
        raise ValueError("half-space sites are nonnegative")
    one = Fraction(1) if _exact(params) else 1.0
    zero = one * 0
    if site == 0:
        return (one,) + (zero,) * c
    if site == 1:
        return _cached_law(params.mu, params.eta, c)
    return _cached_law(params.mu, params.mu, c)


def cluster_transition(state: Sequence[int], params: Union[ModelParams, FullParams]) -> dict:
    """One step of the cluster chain: map from next sorted state to probability."""
    state = tuple(sorted(state))
    clusters = [(site, len(list(g))) for site, g in groupby(state)]
    laws = [cluster_step_law(params, site, c) for site, c in clusters]
    out: dict = {}
    for js in product(*(range(c + 1) for _, c in clusters)):
        p = 1
        nxt = []
        for (site, c), law, j in zip(clusters, laws, js):
            pj = law[j]
            if pj == 0:
                p = 0
                break
            p = p * pj
            if site == 0 and isinstance(params, ModelParams):
                nxt.extend([1] * c)
            else:
                nxt.extend([site - 1] * j + [site + 1] * (c - j))
        if p == 0:
            continue
        key = tuple(sorted(nxt))
        out[key] = out.get(key, 0) + p
    return out


def _run_chain(params, start: tuple, t: int, target: int):
    """Probability that the chain started at ``start`` is at (target,...) at time t."""
    one = Fraction(1) if _exact(params) else 1.0
    dist = {tuple(sorted(start)): one}
    trans_cache: dict = {}
    for step in range(t):
        remaining = t - step - 1
        new: dict = {}
        for st, p in dist.items():
            tr = trans_cache.get(st)
            if tr is None:
                tr = cluster_transition(st, params)
                trans_cache[st] = tr
            for st2, q in tr.items():
                # prune states that can no longer reach the target
                if st2[-1] - target > remaining or target - st2[0] > remaining:
                    continue
                new[st2] = new.get(st2, 0) + p * q
        dist = new
    return dist.get((target,) * len(start), one * 0)


def _validate(k: int, x: Sequence[int], t: int, parity: int):
    """Require t + x_i = parity (mod 2) for every i."""
    if not 1 <= k <= K_MAX:
        raise ValueError(f"k must be in 1..{K_MAX}")
    if len(x) != k:
        raise ValueError("x must have k entries")
    if t < 0:
        raise ValueError("t must be nonnegative")
    for xi in x:
        if (t + xi) % 2 != parity:
            raise ValueError("parity violation: t + x_i has the wrong parity")


def exact_moment(params: ModelParams, k: int, t: int, x: Sequence[int], target: int = 1) -> MomentValue:
    """E[prod_i P_{0,t}(x_i, target)] for the half-space model (target 1 by default)."""
    x = tuple(int(v) for v in x)
    if any(v < 0 for v in x) or target < 0:
        raise ValueError("half-space positions are nonnegative")
    _validate(k, x, t, target % 2)
    v = _run_chain(params, x, t, target)
    exact = v if isinstance(v, Fraction) else None
    return MomentValue(k=k, t=t, x=x, value=float(v), method="oracle", exact=exact)


def exact_moment_fullspace(params: FullParams, k: int, t: int, x: Sequence[int], target: int = 0) -> MomentValue:
    """E[prod_i P^Z_{0,t}(x_i, target)] for the full-space model."""
    x = tuple(int(v) for v in x)
    _validate(k, x, t, target % 2)
    v = _run_chain(params, x, t, target)
    exact = v if isinstance(v, Fraction) else None
    return MomentValue(k=k, t=t, x=x, value=float(v), method="oracle", exact=exact)


def averaged_walk_probability(params: Union[ModelParams, FullParams], t: int, x: int, y: int):
    """P(averaged walk started at x is at y at time t); exact when parameters are rational."""
    if isinstance(params, ModelParams) and (x < 0 or y < 0):
        raise ValueError("half-space positions are nonnegative")
    if (t + x + y) % 2:
        return Fraction(0) if _exact(params) else 0.0
    return _run_chain(params, (x,), t, y)


def moment_products(kernel_rows: np.ndarray, cols: Sequence[int]) -> np.ndarray:
    """Per-replica product of kernel values at the given columns."""
    out = np.ones(kernel_rows.shape[0])
    for c in cols:
        out = out * kernel_rows[:, c]
    return out


def _mc(params, k, t, x, replicas, seed, target):
    from betarwre.quenched_kernel import kernel_batch

    if replicas <= 0:
        raise ValueError("replicas must be positive")
    x = tuple(int(v) for v in x)
    lo, hi = min(x), max(x)
    rows = kernel_batch(params, seed, replicas, t, target, (lo, hi))
    prod = moment_products(rows, [v - lo for v in x])
    se = float(prod.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    return MomentValue(k=k, t=t, x=x, value=float(prod.mean()), method="mc", stderr=se)


def mc_moment(params: ModelParams, k: int, t: int, x: Sequence[int], replicas: int, seed: int, target: int = 1) -> MomentValue:
    """Monte Carlo estimate of E[prod_i P_{0,t}(x_i, target)] with standard error."""
    return _mc(params, k, t, x, replicas, seed, target)


def mc_moment_fullspace(params: FullParams, k: int, t: int, x: Sequence[int], replicas: int, seed: int, target: int = 0) -> MomentValue:
    return _mc(params, k, t, x, replicas, seed, target)
