"""Monte Carlo drivers: local limit theorems, conjecture diagnostics, coalescence.

Every driver is a pure function of its arguments and the seed. Replica r of a
run always sees the environment of replica r, so reports, CSV dumps and
verdicts reproduce byte for byte.

Lattice factor. Both walks live on a parity sublattice, so point
probabilities are twice the continuum density. The limit laws therefore
carry a factor ``lattice_factor`` that defaults to 2; passing 1 gives the
targets as they are usually written down without that factor.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numba import njit
from scipy import stats

from betarwre.annealed_oracle import exact_moment, moment_products
from betarwre.contour_engine import moment_integral_line, moment_integral_nested
from betarwre.core_model import FullParams, ModelParams
from betarwre.quenched_kernel import kernel_batch, z_batch
from betarwre.specfun import regularized_gamma_p

__all__ = [
    "admissible_positions",
    "moment_triangulation",
    "GammaLaw",
    "KSReport",
    "ks_test",
    "two_sample_ks",
    "ks_calibration",
    "halfspace_targets",
    "llt_halfspace",
    "llt_fullspace",
    "z_conjecture_halfspace",
    "z_conjecture_fullspace",
    "beta_gamma_closure",
    "coalescence_experiment",
    "no_meeting_probability",
    "config_hash",
    "write_samples_csv",
    "write_verdict",
]

CONJECTURE = "CONJECTURE"


# ---------------------------------------------------------------------------
# Moment triangulation
# ---------------------------------------------------------------------------


def admissible_positions(k: int, t: int, x_max: int) -> list[tuple]:
    """Nondecreasing k-tuples in [1, x_max] with t + x_i odd."""
    sites = [x for x in range(1, x_max + 1) if (t + x) % 2 == 1]
    return list(itertools.combinations_with_replacement(sites, k))


def _deviation(value: float, ref: float, rel_tol: float, zero_abs: float) -> tuple[float, bool]:
    # targets equal to zero (outside the light cone) are compared in absolute terms
    if ref == 0:
        return abs(value), abs(value) <= zero_abs
    d = abs(value - ref) / abs(ref)
    return d, d <= rel_tol


def moment_triangulation(
    params: ModelParams,
    ks: Sequence[int],
    ts: Sequence[int],
    x_max: int,
    mc_replicas: int = 0,
    seed: int = 0,
    line: bool = True,
    nested: bool = True,
    cases: Optional[Sequence[tuple]] = None,
    line_tol: float = 1e-6,
    nested_tol: float = 1e-8,
    zero_abs: float = 1e-8,
    mc_z_max: float = 4.0,
) -> list[dict]:
    """Oracle, line, nested and Monte Carlo values of E[prod_i P_{0,t}(x_i, 1)].

    ``params`` must hold exact (Fraction or integer) values for the oracle to
    be exact; the contour methods run in floating point. ``line_dev`` and
    ``nested_dev`` are relative deviations, or absolute ones when the target
    is zero, and the ``*_ok`` flags apply the tolerances. With
    ``mc_replicas`` one kernel batch per t serves every x, and ``mc_z`` is the
    deviation in standard errors.
    """
    fp = ModelParams(*params.as_float())
    if cases is None:
        cases = [(k, t, x) for t in ts for k in ks for x in admissible_positions(k, t, x_max)]
    rows = []
    batches = {}
    for k, t, x in cases:
        x = tuple(int(v) for v in x)
        o = exact_moment(params, k, t, x).value
        row = {"mu": fp.mu, "eta": fp.eta, "k": k, "t": t, "x": " ".join(map(str, x)), "oracle": o}
        if line:
            v = moment_integral_line(fp, k, t, x).real
            d, ok = _deviation(v, o, line_tol, zero_abs)
            row.update(line=v, line_dev=d, line_ok=ok)
        if nested:
            v = moment_integral_nested(fp, k, t, x).real
            d, ok = _deviation(v, o, nested_tol, zero_abs)
            row.update(nested=v, nested_dev=d, nested_ok=ok)
        if mc_replicas:
            if t not in batches:
                batches[t] = kernel_batch(fp, seed, mc_replicas, t, 1, (0, x_max))
            prod = moment_products(batches[t], x)
            m, se = _mean_se(prod)
            z = abs(m - o) / se if se > 0 else (0.0 if m == o else math.inf)
            row.update(mc=m, mc_se=se, mc_z=z, mc_ok=z <= mc_z_max)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Goodness of fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaLaw:
    """scale * Gamma(shape)."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("shape and scale must be positive")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    def cdf(self, x):
        return regularized_gamma_p(self.shape, np.asarray(x, dtype=float) / self.scale)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.scale * rng.gamma(self.shape, size=n)

    def describe(self) -> str:
        return f"{self.scale:.6g} * Gamma({self.shape:.6g})"


@dataclass
class KSReport:
    n: int
    statistic: float
    p_value: float
    target: str
    extra: dict = field(default_factory=dict)

    def passed(self, level: float = 0.01) -> bool:
        return self.p_value > level

    def to_record(self) -> dict:
        return {"n": self.n, "statistic": self.statistic, "p_value": self.p_value, "target": self.target, **self.extra}


def ks_test(samples, cdf: Callable, target: str = "") -> KSReport:
    """One-sample Kolmogorov-Smirnov statistic with the asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 50:
        raise ValueError("KS test needs at least 50 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("degenerate sample: non-finite values")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    p = float(stats.kstwobign.sf(math.sqrt(n) * d))
    return KSReport(n=n, statistic=d, p_value=p, target=target)


def two_sample_ks(a, b) -> dict:
    """Two-sample KS statistic, p-value and the 1% critical value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    res = stats.ks_2samp(a, b)
    n, m = a.size, b.size
    crit = math.sqrt(-math.log(0.01 / 2) / 2) * math.sqrt((n + m) / (n * m))
    return {"statistic": float(res.statistic), "p_value": float(res.pvalue), "critical_1pct": crit}


def ks_calibration(resamples: int = 500, n: int = 10_000, seed: int = 0, level: float = 0.01) -> float:
    """Fraction of null samples rejected at ``level``: the empirical type-I error."""
    rng = np.random.default_rng(seed)
    law = GammaLaw(2.0, 0.5)
    rej = 0
    for _ in range(resamples):
        if ks_test(law.sample(n, rng), law.cdf).p_value <= level:
            rej += 1
    return rej / resamples


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


# ---------------------------------------------------------------------------
# Local limit theorems
# ---------------------------------------------------------------------------


def halfspace_targets(params: ModelParams, lattice_factor: float = 2.0) -> dict:
    """Limit laws of sqrt(t) P_{0,t}(1,1) and sqrt(t) P_{0,t}(0,0)."""
    mu, eta = params.as_float()
    scale = lattice_factor * 2 / math.sqrt(2 * math.pi) / (2 * mu)
    return {"P11": GammaLaw(mu + eta, scale), "P00": GammaLaw(eta, scale)}


@dataclass
class LLTResult:
    experiment: str
    config: dict
    reports: dict
    samples: dict
    checks: dict
    binding: bool = True

    def to_record(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "binding": self.binding,
            "reports": {k: v.to_record() for k, v in self.reports.items()},
            "checks": self.checks,
        }


def llt_halfspace(
    params: ModelParams,
    t: int,
    replicas: int,
    seed: int,
    x_starts: Sequence[int] = (1, 3, 5),
    lattice_factor: float = 2.0,
) -> LLTResult:
    """sqrt(t) P_{0,t}(x, 1) for x in ``x_starts`` and sqrt(t) P_{0,t}(0, 0).

    Starts other than 1 are compared with the x = 1 law, both directly and by
    a two-sample test against the x = 1 sample from the same environments.
    """
    if t % 2:
        raise ValueError("t must be even for return probabilities")
    if any(x % 2 != 1 for x in x_starts):
        raise ValueError("starts must be odd to reach 1 at even t")
    mu, eta = params.as_float()
    binding = mu + eta > 0.5 and t >= 1000
    targets = halfspace_targets(params, lattice_factor)
    xmax = max(max(x_starts), 1)
    rt = math.sqrt(t)
    p1 = kernel_batch(params, seed, replicas, t, 1, (0, xmax)) * rt
    p0 = kernel_batch(params, seed, replicas, t, 0, (0, 0))[:, 0] * rt
    samples = {"P00": p0}
    for x in sorted(set(x_starts) | {1}):
        samples["P11" if x == 1 else f"P{x}1"] = p1[:, x]
    reports = {}
    for name, s in samples.items():
        law = targets["P00"] if name == "P00" else targets["P11"]
        reports[name] = ks_test(s, law.cdf, law.describe())
    m, se = _mean_se(np.sqrt(2 * math.pi) * samples["P11"])
    mean_target = lattice_factor * (mu + eta) / mu
    checks = {
        "mean_sqrt2pit_P11": m,
        "mean_se": se,
        "mean_target": mean_target,
        "mean_z": abs(m - mean_target) / se,
        "hypothesis_ok": mu + eta > 0.5,
    }
    for name in samples:
        if name not in ("P00", "P11"):
            checks[f"two_sample_{name}_vs_P11"] = two_sample_ks(samples[name], samples["P11"])
    config = {"mu": mu, "eta": eta, "t": t, "replicas": replicas, "seed": seed,
              "x_starts": list(x_starts), "lattice_factor": lattice_factor}
    return LLTResult("llt_halfspace", config, reports, samples, checks, binding)


def _gauss(x: float, sigma: float) -> float:
    return math.exp(-x * x / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi))


def llt_fullspace(
    params: FullParams,
    t: int,
    x_tilde: float,
    replicas: int,
    seed: int,
    lattice_factor: float = 2.0,
) -> LLTResult:
    """sqrt(t) P^Z_{0,t}(x, 0) with x = -drift t - x~ sqrt(t) rounded to the parity of t."""
    a, b = params.as_float()
    drift = params.drift
    exact = -drift * t - x_tilde * math.sqrt(t)
    x = int(round(exact))
    if (x + t) % 2:
        x += 1 if exact > x else -1
    offset = x - exact
    xt_eff = (-drift * t - x) / math.sqrt(t)
    sigma = math.sqrt(params.sigma2)
    g = _gauss(xt_eff, sigma)
    law = GammaLaw(a + b, lattice_factor * g / (a + b))
    s = kernel_batch(params, seed, replicas, t, 0, (x, x))[:, 0] * math.sqrt(t)
    rep = ks_test(s, law.cdf, law.describe())
    m, se = _mean_se(s)
    checks = {"start": x, "offset": offset, "x_tilde_effective": xt_eff, "mean": m, "mean_se": se,
              "mean_target": law.mean, "mean_z": abs(m - law.mean) / se}
    config = {"alpha": a, "beta": b, "t": t, "x_tilde": x_tilde, "replicas": replicas, "seed": seed,
              "lattice_factor": lattice_factor}
    return LLTResult("llt_fullspace", config, {"P": rep}, {"P": s}, checks, a + b > 0.5)


# ---------------------------------------------------------------------------
# Conjecture diagnostics
# ---------------------------------------------------------------------------


@dataclass
class ZReport:
    experiment: str
    config: dict
    reports: dict
    means: dict
    ladder_increments: dict
    correlation: list
    converged: dict
    extra: dict = field(default_factory=dict)
    label: str = CONJECTURE

    def to_record(self) -> dict:
        return {
            "label": self.label,
            "experiment": self.experiment,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "reports": {k: v.to_record() for k, v in self.reports.items()},
            "means": self.means,
            "ladder_increments": self.ladder_increments,
            "correlation": self.correlation,
            "converged": self.converged,
            **self.extra,
        }


def _z_common(params, t, ladder, x_list, replicas, seed, target_of):
    ladder = sorted(set(int(l) for l in ladder))
    if not ladder or ladder[0] < 1:
        raise ValueError("ladder must contain positive depths")
    finals, reports, means, incs, conv = [], {}, {}, {}, {}
    for x in x_list:
        sums = z_batch(params, seed, replicas, t, x, ladder)
        z = sums[:, -1]
        finals.append(z)
        law = target_of(x)
        reports[str(x)] = ks_test(z, law.cdf, law.describe())
        m, se = _mean_se(z)
        means[str(x)] = {"mean": m, "se": se, "target": law.mean, "z": abs(m - law.mean) / se}
        inc = [float(np.mean(np.abs(sums[:, j + 1] - sums[:, j]))) for j in range(len(ladder) - 1)]
        incs[str(x)] = inc
        rel = np.abs(sums[:, -1] - sums[:, -2]) / np.maximum(np.abs(sums[:, -1]), 1e-300) if len(ladder) > 1 else 0
        conv[str(x)] = bool(np.max(rel) <= 1e-2) if len(ladder) > 1 else False
    corr = np.corrcoef(np.vstack(finals)).tolist() if len(finals) > 1 else [[1.0]]
    config = {"params": list(params.as_float()), "t": t, "ladder": ladder, "x": list(x_list),
              "replicas": replicas, "seed": seed}
    return config, reports, means, incs, corr, conv


def z_conjecture_halfspace(
    params: ModelParams, t: int, L_ladder: Sequence[int], x_list: Sequence[int], replicas: int, seed: int
) -> ZReport:
    """Truncated point-to-line sums into (t, x) vs the conjectured Gamma laws."""
    mu, eta = params.as_float()

    def target(x):
        if x >= 2:
            return GammaLaw(2 * mu, 1 / (2 * mu))
        return GammaLaw(mu + eta if x == 1 else eta, 1 / (2 * mu))

    config, reports, means, incs, corr, conv = _z_common(params, t, L_ladder, x_list, replicas, seed, target)
    return ZReport("z_conjecture_halfspace", config, reports, means, incs, corr, conv)


def beta_gamma_closure(alpha: float, beta: float, n: int = 100_000, seed: int = 0,
                       shared_beta: bool = False) -> KSReport:
    """G_1 B_1 + G_2 (1 - B_2) against Gamma(alpha + beta).

    The two Beta weights come from distinct sites in the heat-kernel
    recurrence and are independent; then G_1 B_1 ~ Gamma(alpha) and
    G_2 (1 - B_2) ~ Gamma(beta) are independent and the sum is exact.
    ``shared_beta=True`` uses one B for both terms, which is not Gamma
    distributed: its variance is smaller by 2 alpha beta / (alpha + beta + 1).
    """
    rng = np.random.default_rng(seed)
    s = alpha + beta
    g1 = rng.gamma(s, size=n)
    g2 = rng.gamma(s, size=n)
    b1 = rng.beta(alpha, beta, n)
    b2 = b1 if shared_beta else rng.beta(alpha, beta, n)
    law = GammaLaw(s, 1.0)
    rep = ks_test(g1 * b1 + g2 * (1 - b2), law.cdf, law.describe())
    rep.extra["shared_beta"] = shared_beta
    return rep


def z_conjecture_fullspace(
    params: FullParams, t: int, L_ladder: Sequence[int], x_list: Sequence[int], replicas: int, seed: int
) -> ZReport:
    a, b = params.as_float()
    law = GammaLaw(a + b, 1 / (a + b))
    config, reports, means, incs, corr, conv = _z_common(params, t, L_ladder, x_list, replicas, seed, lambda x: law)
    closure = beta_gamma_closure(a, b, seed=seed)
    shared = beta_gamma_closure(a, b, seed=seed, shared_beta=True)
    return ZReport("z_conjecture_fullspace", config, reports, means, incs, corr, conv,
                   extra={"beta_gamma_closure": closure.to_record(),
                          "beta_gamma_closure_shared": shared.to_record()})


# ---------------------------------------------------------------------------
# Coalescence
# ---------------------------------------------------------------------------


@njit(cache=True)
def _no_meet(up1, x, t):
    # two independent averaged walks from 1 and x; prob[i, j] with i < j
    n = x + t + 2
    cur = np.zeros((n, n))
    cur[1, x] = 1.0
    for s in range(t):
        nxt = np.zeros((n, n))
        ihi = min(1 + s, n - 2)
        jhi = min(x + s, n - 2)
        for i in range(0, ihi + 1):
            if i == 0:
                pi_u, pi_d = 1.0, 0.0
            elif i == 1:
                pi_u, pi_d = up1, 1.0 - up1
            else:
                pi_u, pi_d = 0.5, 0.5
            for j in range(i + 1, jhi + 1):
                p = cur[i, j]
                if p == 0.0:
                    continue
                if j == 1:
                    pj_u, pj_d = up1, 1.0 - up1
                else:
                    pj_u, pj_d = 0.5, 0.5
                for di in range(2):
                    qi = pi_u if di == 0 else pi_d
                    if qi == 0.0:
                        continue
                    ni = i + 1 if di == 0 else i - 1
                    for dj in range(2):
                        qj = pj_u if dj == 0 else pj_d
                        nj = j + 1 if dj == 0 else j - 1
                        if ni < nj:
                            nxt[ni, nj] += p * qi * qj
        cur = nxt
    return cur.sum()


def no_meeting_probability(params: ModelParams, x: int, t: int) -> float:
    """P(two independent averaged walks from 1 and x have not met by time t).

    Before they meet the walks never share a space-time site, so under the
    annealed law their steps are independent. Coupling quenched walks to move
    together after meeting bounds E|P_{0,t}(1,1) - P_{0,t}(x,1)| by this value.
    """
    if x <= 1:
        return 0.0
    if x % 2 == 0:
        return 1.0
    mu, eta = params.as_float()
    return float(_no_meet(mu / (mu + eta), int(x), int(t)))


@dataclass
class CoalescenceTable:
    config: dict
    rows: list

    def to_record(self) -> dict:
        return {"experiment": "coalescence", "config": self.config, "config_hash": config_hash(self.config),
                "rows": self.rows, "trend": self.trend()}

    def trend(self) -> dict:
        vals = [r["mean"] for r in self.rows]
        ts = [r["t"] for r in self.rows]
        if len(vals) < 2 or min(vals) <= 0:
            return {"decreasing": all(v == 0 for v in vals), "log_slope": None}
        slope = float(np.polyfit(np.log(ts), np.log(vals), 1)[0])
        return {"decreasing": vals[-1] < vals[0], "log_slope": slope}


def coalescence_experiment(
    params: ModelParams, t_list: Sequence[int], x: int, replicas: int, seed: int, envelope: bool = True
) -> CoalescenceTable:
    """E[sqrt(t) |P_{0,t}(1,1) - P_{0,t}(x,1)|] over ``t_list``."""
    rows = []
    for t in t_list:
        if t % 2:
            raise ValueError("t must be even")
        if x == 1:
            rows.append({"t": t, "mean": 0.0, "se": 0.0})
            continue
        v = kernel_batch(params, seed, replicas, t, 1, (0, x))
        gap = math.sqrt(t) * np.abs(v[:, 1] - v[:, x])
        m, se = _mean_se(gap)
        row = {"t": t, "mean": m, "se": se}
        if envelope:
            q = no_meeting_probability(params, x, t)
            row["envelope"] = math.sqrt(t) * q
        rows.append(row)
    config = {"params": list(params.as_float()), "t": list(t_list), "x": x, "replicas": replicas, "seed": seed}
    return CoalescenceTable(config, rows)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_samples_csv(samples: dict, path: Union[str, Path]) -> Path:
    """One row per replica, one column per sample name."""
    path = Path(path)
    names = list(samples)
    n = len(next(iter(samples.values())))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["replica"] + names)
        for i in range(n):
            w.writerow([i] + [repr(float(samples[k][i])) for k in names])
    return path


def write_verdict(path: Union[str, Path], experiment: str, config: dict, statistic, p_value, passed: bool,
                  **extra) -> Path:
    path = Path(path)
    rec = {"experiment": experiment, "config_hash": config_hash(config), "statistic": statistic,
           "p_value": p_value, "pass": bool(passed), **extra}
    path.write_text(json.dumps(rec, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path
