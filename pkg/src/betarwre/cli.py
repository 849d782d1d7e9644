"""Command line entry point: one subcommand per verification or experiment.

Every subcommand reads an optional JSON config, merges it over defaults that
mirror the acceptance grid, writes ``<name>.json`` (verdict with config hash)
and usually ``<name>.csv`` into ``--out``, and exits with

    0  pass
    1  tolerance breach
    2  config error
"""

from __future__ import annotations

import csv
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import click

from betarwre.core_model import FullParams, ModelParams, Window, parse_seed

EXIT_PASS, EXIT_BREACH, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def _check_type(key: str, default: Any, value: Any) -> Any:
    if default is None:
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, (str, int))
        value = str(value) if ok else value
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {type(value).__name__}")
    return value


def merge_config(defaults: dict, user: dict) -> dict:
    """Defaults overlaid with ``user``; unknown keys and type mismatches raise ConfigError."""
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(user) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out = dict(defaults)
    for k, v in user.items():
        out[k] = _check_type(k, defaults[k], v)
    return out


def _fraction(key: str, v) -> Fraction:
    try:
        f = Fraction(str(v))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: not a rational number: {v!r}") from None
    if f <= 0:
        raise ConfigError(f"{key} must be positive")
    return f


def _positive(key: str, v) -> float:
    if not (isinstance(v, (int, float)) and v > 0):
        raise ConfigError(f"{key} must be positive")
    return float(v)


def _complex(key: str, v) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(u, (int, float)) for u in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{key}: complex values are numbers or [re, im] pairs")


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Fraction):
        return str(obj)
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


class Run:
    """Per-invocation state: merged config, seed and output directory."""

    def __init__(self, name: str, cfg: dict, out: Path):
        self.name = name
        self.cfg = cfg
        self.out = out

    @property
    def hash(self) -> str:
        from betarwre.experiments import config_hash

        return config_hash({"command": self.name, **self.cfg})

    def write_csv(self, rows: list[dict], suffix: str = "") -> Path:
        path = self.out / f"{self.name}{suffix}.csv"
        cols: list[str] = []
        for r in rows:
            cols += [c for c in r if c not in cols]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in rows:
                w.writerow([_cell(r.get(c, "")) for c in cols])
        return path

    def write_json(self, passed: bool, **payload) -> Path:
        rec = {"command": self.name, "config": self.cfg, "config_hash": self.hash, "pass": bool(passed), **payload}
        path = self.out / f"{self.name}.json"
        path.write_text(json.dumps(rec, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
        return path


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j"
    return v


def _runner(name: str, defaults: dict, body: Callable[[Run], bool]):
    """Wrap a subcommand body with config loading and the exit-code contract."""

    @click.pass_context
    def command(ctx, config, seed, out, threads):
        opts = ctx.obj or {}
        config = config or opts.get("config")
        seed = seed if seed is not None else opts.get("seed")
        out = out or opts.get("out") or "."
        threads = threads or opts.get("threads")
        try:
            user = {}
            if config:
                try:
                    user = json.loads(Path(config).read_text(encoding="utf-8"))
                except (OSError, json.JSONDecodeError) as e:
                    raise ConfigError(f"cannot read config: {e}") from None
            cfg = merge_config(defaults, user)
            if seed is not None:
                try:
                    cfg["seed"] = parse_seed(seed)
                except ValueError as e:
                    raise ConfigError(str(e)) from None
            if threads:
                import numba

                numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
            outdir = Path(out)
            outdir.mkdir(parents=True, exist_ok=True)
            passed = body(Run(name, cfg, outdir))
        except ConfigError as e:
            click.echo(f"config error: {e}", err=True)
            ctx.exit(EXIT_CONFIG)
        click.echo(f"{name}: {'PASS' if passed else 'FAIL'}")
        ctx.exit(EXIT_PASS if passed else EXIT_BREACH)

    command.__name__ = name.replace("-", "_")
    return command


_common = [
    click.option("--config", type=click.Path(dir_okay=False), default=None, help="JSON config file."),
    click.option("--seed", type=str, default=None, help="Master seed, decimal or 0x-hex."),
    click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
    click.option("--threads", type=int, default=None, help="Numba thread count."),
]


def _register(name: str, defaults: dict, help: str):
    def deco(body):
        cmd = _runner(name, defaults, body)
        for opt in reversed(_common):
            cmd = opt(cmd)
        main.add_command(click.command(name=name, help=help)(cmd))
        return body

    return deco


@click.group()
@click.option("--config", type=click.Path(dir_okay=False), default=None, help="JSON config file.")
@click.option("--seed", type=str, default=None, help="Master seed, decimal or 0x-hex.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--threads", type=int, default=None, help="Numba thread count.")
@click.pass_context
def main(ctx, config, seed, out, threads):
    """Numerical laboratory for the half-space beta random walk in random environment."""
    ctx.obj = {"config": config, "seed": seed, "out": out, "threads": threads}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


@_register("moments", {
    "params": [["1", "1"], ["3/4", "3/2"]], "k": [1, 2, 3], "t": [2, 3, 4, 5, 6, 7, 8], "x_max": 5,
    "cases": None, "mc_replicas": 100_000, "line_tol": 1e-6, "nested_tol": 1e-8, "mc_z": 4.0, "seed": 0,
}, "Oracle, line, nested and Monte Carlo moments of the heat kernel.")
def _moments(run: Run) -> bool:
    from betarwre.experiments import moment_triangulation

    c = run.cfg
    plist = [ModelParams(_fraction("mu", a), _fraction("eta", b)) for a, b in c["params"]]
    cases = None
    if c["cases"] is not None:
        cases = []
        for case in c["cases"]:
            if not (isinstance(case, list) and len(case) == 3 and isinstance(case[2], list)):
                raise ConfigError("cases entries are [k, t, [x_1, ..., x_k]]")
            k, t, x = case
            if len(x) != k or k not in range(1, 7):
                raise ConfigError(f"case {case}: need 1 <= k <= 6 positions")
            if any(xi < 1 or (t + xi) % 2 != 1 for xi in x):
                raise ConfigError(f"case {case}: parity violation, t + x_i must be odd with x_i >= 1")
            cases.append((k, t, tuple(x)))
    if any(k not in range(1, 7) for k in c["k"]) or any(t < 1 for t in c["t"]):
        raise ConfigError("k must lie in 1..6 and t must be positive")
    rows = []
    for p in plist:
        rows += moment_triangulation(p, c["k"], c["t"], c["x_max"], mc_replicas=c["mc_replicas"], seed=c["seed"],
                                     cases=cases, line_tol=c["line_tol"], nested_tol=c["nested_tol"],
                                     mc_z_max=c["mc_z"])
    run.write_csv(rows)
    flags = [r[f] for r in rows for f in ("line_ok", "nested_ok", "mc_ok") if f in r]
    passed = all(flags)
    worst = {f: max((r[f] for r in rows if f in r), default=None) for f in ("line_dev", "nested_dev", "mc_z")}
    run.write_json(passed, cases=len(rows), worst=worst)
    return passed


@_register("pfaffian", {
    "mu": 1.0, "eta": 1.0, "t": [2, 6, 10], "zeta": [-1.0, -0.5, 0.0, 0.5, 1.0], "k_max": 4, "tol": 1e-6,
    "seed": 0,
}, "Fredholm Pfaffian: truncated series against the discretized Pfaffian.")
def _pfaffian(run: Run) -> bool:
    from betarwre.annealed_oracle import exact_moment
    from betarwre.contour_engine import generating_series
    from betarwre.pfaffian_fredholm import PfaffianKernel, fredholm_pfaffian_discretized, fredholm_pfaffian_series

    c = run.cfg
    mu, eta = _positive("mu", c["mu"]), _positive("eta", c["eta"])
    if not 1 <= c["k_max"] <= 6:
        raise ConfigError("k_max must lie in 1..6")
    zetas = [_complex("zeta", z) for z in c["zeta"]]
    exact_params = ModelParams(Fraction(mu).limit_denominator(10**6), Fraction(eta).limit_denominator(10**6))
    rows, passed = [], True
    for t in c["t"]:
        if t < 1:
            raise ConfigError("t must be positive")
        kern = PfaffianKernel(mu, eta, t)
        moments = [exact_moment(exact_params, k, 2 * t, [1] * k).value for k in range(1, c["k_max"] + 1)]
        for z in zetas:
            s = fredholm_pfaffian_series(kern, z, k_max=c["k_max"])
            d = fredholm_pfaffian_discretized(kern, z)
            g = generating_series(moments, mu + eta, z)
            gap = abs(s.value - d.value)
            ok = gap <= c["tol"]
            passed &= ok
            rows.append({"t": t, "zeta": z, "series": s.value, "discretized": d.value, "oracle_partial": g,
                         "series_vs_discretized": gap, "series_vs_oracle": abs(s.value - g),
                         "tail_bound": s.info["tail_bound"], "pass": ok})
    run.write_csv(rows)
    run.write_json(passed, worst=max(r["series_vs_discretized"] for r in rows))
    return passed


@_register("mellin", {
    "mu": 1.0, "eta": 1.0, "t": [2, 4], "x": 1, "zeta": [0.1, 0.25, 0.5, [0, 0.5], [0.3, -0.4]], "tol": 1e-3,
    "seed": 0,
}, "Mellin-Barnes truncation against the oracle generating series.")
def _mellin(run: Run) -> bool:
    from betarwre.annealed_oracle import exact_moment
    from betarwre.contour_engine import generating_series, mellin_barnes_transform

    c = run.cfg
    mu, eta = _positive("mu", c["mu"]), _positive("eta", c["eta"])
    p = ModelParams(mu, eta)
    exact_params = ModelParams(Fraction(mu).limit_denominator(10**6), Fraction(eta).limit_denominator(10**6))
    rows, passed = [], True
    for t in c["t"]:
        if (t + c["x"]) % 2 != 1 or c["x"] < 1:
            raise ConfigError("need x >= 1 and t + x odd")
        moments = [exact_moment(exact_params, k, t, [c["x"]] * k).value for k in range(1, 7)]
        for zr in c["zeta"]:
            z = _complex("zeta", zr)
            try:
                r = mellin_barnes_transform(p, c["x"], t, z)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            truth = generating_series(moments, mu + eta, z)
            gap = abs(r.value - truth)
            ok = gap <= c["tol"] and abs(r.terms[1]) < abs(r.terms[0])
            passed &= ok
            rows.append({"t": t, "zeta": z, "mellin_barnes": r.value, "oracle": truth, "gap": gap,
                         "term1": abs(r.terms[0]), "term2": abs(r.terms[1]), "pass": ok})
    run.write_csv(rows)
    run.write_json(passed, worst=max(r["gap"] for r in rows))
    return passed


@_register("llt", {
    "mu": 1.0, "eta": 1.0, "t": 2000, "replicas": 2000, "x_starts": [1, 3, 5], "lattice_factor": 2.0,
    "level": 0.01, "seed": 0,
}, "Half-space local limit theorem for the return probabilities.")
def _llt(run: Run) -> bool:
    from betarwre.experiments import llt_halfspace, write_samples_csv

    c = run.cfg
    try:
        r = llt_halfspace(ModelParams(_positive("mu", c["mu"]), _positive("eta", c["eta"])), c["t"],
                          c["replicas"], c["seed"], tuple(c["x_starts"]), c["lattice_factor"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    write_samples_csv(r.samples, run.out / "llt.csv")
    passed = all(r.reports[n].p_value > c["level"] for n in ("P11", "P00")) and r.checks["mean_z"] < 4
    rec = r.to_record()
    run.write_json(passed, statistic=r.reports["P11"].statistic, p_value=r.reports["P11"].p_value,
                   reports=rec["reports"], checks=rec["checks"], binding=r.binding)
    return passed


@_register("llt-full", {
    "alpha": 1.0, "beta": 1.0, "t": 2000, "replicas": 2000, "x_tilde": [0.0, 1.0], "lattice_factor": 2.0,
    "level": 0.01, "seed": 0,
}, "Full-space local limit theorem along the drift.")
def _llt_full(run: Run) -> bool:
    from betarwre.experiments import llt_fullspace

    c = run.cfg
    fp = FullParams(_positive("alpha", c["alpha"]), _positive("beta", c["beta"]))
    samples, reports, passed = {}, {}, True
    for xt in c["x_tilde"]:
        r = llt_fullspace(fp, c["t"], float(xt), c["replicas"], c["seed"], c["lattice_factor"])
        samples[f"x_tilde={xt}"] = r.samples["P"]
        reports[str(xt)] = {**r.reports["P"].to_record(), **r.checks}
        passed &= r.reports["P"].p_value > c["level"]
    from betarwre.experiments import write_samples_csv

    write_samples_csv(samples, run.out / "llt-full.csv")
    run.write_json(passed, reports=reports, p_value=min(v["p_value"] for v in reports.values()))
    return passed


def _zconj(run: Run, params, fn) -> bool:
    c = run.cfg
    if c["t"] < max(c["ladder"]):
        raise ConfigError("ladder depths cannot exceed t")
    r = fn(params, c["t"], c["ladder"], c["x"], c["replicas"], c["seed"])
    rows = [{"x": x, **m, "ks_p": r.reports[x].p_value, "converged": r.converged[x]} for x, m in r.means.items()]
    run.write_csv(rows)
    run.write_json(True, **r.to_record())
    return True


@_register("zconj", {
    "mu": 1.0, "eta": 1.0, "t": 1000, "ladder": [50, 100, 200, 400, 800], "x": [0, 1, 2, 5], "replicas": 500,
    "seed": 0,
}, "CONJECTURE: point-to-line sums in a half-space against Gamma laws (always exits 0).")
def _zconj_half(run: Run) -> bool:
    from betarwre.experiments import z_conjecture_halfspace

    c = run.cfg
    return _zconj(run, ModelParams(_positive("mu", c["mu"]), _positive("eta", c["eta"])), z_conjecture_halfspace)


@_register("zconj-full", {
    "alpha": 1.0, "beta": 1.0, "t": 1000, "ladder": [50, 100, 200, 400, 800], "x": [0, 2, 4], "replicas": 500,
    "seed": 0,
}, "CONJECTURE: full-space point-to-line sums and the Beta-Gamma closure (always exits 0).")
def _zconj_full(run: Run) -> bool:
    from betarwre.experiments import z_conjecture_fullspace

    c = run.cfg
    return _zconj(run, FullParams(_positive("alpha", c["alpha"]), _positive("beta", c["beta"])),
                  z_conjecture_fullspace)


@_register("coalesce", {
    "mu": 1.0, "eta": 1.0, "t": [100, 400, 1600], "x": 3, "replicas": 2000, "seed": 0,
}, "Decay of sqrt(t) |P(1,1) - P(x,1)| with the non-meeting envelope.")
def _coalesce(run: Run) -> bool:
    from betarwre.experiments import coalescence_experiment

    c = run.cfg
    if c["x"] < 1 or c["x"] % 2 == 0:
        raise ConfigError("x must be odd and positive")
    try:
        tab = coalescence_experiment(ModelParams(_positive("mu", c["mu"]), _positive("eta", c["eta"])), c["t"],
                                     c["x"], c["replicas"], c["seed"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    run.write_csv(tab.rows)
    within = all(r["mean"] <= r.get("envelope", math.inf) + 4 * r["se"] for r in tab.rows)
    passed = within and tab.trend()["decreasing"]
    run.write_json(passed, **tab.to_record())
    return passed


@_register("poly", {
    "k": 4, "mu": "1", "eta": "2", "certificate": True, "seed": 0,
}, "Polynomial decomposition of P_k with an exact witness.")
def _poly(run: Run) -> bool:
    from betarwre import polydecomp as pd

    c = run.cfg
    k = c["k"]
    if not 1 <= k <= 4:
        raise ConfigError("k must lie in 1..4")
    mu, eta = _fraction("mu", c["mu"]), _fraction("eta", c["eta"])
    p = pd.build_pk(k, mu, eta)
    in_sh, rep = pd.sh_membership(p, eta)
    w = pd.bd_decompose(p, eta, mu=mu)
    witness = w.to_json() if w is not None else None
    if witness is not None:
        (run.out / "poly_witness.json").write_text(json.dumps(witness, indent=2, sort_keys=True) + "\n",
                                                   encoding="utf-8")
    cert = pd.c_rk_certificate(k) if c["certificate"] else None
    passed = in_sh and w is not None and w.exact and (cert is None or cert["certified"])
    run.write_json(passed, in_sh=in_sh, sh_report={str(r): str(v) for r, v in rep.items()},
                   residual=witness["residual"] if witness else None,
                   certificate={kk: v for kk, v in cert.items() if kk != "failures"} if cert else None)
    return passed


@_register("constants", {
    "mu": 1.0, "theta": [2.0], "seed": 0,
}, "Scaling constants x_theta, a_theta, b_theta.")
def _constants(run: Run) -> bool:
    from betarwre.contour_engine import G_function, scaling_constants

    c = run.cfg
    mu = _positive("mu", c["mu"])
    rows, passed = [], True
    for th in c["theta"]:
        try:
            s = scaling_constants(mu, float(th))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        G = lambda z: G_function(z, mu, s.x_theta) + s.a_theta * z
        h = 1e-2
        d1 = (-G(th + 2 * h) + 8 * G(th + h) - 8 * G(th - h) + G(th - 2 * h)) / (12 * h)
        d2 = (-G(th + 2 * h) + 16 * G(th + h) - 30 * G(th) + 16 * G(th - h) - G(th - 2 * h)) / (12 * h * h)
        ok = abs(d1) <= 1e-6 and abs(d2) <= 1e-6
        if mu == 1.0 and th == 2.0:
            ok &= abs(s.x_theta - 0.6) <= 1e-10
        passed &= ok
        rows.append({**s.to_record(), "dG": float(d1), "d2G": float(d2), "pass": ok})
        click.echo(f"theta={th}: x_theta={s.x_theta:.12g} a_theta={s.a_theta:.12g} b_theta={s.b_theta:.12g}")
    run.write_csv(rows)
    run.write_json(passed, constants=rows)
    return passed


@_register("env-dump", {
    "mode": "half", "params": [1.0, 1.0], "window": [0, 100, 100, 1], "replica": 0, "seed": 0,
}, "Write an environment snapshot (little-endian f64 grid with header).")
def _env_dump(run: Run) -> bool:
    from betarwre.core_model import sample_environment, write_environment

    c = run.cfg
    if c["mode"] not in ("half", "full") or len(c["params"]) != 2 or len(c["window"]) != 4:
        raise ConfigError("mode is half|full, params has two entries, window is [t_min, t_max, x_max, x_min]")
    a, b = (_positive("params", v) for v in c["params"])
    params = ModelParams(a, b) if c["mode"] == "half" else FullParams(a, b)
    try:
        env = sample_environment(params, Window(*c["window"]), c["seed"], c["replica"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    path = write_environment(env, run.out / "env.bin")
    run.write_json(True, snapshot=path.name, bytes=path.stat().st_size)
    return True


if __name__ == "__main__":
    sys.exit(main())
