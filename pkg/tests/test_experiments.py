import json
import math

import numpy as np
import pytest

from betarwre import FullParams, ModelParams
from betarwre.experiments import (
    GammaLaw,
    beta_gamma_closure,
    coalescence_experiment,
    config_hash,
    halfspace_targets,
    ks_calibration,
    ks_test,
    llt_fullspace,
    llt_halfspace,
    no_meeting_probability,
    two_sample_ks,
    write_samples_csv,
    write_verdict,
    z_conjecture_fullspace,
    z_conjecture_halfspace,
)


def test_gamma_law_cdf():
    law = GammaLaw(1.0, 2.0)
    assert abs(law.cdf(2.0) - (1 - math.exp(-1))) < 1e-14
    with pytest.raises(ValueError):
        GammaLaw(0.0, 1.0)


def test_ks_constant_sample():
    # every point of the ECDF jump sits at the median of Exp(1)
    rep = ks_test(np.full(100, math.log(2)), GammaLaw(1, 1).cdf)
    assert rep.statistic >= 0.5 - 1e-12
    assert rep.p_value < 1e-10


def test_ks_errors():
    with pytest.raises(ValueError):
        ks_test(np.ones(49), GammaLaw(1, 1).cdf)
    x = np.ones(60)
    x[3] = np.nan
    with pytest.raises(ValueError):
        ks_test(x, GammaLaw(1, 1).cdf)


def test_ks_exact_sample():
    law = GammaLaw(2.5, 0.3)
    rep = ks_test(law.sample(20_000, np.random.default_rng(0)), law.cdf)
    assert rep.p_value > 0.01


def test_ks_type_one_error():
    rate = ks_calibration(resamples=200, n=2000, seed=1)
    assert rate <= 0.05


def test_two_sample_same_law():
    rng = np.random.default_rng(2)
    r = two_sample_ks(rng.gamma(2, size=3000), rng.gamma(2, size=3000))
    assert r["statistic"] < r["critical_1pct"]


def test_targets_scale():
    t = halfspace_targets(ModelParams(1.0, 1.0))
    assert t["P11"].shape == 2 and t["P00"].shape == 1
    assert abs(t["P11"].scale - 2 / math.sqrt(2 * math.pi)) < 1e-15
    lit = halfspace_targets(ModelParams(1.0, 1.0), lattice_factor=1)
    assert abs(t["P11"].mean - 2 * lit["P11"].mean) < 1e-15


def test_llt_halfspace_small():
    r = llt_halfspace(ModelParams(1.0, 1.0), 200, 400, seed=7)
    assert set(r.reports) == {"P00", "P11", "P31", "P51"}
    assert not r.binding
    # the mean of sqrt(2 pi t) P(1,1) approaches 2 (mu + eta) / mu from above
    assert abs(r.checks["mean_sqrt2pit_P11"] - 4) < 0.3
    again = llt_halfspace(ModelParams(1.0, 1.0), 200, 400, seed=7)
    assert np.array_equal(r.samples["P11"], again.samples["P11"])


def test_llt_halfspace_parity():
    with pytest.raises(ValueError):
        llt_halfspace(ModelParams(1.0, 1.0), 201, 10, seed=0)
    with pytest.raises(ValueError):
        llt_halfspace(ModelParams(1.0, 1.0), 200, 10, seed=0, x_starts=(2,))


def test_llt_fullspace_start():
    r = llt_fullspace(FullParams(2.0, 1.0), 100, 0.5, 200, seed=3)
    c = r.checks
    assert (c["start"] + 100) % 2 == 0
    assert abs(c["offset"]) <= 1
    drift = 1 / 3
    assert abs(c["start"] - c["offset"] - (-drift * 100 - 0.5 * 10)) < 1e-12
    assert c["mean_z"] < 5


def test_z_halfspace_means():
    r = z_conjecture_halfspace(ModelParams(1.0, 1.0), 200, [25, 50, 100, 200], [0, 1, 4], 200, seed=3)
    rec = r.to_record()
    assert rec["label"] == "CONJECTURE"
    for x, m in rec["means"].items():
        assert m["z"] < 4, x
    assert rec["means"]["0"]["target"] == 0.5
    inc = rec["ladder_increments"]["1"]
    assert inc[-1] < inc[0]


def test_z_fullspace_mean_and_closure():
    r = z_conjecture_fullspace(FullParams(1.0, 1.0), 200, [25, 100, 200], [0, 2], 200, seed=4)
    for m in r.means.values():
        assert abs(m["target"] - 1) < 1e-15 and m["z"] < 4
    assert r.extra["beta_gamma_closure"]["p_value"] > 0.01
    assert len(r.correlation) == 2


def test_beta_gamma_closure():
    for a, b in [(1.0, 1.0), (0.5, 2.0)]:
        assert beta_gamma_closure(a, b, n=100_000, seed=1).p_value > 0.01


def test_beta_gamma_shared_weight_fails():
    # one shared weight shrinks the variance by 2ab/(a+b+1)
    rep = beta_gamma_closure(1.0, 1.0, n=100_000, seed=1, shared_beta=True)
    assert rep.p_value < 1e-6


def test_no_meeting_probability():
    p = ModelParams(1.0, 1.0)
    assert no_meeting_probability(p, 1, 50) == 0.0
    assert no_meeting_probability(p, 4, 50) == 1.0
    q = [no_meeting_probability(p, 3, t) for t in (0, 1, 10, 100, 400)]
    assert q[0] == 1.0 and all(a >= b for a, b in zip(q, q[1:]))
    # one step: only the up/down + down/up pair from (1, 3) can meet at 2
    assert abs(q[1] - (1 - 0.5 * 0.5)) < 1e-15


def test_coalescence_small():
    tab = coalescence_experiment(ModelParams(1.0, 1.0), [50, 200], 3, 200, seed=5)
    for row in tab.rows:
        assert 0 < row["mean"] <= row["envelope"]
    assert tab.trend()["decreasing"]
    zero = coalescence_experiment(ModelParams(1.0, 1.0), [50, 200], 1, 10, seed=5)
    assert all(r["mean"] == 0 for r in zero.rows)


def test_artifacts_reproducible(tmp_path):
    r = llt_halfspace(ModelParams(1.0, 1.0), 20, 60, seed=11)
    a = write_samples_csv(r.samples, tmp_path / "a.csv").read_bytes()
    r2 = llt_halfspace(ModelParams(1.0, 1.0), 20, 60, seed=11)
    b = write_samples_csv(r2.samples, tmp_path / "b.csv").read_bytes()
    assert a == b and a.splitlines()[0] == b"replica,P00,P11,P31,P51"
    v = write_verdict(tmp_path / "v.json", "llt", r.config, 0.1, 0.5, True)
    rec = json.loads(v.read_text())
    assert rec["config_hash"] == config_hash(r.config) and rec["pass"] is True
