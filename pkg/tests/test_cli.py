import json

import pytest
from click.testing import CliRunner

from betarwre.cli import ConfigError, main, merge_config
from betarwre.core_model import read_environment

COMMANDS = ["moments", "pfaffian", "mellin", "llt", "llt-full", "zconj", "zconj-full", "coalesce", "poly",
            "constants", "env-dump"]


def _run(tmp_path, args, config=None):
    argv = list(args) + ["--out", str(tmp_path / "out")]
    if config is not None:
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(config))
        argv += ["--config", str(p)]
    return CliRunner().invoke(main, argv)


def _verdict(tmp_path, name):
    return json.loads((tmp_path / "out" / f"{name}.json").read_text())


def test_help_lists_everything():
    r = CliRunner().invoke(main, ["--help"])
    assert r.exit_code == 0
    for c in COMMANDS:
        assert c in r.output
    for c in COMMANDS:
        sub = CliRunner().invoke(main, [c, "--help"])
        assert "--seed" in sub.output and "--out" in sub.output


def test_merge_config():
    d = {"a": 1, "b": 0.5, "c": [1]}
    assert merge_config(d, {"b": 2}) == {"a": 1, "b": 2.0, "c": [1]}
    with pytest.raises(ConfigError):
        merge_config(d, {"zz": 1})
    with pytest.raises(ConfigError):
        merge_config(d, {"a": 1.5})


def test_moments_small(tmp_path):
    r = _run(tmp_path, ["moments", "--seed", "0x10"], {"k": [1, 2], "t": [2, 3], "mc_replicas": 5000})
    assert r.exit_code == 0, r.output
    v = _verdict(tmp_path, "moments")
    assert v["pass"] and v["config"]["seed"] == 16
    rows = (tmp_path / "out" / "moments.csv").read_text().splitlines()
    assert rows[0].startswith("mu,eta,k,t,x,oracle")
    # the 11/18 anchor row
    assert any(row.startswith("1.0,1.0,2,2,1 1,0.6111111111111") for row in rows)


def test_moments_parity_is_config_error(tmp_path):
    r = _run(tmp_path, ["moments"], {"cases": [[1, 2, [2]]]})
    assert r.exit_code == 2


def test_bad_config_file(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert CliRunner().invoke(main, ["constants", "--config", str(p)]).exit_code == 2
    assert _run(tmp_path, ["constants"], {"nope": 1}).exit_code == 2
    assert _run(tmp_path, ["constants", "--seed", "banana"]).exit_code == 2


def test_constants_anchor(tmp_path):
    r = _run(tmp_path, ["constants"])
    assert r.exit_code == 0 and "x_theta=0.6 " in r.output
    assert abs(_verdict(tmp_path, "constants")["constants"][0]["x_theta"] - 0.6) < 1e-10


def test_poly_witness(tmp_path):
    r = _run(tmp_path, ["poly"], {"k": 2})
    assert r.exit_code == 0
    w = json.loads((tmp_path / "out" / "poly_witness.json").read_text())
    assert w["residual"] == "0" and w["k"] == 2


def test_pfaffian_breach_exit(tmp_path):
    # truncation after one term cannot reach 1e-6 at |zeta| = 1
    r = _run(tmp_path, ["pfaffian"], {"t": [2], "zeta": [1.0], "k_max": 1})
    assert r.exit_code == 1
    assert not _verdict(tmp_path, "pfaffian")["pass"]


def test_pfaffian_pass(tmp_path):
    r = _run(tmp_path, ["pfaffian"], {"t": [3], "zeta": [0.3, [0, 0.3]], "k_max": 6})
    assert r.exit_code == 0, r.output


def test_mellin(tmp_path):
    r = _run(tmp_path, ["mellin"], {"t": [2], "zeta": [0.3]})
    assert r.exit_code == 0, r.output
    assert _run(tmp_path, ["mellin"], {"t": [2], "zeta": [-0.3]}).exit_code == 2


def test_llt_reproducible(tmp_path):
    cfg = {"t": 40, "replicas": 60}
    assert _run(tmp_path, ["llt", "--seed", "5"], cfg).exit_code in (0, 1)
    a = (tmp_path / "out" / "llt.csv").read_bytes()
    b_json = (tmp_path / "out" / "llt.json").read_bytes()
    _run(tmp_path, ["llt", "--seed", "5"], cfg)
    assert (tmp_path / "out" / "llt.csv").read_bytes() == a
    assert (tmp_path / "out" / "llt.json").read_bytes() == b_json
    assert _run(tmp_path, ["llt"], {"t": 41, "replicas": 60}).exit_code == 2


def test_llt_full_runs(tmp_path):
    r = _run(tmp_path, ["llt-full"], {"t": 50, "replicas": 100, "x_tilde": [0.0]})
    assert r.exit_code in (0, 1)
    assert "0.0" in _verdict(tmp_path, "llt-full")["reports"]


def test_conjectures_exit_zero(tmp_path):
    r = _run(tmp_path, ["zconj"], {"t": 60, "ladder": [10, 20], "x": [0, 3], "replicas": 60})
    assert r.exit_code == 0
    assert _verdict(tmp_path, "zconj")["label"] == "CONJECTURE"
    r = _run(tmp_path, ["zconj-full"], {"t": 60, "ladder": [10, 20], "x": [0], "replicas": 60})
    assert r.exit_code == 0
    assert _verdict(tmp_path, "zconj-full")["beta_gamma_closure"]["p_value"] > 0.01


def test_coalesce(tmp_path):
    r = _run(tmp_path, ["coalesce"], {"t": [50, 200], "replicas": 200})
    assert r.exit_code == 0, r.output
    assert _run(tmp_path, ["coalesce"], {"x": 2}).exit_code == 2


def test_env_dump(tmp_path):
    r = _run(tmp_path, ["env-dump", "--seed", "7"], {"window": [0, 9, 5, 1]})
    assert r.exit_code == 0
    head, grid = read_environment(tmp_path / "out" / "env.bin")
    assert head["seed"] == 7 and grid.shape == (10, 5)


def test_group_level_options(tmp_path):
    r = CliRunner().invoke(main, ["--out", str(tmp_path / "g"), "--threads", "1", "constants"])
    assert r.exit_code == 0
    assert (tmp_path / "g" / "constants.json").exists()
