from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from tnfr import cli
from tnfr import fourrooms as fr
from tnfr.mdp import Mdp

SMALL_DISK = ["--res", "32x64", "--period", "100", "--workers", "1"]
SMALL_ROOMS = ["--steps", "400", "--eval-every", "200", "--eval-episodes", "2", "--hidden", "8", "--workers", "1"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- analyze -----------------------------------------------------------------

def test_analyze_divergence_instance(capsys, tmp_path):
    code, out, _ = run(capsys, "analyze", "--instance", "two-state", "--d0", "0.9", "--phi", "1,-2", "--out", tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "analyze.json").read_text())
    tn, frr = doc["reports"]["tn_limit"], doc["reports"]["fr_limit"]
    assert tn["classification"] == "diverges" and abs(tn["radius"] - 1.295) < 1e-3
    assert frr["classification"] == "converges" and abs(frr["radius"] - 0.042) < 1e-3
    assert doc["reports"]["TN"]["classification"] == "diverges"
    assert doc["reports"]["FR"]["classification"] == "converges"
    assert "inapplicable" in doc["k_lower_bound"]["error"]
    assert "diverges" in out and "converges" in out


def test_analyze_stationary_circle_td_converges(capsys, tmp_path):
    code, _, _ = run(capsys, "analyze", "--instance", "two-state", "--d0", "0.333333", "--phi", "1,2", "--out", tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "analyze.json").read_text())
    assert doc["reports"]["TD0"]["classification"] == "converges"
    assert doc["bias_identities"]["tn_inner_at_wstar"] == 0.0


@pytest.mark.parametrize("d0,phi", [(0.9, "1,2"), (0.3, "1,2"), (0.9, "1,-2"), (0.5, "0.3,1")])
def test_analyze_kappa_zero_fr_matches_td(capsys, tmp_path, d0, phi):
    code, _, _ = run(capsys, "analyze", "--instance", "two-state", "--d0", d0, "--phi", phi, "--kappa", "0", "--out", tmp_path)
    assert code == 0
    reps = json.loads((tmp_path / "analyze.json").read_text())["reports"]
    assert reps["FR"]["classification"] == reps["TD0"]["classification"]


def test_analyze_kappa_zero_period_one_identical_reports(capsys, tmp_path):
    argv = ["analyze", "--instance", "two-state", "--d0", "0.7", "--phi", "1,2", "--kappa", "0", "--period", "1"]
    assert run(capsys, *argv, "--out", tmp_path)[0] == 0
    reps = json.loads((tmp_path / "analyze.json").read_text())["reports"]
    strip = lambda r: {k: v for k, v in r.items() if k != "kind"}  # noqa: E731
    assert strip(reps["FR"]) == strip(reps["TD0"])


def write_fixture(path, **over):
    mdp = Mdp(np.array([[[0.0, 1.0]], [[0.5, 0.5]]]), np.zeros((2, 1)), 0.99)
    doc = {"mdp": mdp.to_dict(), "phi": [[1.0], [-2.0]], "dist": [0.9, 0.1]}
    doc.update(over)
    path.write_text(json.dumps(doc, indent=2))
    return path


def test_analyze_fixture_matches_builtin(capsys, tmp_path):
    fx = write_fixture(tmp_path / "fx.json")
    assert run(capsys, "analyze", "--fixture", fx, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, "analyze", "--instance", "two-state", "--out", tmp_path / "b")[0] == 0
    a = json.loads((tmp_path / "a" / "analyze.json").read_text())
    b = json.loads((tmp_path / "b" / "analyze.json").read_text())
    assert a["reports"]["tn_limit"]["radius"] == pytest.approx(b["reports"]["tn_limit"]["radius"], abs=1e-12)


def test_analyze_fixture_parse_error_has_line_context(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "mdp": {"states": 2,\n  "actions" 1}\n}\n')
    code, _, err = run(capsys, "analyze", "--fixture", bad)
    assert code == 2
    assert "bad.json:3:" in err and '"actions" 1' in err and "^" in err


def test_analyze_fixture_missing_key(capsys, tmp_path):
    fx = tmp_path / "fx.json"
    fx.write_text(json.dumps({"mdp": {"states": 2}}))
    code, _, err = run(capsys, "analyze", "--fixture", fx)
    assert code == 2 and "actions" in err


def test_analyze_fixture_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "analyze", "--fixture", tmp_path / "nope.json")
    assert code == 1 and "nope.json" in err


def test_analyze_needs_exactly_one_source(capsys, tmp_path):
    assert run(capsys, "analyze")[0] == 2
    fx = write_fixture(tmp_path / "fx.json")
    assert run(capsys, "analyze", "--instance", "two-state", "--fixture", fx)[0] == 2


@pytest.mark.parametrize("flag,value,needle", [
    ("--d0", "1.5", "--d0"), ("--phi", "1", "--phi"), ("--gamma", "0", "gamma must be in (0,1)"),
    ("--period", "0", "--period"), ("--eta", "-1", "--eta"), ("--kappa", "-0.1", "--kappa"),
])
def test_analyze_usage_errors(capsys, flag, value, needle):
    code, _, err = run(capsys, "analyze", "--instance", "two-state", flag, value)
    assert code == 2 and needle in err


# -- disk --------------------------------------------------------------------

def test_disk_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "disk", *SMALL_DISK, "--out", tmp_path)
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["disk.csv", "disk_fr.svg", "disk_td.svg", "disk_tn.svg", "meta.json"]
    rows = list(csv.reader((tmp_path / "disk.csv").open()))
    assert len(rows) == 1 + 32 * 64
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["config"]["period"] == 100 and meta["config"]["res"] == "32x64"
    assert meta["version"] and meta["grid"]["radius_range"] == [1e-3, 1 - 1e-3]
    assert "tn_only_diverge" in out


def test_disk_deterministic_and_worker_independent(capsys, tmp_path):
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        argv = ["disk", "--res", "32x64", "--period", "100", "--workers", workers, "--out", tmp_path / name]
        assert run(capsys, *argv)[0] == 0
    a = (tmp_path / "a" / "disk.csv").read_bytes()
    assert a == (tmp_path / "b" / "disk.csv").read_bytes() == (tmp_path / "c" / "disk.csv").read_bytes()
    for alg in ("td", "tn", "fr"):
        assert (tmp_path / "a" / f"disk_{alg}.svg").read_bytes() == (tmp_path / "b" / f"disk_{alg}.svg").read_bytes()


def test_disk_bad_gamma(capsys):
    code, _, err = run(capsys, "disk", "--gamma", "1.5")
    assert code == 2 and "gamma must be in (0,1)" in err


@pytest.mark.parametrize("res", ["16x64", "32x32", "abc", "32x64x2"])
def test_disk_bad_resolution(capsys, res):
    code, _, err = run(capsys, "disk", "--res", res)
    assert code == 2 and "--res" in err


def test_disk_bad_flags(capsys):
    assert run(capsys, "disk", "--kappa", "-1")[0] == 2
    assert run(capsys, "disk", "--period", "0")[0] == 2
    assert run(capsys, "disk", "--workers", "0")[0] == 2


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["disk", "--gamma", "abc"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["nope"])
    assert exc.value.code == 2


def test_io_failure_exit_one(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "disk", *SMALL_DISK, "--out", blocker / "sub")
    assert code == 1 and "file" in err


# -- config and output root -----------------------------------------------------

def test_config_precedence(capsys, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"kappa": 0.3, "period": 50, "res": "32x64", "workers": 1}))
    assert run(capsys, "disk", "--config", conf, "--period", "70", "--out", tmp_path / "o")[0] == 0
    meta = json.loads((tmp_path / "o" / "meta.json").read_text())["config"]
    assert meta["kappa"] == 0.3  # from the file
    assert meta["period"] == 70  # flag wins
    assert meta["gamma"] == 0.99  # default


def test_config_unknown_key(capsys, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"gama": 0.3}))
    code, _, err = run(capsys, "disk", "--config", conf)
    assert code == 2 and "gama" in err


def test_config_parse_error(capsys, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text('{"gamma": }')
    code, _, err = run(capsys, "disk", "--config", conf)
    assert code == 2 and "c.json:1:" in err


def test_config_bad_value(capsys, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"gamma": "high"}))
    assert run(capsys, "disk", "--config", conf)[0] == 2


def test_meta_replays_run(capsys, tmp_path):
    assert run(capsys, "disk", *SMALL_DISK, "--kappa", "0.2", "--out", tmp_path / "a")[0] == 0
    conf = json.loads((tmp_path / "a" / "meta.json").read_text())["config"]
    conf["out"] = str(tmp_path / "b")
    (tmp_path / "replay.json").write_text(json.dumps(conf))
    assert run(capsys, "disk", "--config", tmp_path / "replay.json")[0] == 0
    assert (tmp_path / "a" / "disk.csv").read_bytes() == (tmp_path / "b" / "disk.csv").read_bytes()


def test_output_root_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert run(capsys, "analyze", "--instance", "two-state")[0] == 0
    assert (tmp_path / "root" / "analyze" / "analyze.json").exists()


# -- fourrooms -----------------------------------------------------------------

def test_fourrooms_fr_requires_kappa(capsys):
    code, _, err = run(capsys, "fourrooms", "--agent", "fr", "--epsilon", "0.5")
    assert code == 2 and "--kappa" in err


@pytest.mark.parametrize("argv", [
    ["--agent", "dqn"], ["--epsilon", "1.5"], ["--period", "0"], ["--seeds", "0"],
    ["--agent", "fr", "--kappa", "-1"], ["--optimizer", "rmsprop"], ["--epsilon", "a,b"],
])
def test_fourrooms_usage_errors(capsys, argv):
    assert run(capsys, "fourrooms", *argv)[0] == 2


def test_fourrooms_grid_expansion():
    cfg = {name: spec[0] for name, spec in {**cli.OPTIONS["fourrooms"], **cli.COMMON}.items()}
    cfg.update(agent="fr", epsilon="0.5,0.95", kappa="0.5,1,2.5", period="250,500", seeds=3)
    configs = cli.fourrooms_configs(cfg)
    assert len(configs) == 2 * 3 * 2 * 3
    assert {c.seed for c in configs} == {0, 1, 2}
    assert configs[0] == fr.ExperimentConfig(agent="fr", epsilon=0.5, kappa=0.5, period=250, seed=0)


def test_fourrooms_off_policy_grid_accepted(capsys, tmp_path):
    argv = ["fourrooms", "--agent", "fr", "--epsilon", "0.95", "--kappa", "2.5", "--period", "500", "--seeds", "2"]
    code, out, _ = run(capsys, *argv, *SMALL_ROOMS, "--out", tmp_path)
    assert code == 0 and "FR k=2.5 T=500" in out


def test_fourrooms_results_and_determinism(capsys, tmp_path):
    argv = ["fourrooms", "--agent", "fr", "--epsilon", "0.5", "--kappa", "0.5", "--period", "250", "--seeds", "3", *SMALL_ROOMS]
    assert run(capsys, *argv, "--out", tmp_path / "a", "--summary")[0] == 0
    assert run(capsys, *argv, "--out", tmp_path / "b")[0] == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    rows = list(csv.DictReader((tmp_path / "a" / "results.csv").open()))
    assert len(rows) == 3 * 2  # seeds x eval points
    for step in ("200", "400"):
        assert sorted(r["seed"] for r in rows if r["eval_step"] == step) == ["0", "1", "2"]
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert len(meta["runs"]) == 3 and meta["runs"][0]["kappa"] == 0.5
    assert (tmp_path / "a" / "summary.svg").read_text().startswith("<svg")
    assert "FR k=0.5 T=250" in json.loads((tmp_path / "a" / "summary.json").read_text())


def test_fourrooms_tn_kappa_blank(capsys, tmp_path):
    argv = ["fourrooms", "--agent", "tn", "--period", "10", "--seeds", "1", *SMALL_ROOMS, "--out", tmp_path]
    assert run(capsys, *argv)[0] == 0
    rows = list(csv.DictReader((tmp_path / "results.csv").open()))
    assert all(r["kappa"] == "" and r["agent"] == "tn" for r in rows)


# -- verify ------------------------------------------------------------------

def test_verify_filter(capsys):
    code, out, _ = run(capsys, "verify", "--filter", "corollary", "--n", "20")
    assert code == 0
    lines = [ln for ln in out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 1 and "corollary" in lines[0] and "n=20" in lines[0]


def test_verify_failure_exit_one(capsys, monkeypatch):
    from tnfr import verify

    monkeypatch.setitem(verify.CHECKS, "always_fails", (lambda n, seed: verify.CheckResult("always_fails", False, n), 1))
    code, out, err = run(capsys, "verify", "--filter", "always_fails")
    assert code == 1 and "always_fails" in err and out.startswith("FAIL")


def test_verify_unknown_filter(capsys):
    assert run(capsys, "verify", "--filter", "nothing-like-this")[0] == 2
