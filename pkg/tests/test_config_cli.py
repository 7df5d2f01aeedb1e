import dataclasses
import json
import math

import numpy as np
import pytest

from missbias import cli, gprior, verify
from missbias.config import CANNED_MCMC, CANNED_SELECTION_MCMC, ExperimentConfig, canned_config, load_config, parse_config
from missbias.errors import ConfigError
from missbias.sampler import SELECT, FULL_MODEL

SMALL_MCMC = {"iterations": 200, "burn_in": 50, "chain_count": 2}


def write_config(tmp_path, **fields):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(fields))
    return path


# -- config -----------------------------------------------------------------


def test_defaults_resolve():
    cfg = ExperimentConfig()
    doc = cfg.resolved()
    assert doc["mechanism"] == {"kind": "threshold", "cutoff": 0.0}
    assert doc["mcmc"]["iterations"] == 20000 and doc["g"] == "n"
    assert cfg.sampler_mode() == FULL_MODEL
    assert cfg.mcmc_config().g_for(1000) == 1000.0


def test_mechanism_union():
    cfg = parse_config({"mechanism": {"kind": "band", "width": 0.3, "invert": True}, "mode": "selection"})
    assert cfg.mechanism.build().width == 0.3 and cfg.sampler_mode() == SELECT


@pytest.mark.parametrize(
    "obj,where",
    [
        ({"bogus": 1}, "bogus"),
        ({"mechanism": {"kind": "band", "width": -1}}, "width"),
        ({"mechanism": {"kind": "mar"}}, "mechanism"),
        ({"mcmc": {"iterations": 100, "burn_in": 100}}, "burn_in"),
        ({"g": -2.0}, "g"),
        ({"fixed_model": [3]}, "fixed_model"),
        ({"fixed_model": [2, 1]}, "fixed_model"),
        ({"model_prior": [0.5, 0.5, 0.5, 0.5]}, "model_prior"),
        ({"n": 3}, "n"),
        ({"seed": -1}, "seed"),
    ],
)
def test_invalid_configs_name_the_field(obj, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(obj)


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 100,\n "seed": }')
    with pytest.raises(ConfigError, match="line 2 column"):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_config_round_trip(tmp_path):
    cfg = canned_config(2, seed=7)
    path = write_config(tmp_path, **cfg.resolved())
    assert load_config(path) == cfg


def test_canned_configs():
    assert canned_config(1).mechanism.kind == "threshold"
    assert canned_config(3).mode == "selection" and canned_config(3).mechanism.invert
    assert canned_config(1).mcmc == CANNED_MCMC
    assert canned_config(3).mcmc == CANNED_SELECTION_MCMC
    assert canned_config(3, mcmc={"iterations": 10, "burn_in": 1}).mcmc.iterations == 10
    with pytest.raises(ConfigError):
        canned_config(4)
    with pytest.raises(ConfigError):
        canned_config(1, n=2)


# -- cli --------------------------------------------------------------------


def test_unknown_key_exits_2_without_output(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_config(tmp_path, surprise=True, output_dir=str(out))
    assert cli.main(["run", "--config", str(path), "--jobs", "1"]) == 2
    assert "surprise" in capsys.readouterr().err
    assert not out.exists()


def test_malformed_json_exits_2(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{")
    assert cli.main(["run", "--config", str(path), "--jobs", "1"]) == 2


def test_run_replicates_layout(tmp_path):
    out = tmp_path / "exp"
    path = write_config(tmp_path, n=60, replicates=8, mcmc=SMALL_MCMC, output_dir=str(out))
    assert cli.main(["run", "--config", str(path), "--jobs", "1"]) == 0
    reps = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert reps == [f"rep_{i:03d}" for i in range(8)]
    agg = json.loads((out / "aggregate.json").read_text())
    assert agg["replicates"] == 8
    assert json.loads((out / "config.resolved.json").read_text())["replicates"] == 8
    rep = out / "rep_003"
    for name in ("summary.json", "data.csv", "chain_0.csv", "chain_1.csv", "trace_beta1.csv", "density_beta2.csv"):
        assert (rep / name).exists()
    fingerprints = {json.loads((out / r / "summary.json").read_text())["dataset"]["fingerprint"] for r in reps}
    assert len(fingerprints) == 8


def test_run_without_censoring_selects_beta2(tmp_path):
    out = tmp_path / "none"
    path = write_config(
        tmp_path,
        mechanism={"kind": "none"},
        mode="selection",
        mcmc={"iterations": 1000, "burn_in": 100, "chain_count": 1},
        output_dir=str(out),
    )
    assert cli.main(["run", "--config", str(path), "--jobs", "1"]) == 0
    freq = json.loads((out / "rep_000" / "summary.json").read_text())["model_frequencies"]
    assert freq["(beta2)"] + freq["(beta1, beta2)"] >= 0.99
    assert not (out / "rep_000" / "density_imputed_x2.csv").exists()


def test_run_svg(tmp_path):
    out = tmp_path / "svg"
    path = write_config(tmp_path, n=50, mcmc=SMALL_MCMC, mode="selection", output_dir=str(out))
    assert cli.main(["run", "--config", str(path), "--jobs", "1", "--svg"]) == 0
    assert list((out / "rep_000").glob("*.svg"))


def test_summarize_command(tmp_path, capsys):
    out = tmp_path / "s"
    path = write_config(tmp_path, n=50, mcmc=SMALL_MCMC, output_dir=str(out))
    cli.main(["run", "--config", str(path), "--jobs", "1"])
    capsys.readouterr()
    chains = [str(out / "rep_000" / f"chain_{c}.csv") for c in range(2)]
    assert cli.main(["summarize", "--chain", *chains]) == 0
    doc = json.loads(capsys.readouterr().out)
    stored = json.loads((out / "rep_000" / "summary.json").read_text())
    assert doc["n_draws"] == 300
    assert doc["parameters"]["beta1"]["mean"] == pytest.approx(stored["parameters"]["beta1"]["mean"], rel=1e-12)


def test_summarize_missing_file(tmp_path):
    assert cli.main(["summarize", "--chain", str(tmp_path / "nope.csv")]) == 1


@pytest.mark.parametrize("strict,code", [(False, 0), (True, 1)])
def test_reproduce_strict(tmp_path, capsys, strict, code):
    out = tmp_path / "sim1"
    argv = ["reproduce", "--sim", "1", "--out", str(out), "--jobs", "1", "--iterations", "300", "--burn-in", "100"]
    assert cli.main(argv + (["--strict"] if strict else [])) == code
    text = capsys.readouterr().out
    assert "MISS  beta1_ess" in text
    assert (out / "config.resolved.json").exists() and (out / "summary.json").exists()


def test_reproduce_bad_override_exits_2(tmp_path):
    out = tmp_path / "x"
    argv = ["reproduce", "--sim", "1", "--out", str(out), "--iterations", "100", "--burn-in", "200"]
    assert cli.main(argv) == 2
    assert not out.exists()


def test_verify_passes(capsys):
    assert cli.main(["verify"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_verify_catches_broken_scatter(monkeypatch, capsys):
    original = gprior.fit

    def broken(model, X, y, g, intercept=False):
        post = original(model, X, y, g, intercept)
        yty = float(np.asarray(y) @ np.asarray(y))
        # flip the sign of the shrinkage term inside S
        flipped = 2.0 * yty - post.s_gamma
        return dataclasses.replace(post, log_ml=post.log_ml - 0.5 * post.n * math.log(flipped / post.s_gamma))

    monkeypatch.setattr(gprior, "fit", broken)
    monkeypatch.setattr(verify, "CHECKS", (verify.check_ml_quadrature,))
    assert cli.main(["verify"]) == 1
    assert "FAIL" in capsys.readouterr().out
