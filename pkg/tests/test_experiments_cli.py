import json
import subprocess
import sys

import numpy as np
import pytest

from abchmm import cli, experiments, sampling
from abchmm.errors import ConfigError


# ---------------------------------------------------------------------------
# experiment configuration


def test_config_requires_preset_and_seed():
    with pytest.raises(ConfigError, match="'preset'"):
        experiments.ExperimentConfig.from_dict({"seed": 1})
    with pytest.raises(ConfigError, match="'seed'"):
        experiments.ExperimentConfig.from_dict({"preset": "two_point"})
    with pytest.raises(ConfigError, match="'preset'"):
        experiments.ExperimentConfig.from_dict({"preset": "nope", "seed": 1})


def test_config_rejects_unknown_param():
    with pytest.raises(ConfigError, match="'n_regimes'"):
        experiments.ExperimentConfig.from_dict(
            {"preset": "two_point", "seed": 1, "n_regimes": 3})


def test_config_rejects_bad_seed():
    with pytest.raises(ConfigError, match="'seed'"):
        experiments.ExperimentConfig.from_dict(
            {"preset": "two_point", "seed": -1})
    with pytest.raises(ConfigError, match="'seed'"):
        experiments.ExperimentConfig.from_dict(
            {"preset": "two_point", "seed": 1.5})


def test_config_overrides_merge():
    c = experiments.ExperimentConfig.from_dict(
        {"preset": "two_point", "seed": 4, "n": 40})
    assert c.params["n"] == 40
    assert c.params["epsilon"] == 1.5


def test_load_config_json_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text('{"preset": "two_point", "seed": 2}')
    c = experiments.load_experiment_config(p)
    assert c.preset == "two_point" and c.seed == 2
    with pytest.raises(ConfigError, match="JSON"):
        experiments.load_experiment_config("{broken")


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv(experiments.THREADS_ENV, raising=False)
    assert experiments.resolve_workers(3) == 3
    assert 1 <= experiments.resolve_workers() <= 4
    monkeypatch.setenv(experiments.THREADS_ENV, "2")
    assert experiments.resolve_workers() == 2
    monkeypatch.setenv(experiments.THREADS_ENV, "zero")
    with pytest.raises(ConfigError, match=experiments.THREADS_ENV):
        experiments.resolve_workers()
    monkeypatch.setenv(experiments.THREADS_ENV, "0")
    with pytest.raises(ConfigError, match=experiments.THREADS_ENV):
        experiments.resolve_workers()
    with pytest.raises(ConfigError):
        experiments.resolve_workers(0)


# ---------------------------------------------------------------------------
# experiment runs


def test_run_dirs_version(tmp_path):
    cfg = {"preset": "two_point", "seed": 3, "n": 40}
    first = experiments.run_experiment(cfg, tmp_path, workers=1)
    second = experiments.run_experiment(cfg, tmp_path, workers=1)
    assert first.name == "run-001"
    assert second.name == "run-002"
    assert (first / "results.csv").read_bytes() \
        == (second / "results.csv").read_bytes()
    assert json.loads((first / "manifest.json").read_text())["results_sha256"] \
        == json.loads((second / "manifest.json").read_text())["results_sha256"]


def test_two_point_headline(tmp_path):
    run = experiments.run_experiment({"preset": "two_point", "seed": 3},
                                     tmp_path, workers=1)
    derived = json.loads((run / "manifest.json").read_text())["derived"]
    assert derived["abc_theta_hat"] == 0.0
    assert abs(derived["noisy_abc_theta_hat"] - 1.0) < 0.15


def test_worker_count_does_not_change_bytes(tmp_path):
    cfg = {"preset": "bias_curve", "seed": 5, "n": 200, "n_replicates": 2,
           "epsilons": [0.3, 0.6]}
    serial = experiments.run_experiment(cfg, tmp_path / "a", workers=1)
    pooled = experiments.run_experiment(cfg, tmp_path / "b", workers=2)
    assert (serial / "results.csv").read_bytes() \
        == (pooled / "results.csv").read_bytes()
    assert (serial / "summary.csv").read_bytes() \
        == (pooled / "summary.csv").read_bytes()
    a = json.loads((serial / "manifest.json").read_text())
    b = json.loads((pooled / "manifest.json").read_text())
    assert a == b


def test_results_csv_is_rfc4180(tmp_path):
    run = experiments.run_experiment({"preset": "two_point", "seed": 3},
                                     tmp_path, workers=1)
    raw = (run / "results.csv").read_bytes()
    assert b"\r\n" in raw
    header = raw.split(b"\r\n")[0].decode()
    assert header == "task,method,theta_hat,log_value"
    assert (run / "plot.gp").exists() is False  # two_point has no curve


def test_bias_curve_outputs(tmp_path):
    cfg = {"preset": "bias_curve", "seed": 5, "n": 150, "n_replicates": 2,
           "epsilons": [0.3, 0.6]}
    run = experiments.run_experiment(cfg, tmp_path, workers=1)
    rows = (run / "results.csv").read_bytes().decode().strip().split("\r\n")
    assert len(rows) == 1 + 4  # header + 2 eps x 2 reps
    assert (run / "plot.gp").read_text().startswith("set datafile")
    manifest = json.loads((run / "manifest.json").read_text())
    assert "slope" in manifest["derived"]
    assert "timestamp" not in json.dumps(manifest).lower()


# ---------------------------------------------------------------------------
# command line


def run_cli(argv):
    return cli.main(argv)


def test_cli_simulate_estimate_round_trip(tmp_path, capsys):
    data = tmp_path / "series.csv"
    rc = run_cli(["simulate", "--model", "iid_pm_theta", "--theta", "1.0",
                  "--n", "60", "--seed", "4", "--out", str(data)])
    assert rc == 0
    capsys.readouterr()
    rc = run_cli(["estimate", "--method", "abc", "--model", "iid_pm_theta",
                  "--data", str(data), "--epsilon", "1.5", "--seed", "4"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "theta_hat: 0" in out.splitlines()[0]


def test_cli_pathology_example(capsys):
    rc = run_cli(["estimate", "--method", "abc", "--model", "iid_pm_theta",
                  "--theta-star", "1.0", "--epsilon", "1.5", "--n", "100",
                  "--seed", "7"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "theta_hat: 0"


def test_cli_likelihood_oracle_vs_particle(tmp_path, capsys):
    data = tmp_path / "g.csv"
    run_cli(["simulate", "--model", "finite_gaussian", "--theta", "0.8",
             "--n", "30", "--seed", "2", "--out", str(data)])
    capsys.readouterr()
    rc = run_cli(["likelihood", "--model", "finite_gaussian", "--theta", "0.8",
                  "--data", str(data), "--epsilon", "0.5", "--estimator",
                  "oracle", "--json"])
    assert rc == 0
    oracle_val = json.loads(capsys.readouterr().out)["log_ball_probability"]
    rc = run_cli(["likelihood", "--model", "finite_gaussian", "--theta", "0.8",
                  "--data", str(data), "--epsilon", "0.5", "--n-particles",
                  "4000", "--seed", "1", "--json"])
    assert rc == 0
    particle = json.loads(capsys.readouterr().out)
    assert abs(particle["log_ball_probability"] - oracle_val) < 1.0
    assert particle["collapsed_at"] is None


def test_cli_exit_codes(tmp_path, capsys):
    # unknown model -> configuration error
    assert run_cli(["estimate", "--method", "abc", "--model", "nope",
                    "--theta-star", "1.0", "--epsilon", "1.0", "--n", "10",
                    "--seed", "0"]) == 2
    # broken hyper JSON -> configuration error
    assert run_cli(["simulate", "--model", "finite_gaussian", "--hyper",
                    "{broken", "--theta", "0.5", "--n", "5", "--seed", "0",
                    "--out", str(tmp_path / "x.csv")]) == 2
    # missing data source -> configuration error
    assert run_cli(["estimate", "--method", "abc", "--model", "iid_pm_theta",
                    "--epsilon", "1.0", "--seed", "0"]) == 2
    # collapse everywhere -> estimation failure
    assert run_cli(["estimate", "--method", "abc", "--model", "iid_pm_theta",
                    "--theta-star", "1.0", "--epsilon", "1e-6", "--n", "30",
                    "--seed", "3", "--objective", "smc", "--optimizer",
                    "grid", "--grid-points", "6"]) == 1
    err = capsys.readouterr().err
    assert "estimation failed" in err


def test_cli_estimate_out_file(tmp_path, capsys):
    out = tmp_path / "fit.json"
    rc = run_cli(["estimate", "--method", "noisy_abc", "--model",
                  "iid_pm_theta", "--theta-star", "1.0", "--epsilon", "1.5",
                  "--n", "200", "--seed", "2", "--out", str(out), "--json"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert json.loads(out.read_text())["theta_hat"] == payload["theta_hat"]
    assert abs(payload["theta_hat"][0] - 1.0) < 0.2


def test_cli_fisher_json(capsys):
    rc = run_cli(["fisher", "--model", "finite_gaussian", "--theta", "0.8",
                  "--n", "40", "--replicates", "200", "--seed", "1",
                  "--epsilon", "0.3", "--json"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["epsilon"] == 0.3
    assert len(payload["matrix"]) == 1


def test_cli_experiment_env_thread_independence(tmp_path):
    # the environment variable must steer the pool without touching output
    cmd = [sys.executable, "-m", "abchmm.cli", "experiment", "--preset",
           "two_point", "--seed", "6", "--set", "n=40"]
    outs = []
    for threads, sub in (("1", "t1"), ("2", "t2")):
        r = subprocess.run(cmd + ["--out", str(tmp_path / sub)],
                           capture_output=True, text=True,
                           env={"ABC_HMM_THREADS": threads,
                                "PATH": "/usr/bin:/bin"})
        assert r.returncode == 0, r.stderr
        outs.append((tmp_path / sub / "run-001" / "results.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_experiment_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"preset": "two_point", "seed": 3, "n": 40}')
    rc = run_cli(["experiment", "--config", str(cfg), "--out",
                  str(tmp_path / "runs")])
    assert rc == 0
    assert "abc_theta_hat: 0.0" in capsys.readouterr().out
    # bad override key comes back as a configuration error
    rc = run_cli(["experiment", "--preset", "two_point", "--seed", "1",
                  "--set", "bogus=3", "--out", str(tmp_path / "runs")])
    assert rc == 2


def test_cli_model_config_file(tmp_path, capsys):
    mc = tmp_path / "model.json"
    mc.write_text(json.dumps({"model": "finite_gaussian",
                              "hyper": {"param": "scale"}}))
    data = tmp_path / "d.csv"
    run_cli(["simulate", "--model-config", str(mc), "--theta", "0.5",
             "--n", "20", "--seed", "1", "--out", str(data)])
    capsys.readouterr()
    rc = run_cli(["likelihood", "--model-config", str(mc), "--theta", "0.5",
                  "--data", str(data), "--estimator", "oracle"])
    assert rc == 0
    assert "log_likelihood" in capsys.readouterr().out
