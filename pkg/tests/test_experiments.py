import csv
import json

import numpy as np
import pytest

from paritylab import cli, experiments
from paritylab.errors import ConfigError
from paritylab.experiments import ExperimentConfig, load_config, parse_config_text
from paritylab.mnist import FILES, write_idx


def tiny_synthetic(tmp_path, **kw):
    base = dict(kind="synthetic", n=14, k=3, q=16, steps=4, seeds=(0,), mode="mc", mc_samples=256,
                eval_samples=500, features=32, out=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_parsing_and_overrides(tmp_path):
    text = "# comment\nn = 20\nseeds = 1, 2 3\nmode = exact  # trailing\nbaselines = gaussian-rff\nlambda_tail = 0.01\n"
    vals = parse_config_text(text)
    assert vals == {"n": 20, "seeds": (1, 2, 3), "mode": "exact", "baselines": ("gaussian-rff",), "lambda_tail": 0.01}
    p = tmp_path / "c.cfg"
    p.write_text(text)
    cfg = load_config(p, {"n": 30, "q": None})
    assert cfg.n == 30 and cfg.q == ExperimentConfig().q and cfg.seeds == (1, 2, 3)


@pytest.mark.parametrize("text", ["bogus = 1", "n 5", "n = five", "k = 4", "mode = approx", "seeds ="])
def test_config_errors(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/cfg")


def test_empty_config_uses_defaults():
    cfg = load_config(None)
    assert cfg.to_dict() == ExperimentConfig().to_dict()


def test_hash_ignores_output_root(tmp_path):
    a = tiny_synthetic(tmp_path / "a")
    b = tiny_synthetic(tmp_path / "b")
    assert a.digest() == b.digest()
    assert tiny_synthetic(tmp_path, q=17).digest() != a.digest()


def _read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_synthetic_run_is_byte_reproducible(tmp_path):
    cfg = tiny_synthetic(tmp_path)
    s1 = experiments.run_synthetic_separation(cfg, log=lambda m: None)
    d = cfg.run_dir()
    first = {p.name: p.read_bytes() for p in d.iterdir()}
    experiments.run_synthetic_separation(cfg, log=lambda m: None)
    second = {p.name: p.read_bytes() for p in d.iterdir()}
    assert set(first) == {"curves.csv", "curves.svg", "summary.json"}
    # the summary carries wall-clock seconds; everything else must match byte for byte
    assert first["curves.csv"] == second["curves.csv"] and first["curves.svg"] == second["curves.svg"]
    j1, j2 = json.loads(first["summary.json"]), json.loads(second["summary.json"])
    for j in (j1, j2):
        for s in j["seeds"]:
            s.pop("seconds")
    assert j1 == j2
    rows = _read_rows(d / "curves.csv")
    models = {r["model"] for r in rows}
    assert models == {"relu6-net/seed0", "relu-random/seed0", "gaussian-rff/seed0"}
    assert len(rows) == len(models) * (cfg.steps + 1)
    assert s1["linear_ceiling"] == 0.75
    assert set(s1["seeds"][0]["hardness_bounds"]) == {"1.0", "10.0"}


def test_summary_recomputable_from_csv(tmp_path):
    cfg = tiny_synthetic(tmp_path, seeds=(0, 1))
    summary = experiments.run_synthetic_separation(cfg, log=lambda m: None)
    rows = [(r["model"], int(r["step"]), float(r["accuracy"]), float(r["loss"])) for r in _read_rows(cfg.run_dir() / "curves.csv")]
    assert experiments.curve_summary(rows) == summary["per_model"]
    for s in summary["seeds"]:
        pm = summary["per_model"][f"relu6-net/seed{s['seed']}"]
        assert pm["best_accuracy"] == s["network"]["max_accuracy"]


def test_separator_infeasible_is_recorded(tmp_path):
    cfg = tiny_synthetic(tmp_path, q=2)
    s = experiments.run_synthetic_separation(cfg, log=lambda m: None)
    sep = s["seeds"][0]["separator"]
    assert sep["feasible"] is False and "infeasible" in sep["reason"]


def _fake_mnist(directory, count=200):
    g = np.random.default_rng(0)
    labels = g.integers(0, 10, size=count).astype(np.uint8)
    # each digit gets a distinct bright column so the task is learnable
    imgs = np.zeros((count, 28, 28), dtype=np.uint8)
    imgs[np.arange(count), :, 2 * labels.astype(int) + 3] = 255
    for split in ("train", "test"):
        write_idx(directory / FILES[f"{split}_images"], imgs)
        write_idx(directory / FILES[f"{split}_labels"], labels)


def test_mnist_pipeline_on_synthetic_idx(tmp_path):
    data = tmp_path / "mnist"
    data.mkdir()
    _fake_mnist(data)
    cfg = ExperimentConfig(kind="mnist", k=1, epochs=2, hidden=16, train_strips=300, test_strips=100,
                           mnist_dir=str(data), out=str(tmp_path / "runs"))
    s = experiments.run_mnist_parity(cfg, log=lambda m: None)
    assert set(s["models"]) == set(experiments.MNIST_MODELS)
    rows = _read_rows(cfg.run_dir() / "curves.csv")
    assert len(rows) == 4 * (cfg.epochs + 1)
    assert s["models"]["relu-net"]["final_test_accuracy"] >= 0.9


def test_mnist_missing_data(tmp_path):
    cfg = ExperimentConfig(kind="mnist", k=1, mnist_dir=str(tmp_path / "none"), out=str(tmp_path))
    with pytest.raises(FileNotFoundError):
        experiments.run_mnist_parity(cfg)


def test_theory_suite_subset_and_gate_ab(tmp_path):
    cfg = ExperimentConfig(kind="verify", out=str(tmp_path))
    only = ["zero_gradient", "good_separator_staircase", "gate_sensitivity", "hardness_bound"]
    rep, code = experiments.run_theory_suite(cfg, log=lambda m: None, fast=True, only=only)
    assert code == 0 and set(rep["checks"]) == set(only)
    assert (cfg.run_dir() / "zero_gradient.json").exists()
    cfg2 = ExperimentConfig(kind="verify", sigma_prime="positive", out=str(tmp_path))
    rep2, code2 = experiments.run_theory_suite(cfg2, log=lambda m: None, fast=True, only=only)
    assert code2 == 0
    assert rep2["checks"]["good_separator_staircase"]["errors"] == rep["checks"]["good_separator_staircase"]["errors"]
    assert rep["checks"]["zero_gradient"]["passed"] and rep2["checks"]["zero_gradient"]["passed"]
    assert rep2["checks"]["gate_sensitivity"]["bias_quantiles"] != rep["checks"]["gate_sensitivity"]["bias_quantiles"]


def test_theory_suite_collects_errors(tmp_path, monkeypatch):
    def boom():
        raise RuntimeError("kaboom")

    real = experiments.theory_checks
    monkeypatch.setattr(experiments, "theory_checks", lambda *a, **k: {**real(*a, **k), "broken": boom})
    cfg = ExperimentConfig(kind="verify", out=str(tmp_path))
    rep, code = experiments.run_theory_suite(cfg, log=lambda m: None, fast=True, only=["hardness_bound", "broken"])
    assert code == 1 and rep["failed"] == ["broken"] and "kaboom" in rep["checks"]["broken"]["error"]
    assert rep["checks"]["hardness_bound"]["passed"]


# ---------------------------------------------------------------- CLI


def test_cli_bound(capsys):
    assert cli.main(["bound", "--N", "4", "--B", str(2 * 2**0.5), "--k", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["bound"]) < 1e-15


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("nonsense = 1\n")
    assert cli.main(["synthetic", "--config", str(p)]) == 2
    assert cli.main(["mnist", "--out", str(tmp_path), "--k", "1", "--mnist-dir", str(tmp_path / "nope")]) == 2


def test_cli_verify_only(tmp_path):
    assert cli.main(["verify", "--fast", "--only", "hardness_bound", "--out", str(tmp_path)]) == 0


def test_cli_synthetic_flags_override_config(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text("n = 30\nq = 64\nsteps = 50\nfeatures = 16\neval_samples = 300\n")
    code = cli.main(["synthetic", "--config", str(p), "--n", "12", "--q", "8", "--steps", "2", "--mc-samples", "128",
                     "--seed", "3", "--out", str(tmp_path / "r")])
    assert code == 0
    run_dir = capsys.readouterr().out.splitlines()[0]
    summary = json.loads(open(f"{run_dir}/summary.json").read())
    assert summary["config"]["n"] == 12 and summary["config"]["q"] == 8 and summary["config"]["seeds"] == [3]
    assert summary["config"]["features"] == 16
