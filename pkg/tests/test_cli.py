"""Command-line entry point and configuration loading."""

import csv
import json

import numpy as np
import pytest

import narxdsa

from narxdsa.cli import main
from narxdsa.config import ExperimentConfig, load_config
from narxdsa.narx import load_model
from narxdsa.radio import ConfigurationError

SMALL = {
    "runs": 2,
    "loads": [0.16, 0.64],
    "noise_grid": [-130, -110, -90, -70, -50],
    "train_samples": 200,
    "narx": {"hidden_nodes": 4, "max_epochs": 3},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults_without_path(self):
        assert load_config(None) == ExperimentConfig()

    def test_roundtrip(self):
        cfg = ExperimentConfig(runs=3, loads=(0.32,))
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    @pytest.mark.parametrize("doc", ['{"bogus": 1}', '{"narx": {"bogus": 1}}', "[1, 2]", "{not json"])
    def test_rejects_bad_documents(self, tmp_path, doc):
        path = tmp_path / "c.json"
        path.write_text(doc)
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.json")

    def test_primary_count_from_load(self):
        cfg = ExperimentConfig()
        assert [cfg.n_primary(x) for x in cfg.loads] == [4, 8, 12, 16]


class TestUsageErrors:
    def test_unknown_subcommand(self, tmp_path, capsys):
        assert main(["frobnicate", "--out", str(tmp_path / "o")]) == 1
        assert not (tmp_path / "o").exists()

    def test_evaluate_nn_without_model(self, tmp_path, small_config, capsys):
        out = tmp_path / "o"
        assert main(["evaluate", "--config", str(small_config), "--out", str(out)]) == 1
        assert "--model" in capsys.readouterr().err
        assert not out.exists()

    def test_bad_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"runs": 1, "extra": true}')
        out = tmp_path / "o"
        assert main(["noise-sweep", "--config", str(bad), "--out", str(out)]) == 1
        assert not out.exists()

    def test_missing_dataset(self, tmp_path):
        out = tmp_path / "o"
        assert main(["train", "--data", str(tmp_path / "none.csv"), "--out", str(out)]) == 1
        assert not out.exists()

    def test_bad_jobs(self, tmp_path):
        out = tmp_path / "o"
        assert main(["noise-sweep", "--jobs", "0", "--out", str(out)]) == 1
        assert not out.exists()

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.strip() == narxdsa.__version__


class TestRuns:
    def test_noise_sweep(self, tmp_path, small_config):
        out = tmp_path / "o"
        assert main(["noise-sweep", "--config", str(small_config), "--out", str(out)]) == 0
        table = rows(out / "noise_sweep.csv")
        assert len(table) == 2 * 5
        assert list(table[0]) == ["load", "noise_dbm", "pn_kbps", "rel_change"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "noise-sweep" and manifest["finished"]
        assert manifest["master_seed"] == 2024

    def test_default_noise_grid_row_count(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"runs": 1}))
        out = tmp_path / "o"
        assert main(["noise-sweep", "--config", str(path), "--out", str(out)]) == 0
        assert len(rows(out / "noise_sweep.csv")) == 4 * 15

    def test_seed_override_changes_output(self, tmp_path, small_config):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["noise-sweep", "--config", str(small_config), "--out", str(a)]) == 0
        assert main(["noise-sweep", "--config", str(small_config), "--out", str(b), "--seed", "7"]) == 0
        assert (a / "noise_sweep.csv").read_bytes() != (b / "noise_sweep.csv").read_bytes()
        assert json.loads((b / "manifest.json").read_text())["master_seed"] == 7

    def test_gen_data(self, tmp_path, small_config):
        out = tmp_path / "o"
        assert main(["gen-data", "--config", str(small_config), "--out", str(out)]) == 0
        table = rows(out / "dataset.csv")
        assert len(table) >= 200
        assert {r["u2_type"] for r in table} <= {"0", "1", "2"}
        assert json.loads((out / "manifest.json").read_text())["extra"]["samples"] == len(table)

    def test_pn_only_without_model(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(dict(SMALL, policies=["pn_only", "fm_baseline"])))
        out = tmp_path / "o"
        assert main(["evaluate", "--config", str(path), "--out", str(out), "--jobs", "1"]) == 0
        mc = rows(out / "monte_carlo.csv")
        assert {r["policy"] for r in mc} == {"pn_only", "fm_baseline"}
        assert len(mc) == 2 * 2 * 2 + 2 * 2
        assert rows(out / "cqi_hist.csv") == []
        for r in mc:
            if r["policy"] == "pn_only":
                assert float(r["rel_change"]) == 0.0 and float(r["sn_kbps"]) == 0.0

    def test_train_then_evaluate(self, tmp_path, small_config):
        train_out, eval_out = tmp_path / "t", tmp_path / "e"
        assert main(["train", "--config", str(small_config), "--out", str(train_out)]) == 0
        for name in ("model.txt", "training_log.csv", "dataset.csv", "manifest.json"):
            assert (train_out / name).is_file()
        cfg = load_config(small_config)
        model = load_model(train_out / "model.txt", cfg.narx)
        assert model.config.hidden_nodes == 4
        log = rows(train_out / "training_log.csv")
        # epoch 0 is the untrained evaluation
        assert len(log) == 4 and log[0]["epoch"] == "0"
        manifest = json.loads((train_out / "manifest.json").read_text())
        assert manifest["extra"]["best_epoch"] >= 0 and np.isfinite(manifest["extra"]["best_val_mse"])

        assert main(["evaluate", "--config", str(small_config), "--out", str(eval_out),
                     "--model", str(train_out / "model.txt"),
                     "--data", str(train_out / "dataset.csv"), "--jobs", "2"]) == 0
        for name in ("noise_sweep.csv", "monte_carlo.csv", "sn_cdf.csv", "cqi_hist.csv"):
            assert (eval_out / name).is_file()
        policies = {r["policy"] for r in rows(eval_out / "monte_carlo.csv")}
        assert policies == set(ExperimentConfig().policies)
        hist = rows(eval_out / "cqi_hist.csv")
        assert len(hist) == 4 * 2
        for load in ("0.16", "0.64"):
            assert sum(float(r["freq"]) for r in hist if r["load"] == load) == pytest.approx(1.0)

    def test_train_from_existing_dataset(self, tmp_path, small_config):
        gen, out = tmp_path / "g", tmp_path / "o"
        assert main(["gen-data", "--config", str(small_config), "--out", str(gen)]) == 0
        assert main(["train", "--config", str(small_config), "--out", str(out),
                     "--data", str(gen / "dataset.csv")]) == 0
        assert not (out / "dataset.csv").exists()
        assert (out / "model.txt").is_file()

    def test_runtime_failure_exit_code(self, tmp_path, small_config):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["noise-sweep", "--config", str(small_config), "--out", str(blocker / "sub")]) == 2
