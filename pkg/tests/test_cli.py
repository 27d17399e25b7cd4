"""CLI dispatch, exit codes, file contracts and the config layer."""

import json

import numpy as np
import pytest

from dbstereo.cli import EXIT_CONFIG, EXIT_OK, EXIT_USAGE, dispatch
from dbstereo.config import ConfigError, RunConfig, load_run_config
from dbstereo.data.formats import load_kitti_disparity_png, load_pfm


class TestConfigLayer:
    def test_defaults_resolve(self):
        cfg = RunConfig()
        assert cfg["agg.paradigm"] == "bga"
        assert cfg["train.lambda_init"] == pytest.approx(0.3)
        assert cfg["train.lambda_final"] == pytest.approx(1.0)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            RunConfig().set("agg.paradgim", "bga")  # typo must not pass silently

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\ntrain.steps = 7\nagg.paradigm = conv3d\n")
        cfg = load_run_config(str(path), ["train.steps=9"])
        assert cfg["train.steps"] == 9          # override wins
        assert cfg["agg.paradigm"] == "conv3d"

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("train.steps = soon\n")
        with pytest.raises(ConfigError, match="bad value"):
            load_run_config(str(path), [])

    def test_bool_parsing(self):
        cfg = RunConfig()
        cfg.set("train.deterministic", "true")
        assert cfg["train.deterministic"] is True
        with pytest.raises(ConfigError):
            cfg.set("train.deterministic", "maybe")

    def test_resolved_text_roundtrips(self, tmp_path):
        cfg = RunConfig()
        cfg.set("train.steps", 5)
        cfg.dump(tmp_path / "resolved.txt")
        reparsed = RunConfig()
        reparsed.load_file(tmp_path / "resolved.txt")
        assert reparsed["train.steps"] == 5


class TestDispatchErrors:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert dispatch(["frobnicate"]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_arguments_exits_2(self):
        assert dispatch([]) == EXIT_USAGE

    def test_unknown_set_key_exits_3(self, tmp_path, capsys):
        code = dispatch(
            ["--set", "data.hieght=4", "synth-gen", "--count", "1", "--out", str(tmp_path)]
        )
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err


class TestSynthGen:
    def test_writes_samples_and_manifest(self, tmp_path):
        out = tmp_path / "ds"
        code = dispatch(
            ["--set", "data.height=64", "--set", "data.width=96", "--set", "data.d_max=16",
             "synth-gen", "--count", "4", "--out", str(out), "--seed", "1"]
        )
        assert code == EXIT_OK
        for i in range(4):
            assert (out / f"{i}_left.png").exists()
            assert (out / f"{i}_right.png").exists()
            assert (out / f"{i}_disp.pfm").exists()
        assert (out / "manifest.json").exists()
        assert (out / "resolved_config.txt").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["seed"] == 1


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_ds")
    code = dispatch(
        ["--set", "data.height=64", "--set", "data.width=96", "--set", "data.d_max=16",
         "synth-gen", "--count", "5", "--out", str(out), "--seed", "3"]
    )
    assert code == EXIT_OK
    return out


class TestEval:
    def test_gt_predictor_is_perfect(self, cli_dataset, tmp_path, capsys):
        out = tmp_path / "eval"
        code = dispatch(
            ["eval", "--ckpt", "none", "--data", str(cli_dataset), "--predictor", "gt",
             "--out", str(out)]
        )
        assert code == EXIT_OK
        table = capsys.readouterr().out
        assert "0.0000" in table
        records = [
            json.loads(line)
            for line in (out / "eval_report.jsonl").read_text().splitlines()
        ]
        aggregate = next(r for r in records if r["scope"] == "aggregate")
        assert aggregate["epe"] == 0.0
        assert aggregate["d1_1px"] == 0.0
        assert aggregate["d1_3px"] == 0.0

    def test_model_predictor_without_ckpt_is_config_error(self, cli_dataset):
        code = dispatch(["eval", "--ckpt", "none", "--data", str(cli_dataset)])
        assert code == EXIT_CONFIG


class TestTrainInferPipeline:
    @pytest.fixture(scope="class")
    def trained(self, cli_dataset, tmp_path_factory):
        out = tmp_path_factory.mktemp("cli_run")
        overrides = [
            "--set", "model.max_disparity=16",
            "--set", "train.steps=3",
            "--set", "train.crop_height=32",
            "--set", "train.crop_width=64",
            "--set", "train.batch_size=2",
            "--set", "train.log_every=1",
            "--set", "train.eval_every=3",
            "--set", "train.ckpt_every=3",
        ]
        code = dispatch(
            overrides + ["train", "--data", str(cli_dataset), "--out", str(out)]
        )
        assert code == EXIT_OK
        return out, overrides

    def test_training_artifacts(self, trained):
        out, _ = trained
        assert (out / "ckpt_3.bin").exists()
        assert (out / "latest").read_text().strip() == "ckpt_3.bin"
        assert (out / "metrics.jsonl").exists()
        assert (out / "resolved_config.txt").exists()

    def test_infer_outputs(self, trained, cli_dataset, tmp_path):
        run_dir, overrides = trained
        out = tmp_path / "infer"
        code = dispatch(
            overrides
            + [
                "infer", "--ckpt", str(run_dir),
                "--left", str(cli_dataset / "0_left.png"),
                "--right", str(cli_dataset / "0_right.png"),
                "--gt", str(cli_dataset / "0_disp.pfm"),
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        disparity, _ = load_pfm(out / "disparity.pfm")
        assert disparity.shape == (64, 96)
        kitti, valid = load_kitti_disparity_png(out / "disparity_kitti.png")
        assert kitti.shape == (64, 96)
        assert (out / "disparity_color.png").exists()
        assert (out / "error_map.png").exists()
        assert (out / "resolved_config.txt").exists()

    def test_model_eval_runs(self, trained, cli_dataset, tmp_path):
        run_dir, overrides = trained
        out = tmp_path / "eval_model"
        code = dispatch(
            overrides
            + ["eval", "--ckpt", str(run_dir), "--data", str(cli_dataset), "--out", str(out)]
        )
        assert code == EXIT_OK
        assert (out / "eval_report.jsonl").exists()


class TestSelftestCommand:
    def test_selftest_passes(self, capsys):
        assert dispatch(["selftest"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out
