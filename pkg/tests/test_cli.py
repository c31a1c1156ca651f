import json
import os

import numpy as np
import pytest

from condflow.cli import OUTPUT_ROOT_ENV, main
from condflow.config import ConfigError, ExperimentConfig

MINIMAL = """
[experiment]
seed = 3
output_dir = {out}
stages = oracle-check

[data]
source = shape
shape = checkerboard
n = 200
"""

SMALL_PIPELINE = """
[experiment]
seed = 5
output_dir = {out}
stages = gen-data,train,sample,eval-tv

[data]
source = shape
shape = checkerboard
n = 256

[model]
hidden_widths = 16,16

[train]
epochs = 2
batch_size = 64
T = 0.95

[flow]
T = 0.95
N = 10

[sample]
count = 40
conditions = 4
per_condition = 30
"""


def write_config(tmp_path, text, name="cfg.ini", out="out"):
    path = tmp_path / name
    path.write_text(text.format(out=tmp_path / out))
    return path


class TestConfigParsing:
    def test_minimal_parses(self, tmp_path):
        cfg = ExperimentConfig.from_file(write_config(tmp_path, MINIMAL))
        assert cfg.seed == 3
        assert cfg.stages == ("oracle-check",)
        assert cfg.source == "shape" and cfg.source_name == "checkerboard"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            ExperimentConfig.from_string(
                "[data]\nsource = shape\nshape = rings\nbogus = 1\n")

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            ExperimentConfig.from_string("[nope]\nx = 1\n")

    def test_unknown_stage_rejected(self):
        with pytest.raises(ConfigError, match="unknown stage"):
            ExperimentConfig.from_string(
                "[experiment]\nstages = fly\n[data]\nsource = shape\n"
                "shape = rings\n")

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="missing required"):
            ExperimentConfig.from_string("[data]\nsource = csv\n")

    def test_t_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="differs"):
            ExperimentConfig.from_string(
                "[experiment]\nstages = train\n"
                "[data]\nsource = shape\nshape = rings\n"
                "[train]\nT = 0.98\n[flow]\nT = 0.5\n")

    def test_regression_dims_inferred(self):
        cfg = ExperimentConfig.from_string(
            "[data]\nsource = regression\nmodel = M1\n")
        assert cfg.spec.dx == 1 and cfg.spec.dy == 5
        cfg = ExperimentConfig.from_string(
            "[data]\nsource = regression\nmodel = M3\n")
        assert cfg.spec.dy == 1

    def test_mlp_config_assembly(self):
        cfg = ExperimentConfig.from_string(
            "[data]\nsource = shape\nshape = rings\n"
            "[model]\nhidden_widths = 8,8\noutput_norm_cap = 5.0\n")
        mlp = cfg.mlp_config()
        assert mlp.hidden_widths == (8, 8)
        assert mlp.in_dim == 3   # x, y, raw t
        assert mlp.output_norm_cap == 5.0


class TestCliRuns:
    def test_minimal_oracle_check(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        assert main(["run", "-c", str(cfg)]) == 0
        out = tmp_path / "out"
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 3
        assert manifest["stages"] == ["oracle-check"]
        assert "oracle_check.csv" in manifest["outputs"]

    def test_missing_config_errors(self, capsys):
        assert main(["run", "-c", "/nonexistent.ini"]) == 1
        assert "not found" in capsys.readouterr().err

    def test_missing_csv_errors(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text("[experiment]\nstages = gen-data\n"
                       f"output_dir = {tmp_path / 'out'}\n"
                       "[data]\nsource = csv\npath = /no/such/file.csv\n"
                       "dx = 1\ndy = 1\n")
        assert main(["run", "-c", str(cfg)]) == 1
        assert "/no/such/file.csv" in capsys.readouterr().err

    def test_small_pipeline_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_PIPELINE)
        assert main(["run", "-c", str(cfg)]) == 0
        out = tmp_path / "out"
        first = {name: (out / name).read_bytes()
                 for name in ("samples.csv", "eval_tv.csv", "model.ckpt")}
        # rerun into a second directory: all numeric outputs byte-identical
        assert main(["run", "-c", str(cfg),
                     "--output-dir", str(tmp_path / "out2")]) == 0
        for name, blob in first.items():
            assert (tmp_path / "out2" / name).read_bytes() == blob

    def test_flag_override(self, tmp_path):
        cfg = write_config(tmp_path, MINIMAL)
        out2 = tmp_path / "alt"
        assert main(["oracle-check", "-c", str(cfg),
                     "--set", f"experiment.output_dir={out2}"]) == 0
        assert (out2 / "oracle_check.csv").exists()

    def test_output_root_env(self, tmp_path, monkeypatch):
        root = tmp_path / "root"
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(MINIMAL.format(out="rel_out"))
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(root))
        monkeypatch.chdir(tmp_path)
        assert main(["run", "-c", str(cfg)]) == 0
        assert (root / "rel_out" / "manifest.json").exists()

    def test_eval_moments_pipeline(self, tmp_path):
        cfg = tmp_path / "m3.ini"
        cfg.write_text(f"""
[experiment]
seed = 2
output_dir = {tmp_path / 'm3'}
stages = train,eval-moments,eval-intervals

[data]
source = regression
model = M3
n = 256

[model]
hidden_widths = 16,16

[train]
epochs = 2
batch_size = 64
T = 0.95

[flow]
T = 0.95
N = 10

[sample]
conditions = 8
per_condition = 20
alpha = 0.05
""")
        assert main(["run", "-c", str(cfg)]) == 0
        out = tmp_path / "m3"
        assert (out / "eval_moments.csv").exists()
        text = (out / "eval_intervals.csv").read_text()
        assert text.startswith("metric,value,std")
        assert "coverage" in text

    def test_distill_stage_follows_train(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_PIPELINE)
        assert main(["run", "-c", str(cfg)]) == 0
        assert main(["distill", "-c", str(cfg)]) == 0
        out = tmp_path / "out"
        assert (out / "generator.ckpt").exists()
        assert "distill_holdout_rmse" in (out / "distill.csv").read_text()

    def test_eval_needs_model(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL_PIPELINE, name="fresh.ini",
                           out="never_trained")
        assert main(["eval-tv", "-c", str(cfg)]) == 1
        assert "train stage" in capsys.readouterr().err
