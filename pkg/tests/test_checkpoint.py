import numpy as np
import pytest

from condflow import nn
from condflow.checkpoint import (CheckpointError, load_checkpoint,
                                 save_checkpoint)
from condflow.core import DataSpec, RngStream
from condflow.synthdata import ScalingRecord
from condflow.training import OneStepGenerator, VelocityModel


def make_model(with_scaling=False):
    cfg = nn.MlpConfig.for_velocity(dx=1, dy=1, hidden_widths=(8, 8),
                                    output_norm_cap=3.0, weight_cap=2.0)
    params = nn.init_params(cfg, RngStream(0))
    x_scaling = y_scaling = None
    if with_scaling:
        x_scaling = ScalingRecord(lo=np.array([-2.0]), hi=np.array([2.0]))
        y_scaling = ScalingRecord(lo=np.array([0.0]), hi=np.array([1.0]))
    return VelocityModel(config=cfg, params=params, spec=DataSpec(dx=1, dy=1),
                         T=0.98, x_scaling=x_scaling, y_scaling=y_scaling)


class TestRoundTrip:
    def test_forward_bitwise_equal(self, tmp_path):
        model = make_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        rng = RngStream(1)
        x = rng.gauss_matrix(100, 1)
        y = rng.gauss_matrix(100, 1)
        np.testing.assert_array_equal(model.velocity(x, y, 0.5),
                                      back.velocity(x, y, 0.5))
        assert back.T == model.T
        assert back.config == model.config

    def test_save_load_save_byte_identical(self, tmp_path):
        model = make_model(with_scaling=True)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(model, p1)
        save_checkpoint(load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_scaling_restored(self, tmp_path):
        model = make_model(with_scaling=True)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        np.testing.assert_array_equal(back.x_scaling.lo, [-2.0])
        np.testing.assert_array_equal(back.y_scaling.hi, [1.0])

    def test_generator_round_trip(self, tmp_path):
        cfg = nn.MlpConfig(in_dim=2, out_dim=1, hidden_widths=(4,))
        gen = OneStepGenerator(config=cfg,
                               params=nn.init_params(cfg, RngStream(2)),
                               spec=DataSpec(dx=1, dy=1),
                               train_rmse=0.03, holdout_rmse=0.04)
        path = tmp_path / "g.ckpt"
        save_checkpoint(gen, path)
        back = load_checkpoint(path)
        assert isinstance(back, OneStepGenerator)
        assert back.holdout_rmse == 0.04
        z = RngStream(3).gauss_matrix(10, 1)
        y = np.zeros((10, 1))
        np.testing.assert_array_equal(gen.generate(z, y), back.generate(z, y))


class TestFailures:
    def test_corrupt_payload_detected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(make_model(), path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(make_model(), path)
        path.write_bytes(path.read_bytes()[:20])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"not a checkpoint at all, sorry")
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_version_mismatch_message(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(make_model(), path)
        blob = bytearray(path.read_bytes())
        blob[8] = 99   # version field follows the 8-byte magic
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_unknown_type_rejected(self, tmp_path):
        with pytest.raises(TypeError):
            save_checkpoint({"weights": []}, tmp_path / "x.ckpt")
