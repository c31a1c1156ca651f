"""Binary model checkpoints.

Layout: 8-byte magic, u32 version, u32 header length, JSON header (UTF-8,
sorted keys), float64 little-endian parameter payload, u32 CRC32 of header
plus payload. The JSON header is rendered deterministically, so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import math
import struct
import zlib

import numpy as np

from . import nn
from .core import DataSpec
from .synthdata import ScalingRecord
from .training import OneStepGenerator, VelocityModel

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"CFLOWCKP"
_VERSION = 1


class CheckpointError(Exception):
    """Unreadable, corrupt, or wrong-version checkpoint file."""


def _cap(value: float):
    return None if math.isinf(value) else value


def _uncap(value) -> float:
    return math.inf if value is None else float(value)


def _scaling_to_json(record):
    if record is None:
        return None
    return {"lo": record.lo.tolist(), "hi": record.hi.tolist()}


def _scaling_from_json(obj):
    if obj is None:
        return None
    return ScalingRecord(lo=np.asarray(obj["lo"]), hi=np.asarray(obj["hi"]))


def _config_to_json(config: nn.MlpConfig):
    return {
        "in_dim": config.in_dim,
        "out_dim": config.out_dim,
        "hidden_widths": list(config.hidden_widths),
        "output_norm_cap": _cap(config.output_norm_cap),
        "weight_cap": _cap(config.weight_cap),
        "fourier_features_t": config.fourier_features_t,
    }


def _config_from_json(obj) -> nn.MlpConfig:
    return nn.MlpConfig(
        in_dim=int(obj["in_dim"]),
        out_dim=int(obj["out_dim"]),
        hidden_widths=tuple(int(w) for w in obj["hidden_widths"]),
        output_norm_cap=_uncap(obj["output_norm_cap"]),
        weight_cap=_uncap(obj["weight_cap"]),
        fourier_features_t=int(obj["fourier_features_t"]),
    )


def _flatten(params: nn.MlpParams) -> np.ndarray:
    pieces = []
    for w, b in zip(params.weights, params.biases):
        pieces.append(w.ravel())
        pieces.append(b.ravel())
    return np.concatenate(pieces)


def _unflatten(config: nn.MlpConfig, flat: np.ndarray) -> nn.MlpParams:
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in config.layer_dims():
        weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    if pos != flat.size:
        raise CheckpointError(
            f"parameter payload has {flat.size} values, architecture needs {pos}")
    return nn.MlpParams(weights=weights, biases=biases)


def save_checkpoint(model, path) -> None:
    """Accepts a VelocityModel or a OneStepGenerator."""
    if isinstance(model, VelocityModel):
        header = {
            "kind": "velocity",
            "mlp": _config_to_json(model.config),
            "spec": {"dx": model.spec.dx, "dy": model.spec.dy},
            "T": model.T,
            "x_scaling": _scaling_to_json(model.x_scaling),
            "y_scaling": _scaling_to_json(model.y_scaling),
        }
        params = model.params
    elif isinstance(model, OneStepGenerator):
        header = {
            "kind": "generator",
            "mlp": _config_to_json(model.config),
            "spec": {"dx": model.spec.dx, "dy": model.spec.dy},
            "train_rmse": model.train_rmse,
            "holdout_rmse": model.holdout_rmse,
        }
        params = model.params
    else:
        raise TypeError(f"cannot checkpoint a {type(model).__name__}")

    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = _flatten(params).astype("<f8").tobytes()
    crc = zlib.crc32(hdr + payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(hdr)))
        fh.write(hdr)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 12 or not blob.startswith(_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hdr_len = struct.unpack_from("<II", blob, len(_MAGIC))
    if version != _VERSION:
        raise CheckpointError(
            f"{path}: format version {version}, this reader handles {_VERSION}")
    body_start = len(_MAGIC) + 8
    if len(blob) < body_start + hdr_len + 4:
        raise CheckpointError(f"{path}: truncated file")
    hdr = blob[body_start:body_start + hdr_len]
    payload = blob[body_start + hdr_len:-4]
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(hdr + payload) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    try:
        header = json.loads(hdr.decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc

    config = _config_from_json(header["mlp"])
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    params = _unflatten(config, flat)
    spec = DataSpec(dx=int(header["spec"]["dx"]), dy=int(header["spec"]["dy"]))
    if header["kind"] == "velocity":
        return VelocityModel(
            config=config, params=params, spec=spec, T=float(header["T"]),
            x_scaling=_scaling_from_json(header["x_scaling"]),
            y_scaling=_scaling_from_json(header["y_scaling"]))
    if header["kind"] == "generator":
        return OneStepGenerator(
            config=config, params=params, spec=spec,
            train_rmse=float(header["train_rmse"]),
            holdout_rmse=float(header["holdout_rmse"]))
    raise CheckpointError(f"{path}: unknown model kind {header['kind']!r}")
