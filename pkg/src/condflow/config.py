"""Experiment configuration: INI-style `key = value` sections.

All keys are validated up front (unknown key, bad type, inconsistent
dimensions, train/sample T mismatch) so a bad config fails before any
stage runs.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from . import nn
from .core import DataSpec, FlowConfig
from .synthdata import REGRESSION_MODELS, SHAPES
from .training import TrainConfig

__all__ = ["ConfigError", "ExperimentConfig"]

STAGES = ("gen-data", "train", "sample", "sample-sde", "distill",
          "eval-tv", "eval-moments", "eval-intervals", "oracle-check")

_KNOWN_KEYS = {
    "experiment": {"seed", "output_dir", "stages"},
    "data": {"source", "shape", "model", "path", "target", "n", "dx", "dy",
             "scale"},
    "model": {"hidden_widths", "output_norm_cap", "weight_cap",
              "fourier_features_t"},
    "train": {"epochs", "batch_size", "T", "lr", "beta1", "beta2", "eps"},
    "flow": {"T", "N"},
    "sample": {"count", "conditions", "per_condition", "alpha"},
}


class ConfigError(Exception):
    """Invalid experiment configuration."""


def _get(parser, section, key, conv, default):
    if not parser.has_option(section, key):
        if default is _REQUIRED:
            raise ConfigError(f"[{section}] is missing required key '{key}'")
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _as_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _as_int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(p) for p in raw.split(",") if p.strip())


def _as_cap(raw: str) -> float:
    v = float(raw)
    return math.inf if math.isinf(v) else v


_REQUIRED = object()


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output_dir: str
    stages: tuple[str, ...]
    source: str                       # shape | regression | csv | oracle
    source_name: str                  # shape name, model name, or file path
    n: int
    spec: DataSpec
    scale: bool
    hidden_widths: tuple[int, ...]
    output_norm_cap: float
    weight_cap: float
    fourier_features_t: int
    train: TrainConfig
    flow: FlowConfig
    sample_count: int
    conditions: int
    per_condition: int
    alpha: float

    def mlp_config(self) -> nn.MlpConfig:
        return nn.MlpConfig.for_velocity(
            dx=self.spec.dx, dy=self.spec.dy,
            hidden_widths=self.hidden_widths,
            output_norm_cap=self.output_norm_cap,
            weight_cap=self.weight_cap,
            fourier_features_t=self.fourier_features_t)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), strict=False)
        parser.optionxform = str  # keep key case (T vs t matters)
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        return cls.from_parser(parser)

    @classmethod
    def from_string(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), strict=False)
        parser.optionxform = str
        parser.read_string(text)
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser) -> "ExperimentConfig":
        for section in parser.sections():
            if section not in _KNOWN_KEYS:
                raise ConfigError(f"unknown section [{section}]")
            for key in parser.options(section):
                if key not in _KNOWN_KEYS[section]:
                    raise ConfigError(f"unknown key '{key}' in [{section}]")

        seed = _get(parser, "experiment", "seed", int, 0)
        output_dir = _get(parser, "experiment", "output_dir", str, "out")
        stages_raw = _get(parser, "experiment", "stages", str, "")
        stages = tuple(s.strip() for s in stages_raw.split(",") if s.strip())
        for stage in stages:
            if stage not in STAGES:
                raise ConfigError(
                    f"unknown stage '{stage}'; choose from {', '.join(STAGES)}")

        source = _get(parser, "data", "source", str, _REQUIRED)
        if source == "shape":
            name = _get(parser, "data", "shape", str, _REQUIRED)
            if name not in SHAPES:
                raise ConfigError(f"unknown shape '{name}'")
            dx, dy = 1, 1
        elif source == "regression":
            name = _get(parser, "data", "model", str, _REQUIRED)
            if name not in REGRESSION_MODELS:
                raise ConfigError(f"unknown regression model '{name}'")
            dx, dy = 1, (5 if name in ("M1", "M2") else 1)
        elif source == "csv":
            name = _get(parser, "data", "path", str, _REQUIRED)
            dx = _get(parser, "data", "dx", int, _REQUIRED)
            dy = _get(parser, "data", "dy", int, _REQUIRED)
        elif source == "oracle":
            name = _get(parser, "data", "target", str, _REQUIRED)
            dx = _get(parser, "data", "dx", int, 1)
            dy = _get(parser, "data", "dy", int, 1)
        else:
            raise ConfigError(
                f"unknown data source '{source}'; choose shape, regression, csv"
                " or oracle")
        n = _get(parser, "data", "n", int, 5000)
        if n < 1:
            raise ConfigError("[data] n must be >= 1")
        scale = _get(parser, "data", "scale", _as_bool, False)
        spec = DataSpec(dx=dx, dy=dy)

        hidden = _get(parser, "model", "hidden_widths", _as_int_tuple,
                      (256, 256, 256, 256))
        norm_cap = _get(parser, "model", "output_norm_cap", _as_cap, math.inf)
        weight_cap = _get(parser, "model", "weight_cap", _as_cap, math.inf)
        fourier = _get(parser, "model", "fourier_features_t", int, 0)

        train = TrainConfig(
            epochs=_get(parser, "train", "epochs", int, 200),
            batch_size=_get(parser, "train", "batch_size", int, 128),
            T=_get(parser, "train", "T", float, 0.98),
            lr=_get(parser, "train", "lr", float, 1e-3),
            beta1=_get(parser, "train", "beta1", float, 0.9),
            beta2=_get(parser, "train", "beta2", float, 0.999),
            eps=_get(parser, "train", "eps", float, 1e-8),
            seed=seed,
        )
        flow = FlowConfig(
            T=_get(parser, "flow", "T", float, train.T),
            N=_get(parser, "flow", "N", int, 100),
        )
        if abs(flow.T - train.T) > 1e-12 and ("train" in stages or not stages):
            raise ConfigError(
                f"flow T = {flow.T} differs from train T = {train.T}; the "
                "sampler must stop where training coverage ends")

        return cls(
            seed=seed, output_dir=output_dir, stages=stages,
            source=source, source_name=name, n=n, spec=spec, scale=scale,
            hidden_widths=hidden, output_norm_cap=norm_cap,
            weight_cap=weight_cap, fourier_features_t=fourier,
            train=train, flow=flow,
            sample_count=_get(parser, "sample", "count", int, 200),
            conditions=_get(parser, "sample", "conditions", int, 1000),
            per_condition=_get(parser, "sample", "per_condition", int, 200),
            alpha=_get(parser, "sample", "alpha", float, 0.05),
        )
