"""Command-line entry point: stage orchestration, artifact emission.

Each subcommand runs one stage against a config file; `run` executes the
config's stage list in dependency order. Every invocation writes a
manifest.json recording the config hash, seed, and emitted files, so a rerun
with identical inputs reproduces identical numeric outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import flow as flow_mod
from . import metrics, nn, oracle, plots, synthdata
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import STAGES, ConfigError, ExperimentConfig
from .core import RngStream
from .training import TrainConfig, distill, train_velocity

OUTPUT_ROOT_ENV = "CONDFLOW_OUTPUT_ROOT"

# stream ids per stage keep their randomness disjoint under one seed
_STREAM_SAMPLE = 0x5A3B1E
_STREAM_SDE = 0x5DE5DE
_STREAM_EVAL = 0xE7A1
_STREAM_HOLDOUT = 0x901D


class StageError(Exception):
    """A stage could not run (missing prerequisite, wrong data source)."""


class _Context:
    def __init__(self, cfg: ExperimentConfig, config_text: str) -> None:
        self.cfg = cfg
        root = os.environ.get(OUTPUT_ROOT_ENV)
        self.out_dir = (os.path.join(root, cfg.output_dir) if root
                        else cfg.output_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        self.config_hash = hashlib.sha256(config_text.encode("utf-8")).hexdigest()
        self.outputs: list[str] = []
        self.stages_run: list[str] = []
        self.inputs: list[str] = []
        self._dataset = None
        self._model = None

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def emit(self, name: str) -> str:
        p = self.path(name)
        if name not in self.outputs:
            self.outputs.append(name)
        return p

    # shared resources -------------------------------------------------------

    def dataset(self):
        if self._dataset is None:
            self._dataset = _make_dataset(self.cfg)
        return self._dataset

    def model(self):
        if self._model is None:
            ckpt = self.path("model.ckpt")
            if not os.path.exists(ckpt):
                raise StageError(
                    f"no trained model at {ckpt}; run the train stage first")
            self._model = load_checkpoint(ckpt)
        return self._model

    def write_manifest(self) -> None:
        doc = {
            "config_hash": self.config_hash,
            "seed": self.cfg.seed,
            "inputs": self.inputs,
            "stages": self.stages_run,
            "outputs": sorted(self.outputs),
        }
        with open(self.path("manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _make_dataset(cfg: ExperimentConfig):
    if cfg.source == "shape":
        return synthdata.gen_shape(
            synthdata.ShapeSpec(cfg.source_name, cfg.n, seed=cfg.seed))
    if cfg.source == "regression":
        return synthdata.gen_regression(
            synthdata.RegressionModelSpec(cfg.source_name, cfg.n, seed=cfg.seed))
    if cfg.source == "csv":
        if not os.path.exists(cfg.source_name):
            raise StageError(f"csv file not found: {cfg.source_name}")
        ds, _ = synthdata.load_csv(cfg.source_name, cfg.spec.dx, cfg.spec.dy,
                                   scale=cfg.scale)
        return ds
    raise StageError(
        f"data source '{cfg.source}' provides no training dataset")


def _fresh_conditions(cfg: ExperimentConfig, count: int, seed_offset: int):
    """Condition draws disjoint from the training set (shifted seed)."""
    if cfg.source == "shape":
        ds = synthdata.gen_shape(synthdata.ShapeSpec(
            cfg.source_name, count, seed=cfg.seed + seed_offset))
    elif cfg.source == "regression":
        ds = synthdata.gen_regression(synthdata.RegressionModelSpec(
            cfg.source_name, count, seed=cfg.seed + seed_offset))
    else:
        raise StageError(
            f"evaluation stages need a generative data source, not "
            f"'{cfg.source}'")
    return ds


def _sample_per_condition(model, ys: np.ndarray, flow_cfg, per: int,
                          rng: RngStream) -> np.ndarray:
    """(C, per, dx) model samples, one batched integration over C*per rows."""
    c = ys.shape[0]
    y_rep = np.repeat(ys, per, axis=0)
    out = flow_mod.sample_batch(model.velocity_field(), y_rep, flow_cfg,
                                c * per, rng)
    return out.reshape(c, per, model.spec.dx)


def _reference_slice_kde(cfg: ExperimentConfig, y: float, window: float = 0.05):
    """Conditional-density fallback: x-KDE of a high-count reference sample
    restricted to a window around the conditioning value."""
    ref = synthdata.gen_shape(synthdata.ShapeSpec(
        cfg.source_name, 1_000_000, seed=cfg.seed + 77))
    sel = np.abs(ref.ys[:, 0] - y) <= window
    if sel.sum() < 50:
        return None
    return metrics.kde_fit(ref.xs[sel, 0])


# ---------------------------------------------------------------------------
# stages


def stage_gen_data(ctx: _Context) -> None:
    ds = ctx.dataset()
    synthdata.save_csv(ds, ctx.emit("data.csv"))
    if ds.spec.dx == 1 and ds.spec.dy == 1:
        pts = np.hstack([ds.xs, ds.ys])
        plots.scatter_compare(pts, pts, ctx.emit("data.svg"),
                              title=ctx.cfg.source_name)


def stage_train(ctx: _Context) -> None:
    cfg = ctx.cfg
    ds = ctx.dataset()
    x_scaling = y_scaling = None
    if cfg.scale and cfg.source != "csv":
        x_scaling = synthdata.ScalingRecord.fit(ds.xs)
        y_scaling = synthdata.ScalingRecord.fit(ds.ys)
        ds = type(ds)(xs=x_scaling.apply(ds.xs), ys=y_scaling.apply(ds.ys),
                      spec=ds.spec)
    model, trace = train_velocity(ds, cfg.train, cfg.mlp_config(),
                                  x_scaling=x_scaling, y_scaling=y_scaling)
    ctx._model = model
    save_checkpoint(model, ctx.emit("model.ckpt"))
    with open(ctx.emit("loss.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(trace):
            fh.write(f"{i + 1},{loss:.17g}\n")
    plots.loss_curve(trace, ctx.emit("loss.svg"))


def _apply_scaling_y(model, ys: np.ndarray) -> np.ndarray:
    return model.y_scaling.apply(ys) if model.y_scaling is not None else ys


def _invert_scaling_x(model, xs: np.ndarray) -> np.ndarray:
    return model.x_scaling.invert(xs) if model.x_scaling is not None else xs


def _stage_sample_common(ctx: _Context, sde: bool) -> None:
    cfg = ctx.cfg
    model = ctx.model()
    conds = _fresh_conditions(cfg, cfg.sample_count, seed_offset=1)
    ys = _apply_scaling_y(model, conds.ys)
    rng = RngStream(cfg.seed, stream_id=_STREAM_SDE if sde else _STREAM_SAMPLE)
    field = model.velocity_field()
    # one sample per condition: integrate all rows in a single batch
    if sde:
        xs = flow_mod.sde_sample(field, ys, cfg.flow, ys.shape[0], rng)
    else:
        xs = flow_mod.sample_batch(field, ys, cfg.flow, ys.shape[0], rng)
    xs = _invert_scaling_x(model, xs)
    name = "samples_sde" if sde else "samples"
    out = type(conds)(xs=xs, ys=conds.ys, spec=conds.spec)
    synthdata.save_csv(out, ctx.emit(f"{name}.csv"))
    if conds.spec.dx == 1 and conds.spec.dy == 1:
        train_pts = np.hstack([ctx.dataset().xs, ctx.dataset().ys])
        gen_pts = np.hstack([xs, conds.ys])
        plots.scatter_compare(train_pts, gen_pts, ctx.emit(f"{name}.svg"),
                              title=cfg.source_name)


def stage_sample(ctx: _Context) -> None:
    _stage_sample_common(ctx, sde=False)


def stage_sample_sde(ctx: _Context) -> None:
    _stage_sample_common(ctx, sde=True)


def stage_distill(ctx: _Context) -> None:
    cfg = ctx.cfg
    model = ctx.model()
    train_cfg = TrainConfig(epochs=min(cfg.train.epochs, 100),
                            batch_size=cfg.train.batch_size,
                            T=cfg.train.T, lr=cfg.train.lr, seed=cfg.seed)
    n_pairs = max(2000, cfg.n)
    ys = None
    if model.spec.dy > 0:
        conds = _fresh_conditions(cfg, n_pairs, seed_offset=4)
        ys = _apply_scaling_y(model, conds.ys)
    gen = distill(model, model.spec, cfg.flow, ys,
                  n_pairs=n_pairs, train_cfg=train_cfg)
    save_checkpoint(gen, ctx.emit("generator.ckpt"))
    report = metrics.EvalReport()
    report.add("distill_train_rmse", gen.train_rmse)
    report.add("distill_holdout_rmse", gen.holdout_rmse)
    report.save(ctx.emit("distill.csv"), ctx.emit("distill.txt"))


def stage_eval_tv(ctx: _Context) -> None:
    cfg = ctx.cfg
    if cfg.source != "shape":
        raise StageError("eval-tv applies to shape data sources only")
    started = time.monotonic()
    model = ctx.model()
    conds = _fresh_conditions(cfg, cfg.conditions, seed_offset=2)
    ys = _apply_scaling_y(model, conds.ys)
    rng = RngStream(cfg.seed, stream_id=_STREAM_EVAL)
    samples = _sample_per_condition(model, ys, cfg.flow, cfg.per_condition, rng)
    samples = _invert_scaling_x(model, samples.reshape(-1, 1)).reshape(samples.shape)

    tvs = np.empty(cfg.conditions)
    with open(ctx.emit("tv_per_condition.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("y,tv\n")
        for i in range(cfg.conditions):
            y_i = float(conds.ys[i, 0])
            truth = synthdata.shape_conditional_density(cfg.source_name, y_i)
            if truth is None:
                truth = _reference_slice_kde(cfg, y_i)
            if truth is None:
                tvs[i] = np.nan
                continue
            est = metrics.kde_fit(samples[i, :, 0])
            lo = float(samples[i, :, 0].min() - 3.0 * est.h)
            hi = float(samples[i, :, 0].max() + 3.0 * est.h)
            tvs[i] = metrics.tv_distance(est, truth, min(lo, -2.5),
                                         max(hi, 2.5), points=2048)
            fh.write(f"{y_i:.17g},{tvs[i]:.17g}\n")
    ok = tvs[np.isfinite(tvs)]
    report = metrics.EvalReport()
    report.add("tv_mean", float(ok.mean()), float(ok.std(ddof=1)),
               runtime=time.monotonic() - started)
    report.save(ctx.emit("eval_tv.csv"), ctx.emit("eval_tv.txt"))


def stage_eval_moments(ctx: _Context) -> None:
    cfg = ctx.cfg
    if cfg.source != "regression":
        raise StageError("eval-moments applies to regression data sources only")
    started = time.monotonic()
    model = ctx.model()
    conds = _fresh_conditions(cfg, cfg.conditions, seed_offset=2)
    ys = _apply_scaling_y(model, conds.ys)
    rng = RngStream(cfg.seed, stream_id=_STREAM_EVAL)
    samples = _sample_per_condition(model, ys, cfg.flow, cfg.per_condition, rng)
    flat = _invert_scaling_x(model, samples.reshape(-1, 1))
    samples = flat.reshape(samples.shape)[:, :, 0]
    mean_fn, std_fn = synthdata.regression_truth(cfg.source_name)
    est_mean = samples.mean(axis=1)
    est_std = samples.std(axis=1, ddof=1)
    mse1, mse2 = metrics.moment_mse(est_mean, est_std,
                                    mean_fn(conds.ys), std_fn(conds.ys))
    report = metrics.EvalReport()
    report.add("mse_mean", mse1, runtime=time.monotonic() - started)
    report.add("mse_std", mse2)
    report.save(ctx.emit("eval_moments.csv"), ctx.emit("eval_moments.txt"))


def stage_eval_intervals(ctx: _Context) -> None:
    cfg = ctx.cfg
    if cfg.source != "regression":
        raise StageError("eval-intervals applies to regression data sources only")
    started = time.monotonic()
    model = ctx.model()
    held = _fresh_conditions(cfg, cfg.conditions, seed_offset=3)
    ys = _apply_scaling_y(model, held.ys)
    rng = RngStream(cfg.seed, stream_id=_STREAM_HOLDOUT)
    samples = _sample_per_condition(model, ys, cfg.flow, cfg.per_condition, rng)
    flat = _invert_scaling_x(model, samples.reshape(-1, 1))
    samples = flat.reshape(samples.shape)[:, :, 0]
    intervals = [metrics.prediction_interval(samples[i], cfg.alpha)
                 for i in range(cfg.conditions)]
    rep = metrics.IntervalReport.build(intervals, held.xs[:, 0])
    with open(ctx.emit("intervals.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("lower,upper,truth,hit\n")
        for (lo, hi), truth, hit in zip(intervals, held.xs[:, 0], rep.hits):
            fh.write(f"{lo:.17g},{hi:.17g},{truth:.17g},{int(hit)}\n")
    report = metrics.EvalReport()
    report.add("coverage", rep.cr, runtime=time.monotonic() - started)
    report.save(ctx.emit("eval_intervals.csv"), ctx.emit("eval_intervals.txt"))


def stage_oracle_check(ctx: _Context) -> None:
    cfg = ctx.cfg
    if cfg.source == "oracle":
        if not os.path.exists(cfg.source_name):
            raise StageError(f"oracle target file not found: {cfg.source_name}")
        target = oracle.DiscreteConditionalTarget.from_file(cfg.source_name)
    else:
        # default probe target: symmetric two-atom mixture on the unit ball
        target = oracle.DiscreteConditionalTarget.fixed(
            atoms=np.array([[-1.0], [1.0]]), weights=np.array([0.5, 0.5]),
            dy=cfg.spec.dy)
    started = time.monotonic()
    result = oracle.self_check(target, T=cfg.flow.T, probes=1000,
                               rng=RngStream(cfg.seed, stream_id=_STREAM_EVAL))
    report = metrics.EvalReport()
    report.add("oracle_score_rel_err", result["score_rel_err"],
               runtime=time.monotonic() - started)
    report.add("oracle_mean_limit_err", result["mean_limit_err"])
    report.add("oracle_lipschitz_ratio", result["lipschitz_ratio"])
    report.save(ctx.emit("oracle_check.csv"), ctx.emit("oracle_check.txt"))


_STAGE_FNS = {
    "gen-data": stage_gen_data,
    "train": stage_train,
    "sample": stage_sample,
    "sample-sde": stage_sample_sde,
    "distill": stage_distill,
    "eval-tv": stage_eval_tv,
    "eval-moments": stage_eval_moments,
    "eval-intervals": stage_eval_intervals,
    "oracle-check": stage_oracle_check,
}


# ---------------------------------------------------------------------------
# argument handling


def _load_config(args) -> tuple[ExperimentConfig, str]:
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    with open(args.config, encoding="utf-8") as fh:
        text = fh.read()
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(
                f"override '{item}' must look like section.key=value")
        key, value = item.split("=", 1)
        section, option = key.strip().split(".", 1)
        text += f"\n[{section}]\n{option} = {value}\n"
    cfg = ExperimentConfig.from_string(text)
    if args.output_dir:
        object.__setattr__(cfg, "output_dir", args.output_dir)
    return cfg, text


def _run_stages(cfg: ExperimentConfig, text: str, stages, config_path) -> int:
    ctx = _Context(cfg, text)
    ctx.inputs.append(os.path.abspath(config_path))
    # dependency order is the canonical stage order
    ordered = sorted(set(stages), key=STAGES.index)
    for stage in ordered:
        print(f"[{stage}] running", flush=True)
        _STAGE_FNS[stage](ctx)
        ctx.stages_run.append(stage)
    ctx.write_manifest()
    ctx.outputs.append("manifest.json")
    print(f"wrote {len(ctx.outputs)} artifacts to {ctx.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condflow",
        description="Conditional generative sampling via velocity-field "
                    "transport: train, sample, and evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", required=True,
                       help="experiment config file (ini-style sections)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--output-dir", help="override [experiment] output_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, text = _load_config(args)
        if args.command == "run":
            stages = cfg.stages or ("oracle-check",)
        else:
            stages = (args.command,)
        return _run_stages(cfg, text, stages, args.config)
    except (ConfigError, StageError, CheckpointError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
