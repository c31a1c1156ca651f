"""Velocity-matching training and one-step generator distillation.

Each epoch visits every data index once in shuffled order and pairs it with
one fresh (t, W) draw, t ~ U(0, T), W ~ N(0, I). The regression target for
an example (X, Y, t, W) is X - t/sqrt(1-t^2) * W evaluated at the input
point (t*X + sqrt(1-t^2)*W, Y, t); the minimizer of the population version
of this least-squares problem is the transport velocity itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import DataSpec, Dataset, FlowConfig, RngStream, interpolant

__all__ = [
    "TrainConfig",
    "VelocityModel",
    "OneStepGenerator",
    "make_batch",
    "train_velocity",
    "distill",
    "monte_carlo_loss",
    "velocity_gap_mc",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    T: float = 0.98
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.T < 1.0:
            raise ValueError(f"T must lie in (0, 1), got {self.T}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class VelocityModel:
    """Trained velocity network plus everything needed to use it."""

    config: nn.MlpConfig
    params: nn.MlpParams
    spec: DataSpec
    T: float
    x_scaling: object | None = None   # synthdata.ScalingRecord, if data was scaled
    y_scaling: object | None = None

    def __post_init__(self) -> None:
        if self.config.out_dim != self.spec.dx:
            raise ValueError("network out_dim must equal spec.dx")

    def velocity(self, x, y, t: float) -> np.ndarray:
        return nn.velocity_forward(self.config, self.params, x, y, t)

    def velocity_field(self):
        def fieldfn(x: np.ndarray, y, t) -> np.ndarray:
            return nn.velocity_forward(self.config, self.params, x, y, t)
        fieldfn.dx = self.spec.dx
        return fieldfn


@dataclass
class OneStepGenerator:
    """Distilled map (z, y) -> sample, one network evaluation per sample."""

    config: nn.MlpConfig
    params: nn.MlpParams
    spec: DataSpec
    train_rmse: float = float("nan")
    holdout_rmse: float = float("nan")

    def generate(self, z: np.ndarray, y) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if y is None or self.spec.dy == 0:
            feats = z
        else:
            y = np.asarray(y, dtype=np.float64)
            yb = np.broadcast_to(np.atleast_2d(y), (z.shape[0], self.spec.dy))
            feats = np.concatenate([z, yb], axis=1)
        return nn.forward(self.config, self.params, feats)


def make_batch(dataset: Dataset, rng: RngStream, batch_size: int, T: float):
    """Independent (index, t, W) triples -> (x_in, y_in, t_in, target)."""
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    idx = (rng.uniform(batch_size) * dataset.n).astype(np.int64)
    t = rng.uniform(batch_size) * T
    w = rng.gauss_matrix(batch_size, dataset.spec.dx)
    xs = dataset.xs[idx]
    ys = dataset.ys[idx]
    x_in = t[:, None] * xs + np.sqrt(1.0 - t * t)[:, None] * w
    target = xs - (t / np.sqrt(1.0 - t * t))[:, None] * w
    return x_in, ys, t, target


def _epoch_batches(dataset: Dataset, rng: RngStream, batch_size: int, T: float):
    """Shuffled pass over all indices, one fresh (t, W) per visit."""
    n = dataset.n
    perm = np.argsort(rng.uniform(n), kind="stable")
    t_all = rng.uniform(n) * T
    w_all = rng.gauss_matrix(n, dataset.spec.dx)
    for lo in range(0, n, batch_size):
        sel = perm[lo:lo + batch_size]
        t = t_all[sel]
        w = w_all[sel]
        xs = dataset.xs[sel]
        x_in = t[:, None] * xs + np.sqrt(1.0 - t * t)[:, None] * w
        target = xs - (t / np.sqrt(1.0 - t * t))[:, None] * w
        yield x_in, dataset.ys[sel], t, target


def train_velocity(dataset: Dataset, train_cfg: TrainConfig,
                   mlp_cfg: nn.MlpConfig | None = None,
                   x_scaling=None, y_scaling=None,
                   progress=None) -> tuple[VelocityModel, list[float]]:
    """Minibatch Adam on the velocity-matching objective.

    Returns the trained model and the per-epoch mean loss trace.
    """
    if dataset.n < train_cfg.batch_size:
        raise ValueError("dataset smaller than one batch")
    spec = dataset.spec
    if mlp_cfg is None:
        mlp_cfg = nn.MlpConfig.for_velocity(spec.dx, spec.dy)
    rng = RngStream(train_cfg.seed, stream_id=0x7E41)
    params = nn.init_params(mlp_cfg, rng)
    state = nn.new_adam_state(params)
    trace: list[float] = []
    for epoch in range(train_cfg.epochs):
        total = 0.0
        count = 0
        for x_in, y_in, t_in, target in _epoch_batches(
                dataset, rng, train_cfg.batch_size, train_cfg.T):
            feats = nn.forward_features(mlp_cfg, x_in, y_in, t_in)
            loss, grad = nn.loss_and_grad(mlp_cfg, params, feats, target)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}: {loss}")
            nn.adam_step(mlp_cfg, params, grad, state, lr=train_cfg.lr,
                         beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                         eps=train_cfg.eps)
            total += loss * x_in.shape[0]
            count += x_in.shape[0]
        trace.append(total / count)
        if progress is not None:
            progress(epoch, trace[-1])
    model = VelocityModel(config=mlp_cfg, params=params, spec=spec,
                          T=train_cfg.T, x_scaling=x_scaling, y_scaling=y_scaling)
    return model, trace


def distill(field, spec: DataSpec, flow_cfg: FlowConfig, y,
            n_pairs: int, train_cfg: TrainConfig,
            hidden_widths=(128, 128, 128),
            holdout_frac: float = 0.1) -> OneStepGenerator:
    """Fit a one-step generator to (noise, ODE-endpoint) pairs.

    `field` is a batched velocity callable (or a VelocityModel). Endpoint
    computation uses the Euler sampler; the generator is trained by plain
    least squares on a 90/10 train/holdout split with a fixed shuffle seed.
    """
    from .flow import euler_batch  # local import avoids a module cycle

    if n_pairs < 1:
        raise ValueError("need at least one noise/endpoint pair")
    if isinstance(field, VelocityModel):
        field = field.velocity_field()
    rng = RngStream(train_cfg.seed, stream_id=0xD157)
    z = rng.gauss_matrix(n_pairs, spec.dx)
    endpoints = euler_batch(field, y, flow_cfg, z)

    dy = spec.dy
    if y is None or dy == 0:
        feats = z
        dy = 0
    else:
        yb = np.broadcast_to(np.atleast_2d(np.asarray(y, dtype=np.float64)),
                             (n_pairs, dy))
        feats = np.concatenate([z, yb], axis=1)

    n_hold = max(1, int(round(holdout_frac * n_pairs))) if n_pairs > 1 else 0
    perm = np.argsort(rng.uniform(n_pairs), kind="stable")
    hold, tr = perm[:n_hold], perm[n_hold:]
    if tr.size == 0:
        tr, hold = perm, perm

    cfg = nn.MlpConfig(in_dim=feats.shape[1], out_dim=spec.dx,
                       hidden_widths=tuple(hidden_widths))
    params = nn.init_params(cfg, rng)
    state = nn.new_adam_state(params)
    bs = min(train_cfg.batch_size, tr.size)
    for _ in range(train_cfg.epochs):
        order = tr[np.argsort(rng.uniform(tr.size), kind="stable")]
        for lo in range(0, order.size, bs):
            sel = order[lo:lo + bs]
            loss, grad = nn.loss_and_grad(cfg, params, feats[sel], endpoints[sel])
            nn.adam_step(cfg, params, grad, state, lr=train_cfg.lr,
                         beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                         eps=train_cfg.eps)

    def rmse(sel: np.ndarray) -> float:
        pred = nn.forward(cfg, params, feats[sel])
        return float(np.sqrt(np.mean(np.sum((pred - endpoints[sel]) ** 2, axis=1))))

    gen_spec = DataSpec(dx=spec.dx, dy=dy)
    return OneStepGenerator(config=cfg, params=params, spec=gen_spec,
                            train_rmse=rmse(tr), holdout_rmse=rmse(hold))


# ---------------------------------------------------------------------------
# Monte-Carlo verification utilities


def _draw_xy(source, n: int, rng: RngStream):
    """Draw n (X, Y) pairs from a Dataset (resampling) or a discrete target."""
    from .oracle import DiscreteConditionalTarget

    if isinstance(source, Dataset):
        idx = (rng.uniform(n) * source.n).astype(np.int64)
        return source.xs[idx], source.ys[idx]
    if isinstance(source, DiscreteConditionalTarget):
        y = np.zeros((n, source.dy))
        atoms, weights = source.atoms_for(None)
        cum = np.cumsum(weights)
        k = np.searchsorted(cum, rng.uniform(n), side="right")
        k = np.minimum(k, atoms.shape[0] - 1)
        return atoms[k], y
    raise TypeError(f"unsupported sample source: {type(source)!r}")


def monte_carlo_loss(field, source, T: float, n: int,
                     rng: RngStream) -> tuple[float, float]:
    """MC estimate (value, standard error) of the matching objective
    E |X - t/sqrt(1-t^2) W - v(W_t, Y, t)|^2 with t ~ U(0, T).

    The field callable must accept a per-row t array.
    """
    xs, ys = _draw_xy(source, n, rng)
    dx = xs.shape[1]
    t = rng.uniform(n) * T
    w = rng.gauss_matrix(n, dx)
    wt = t[:, None] * xs + np.sqrt(1.0 - t * t)[:, None] * w
    target = xs - (t / np.sqrt(1.0 - t * t))[:, None] * w
    v = np.atleast_2d(field(wt, ys, t))
    vals = np.sum((target - v) ** 2, axis=1)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))


def velocity_gap_mc(field, target, T: float, n: int,
                    rng: RngStream) -> tuple[float, float]:
    """MC estimate (value, standard error) of the time-averaged squared
    field error (1/T) int ||v - v_true||^2 dt under the interpolant law."""
    from .oracle import oracle_velocity

    xs, ys = _draw_xy(target, n, rng)
    dx = xs.shape[1]
    t = rng.uniform(n) * T
    w = rng.gauss_matrix(n, dx)
    wt = t[:, None] * xs + np.sqrt(1.0 - t * t)[:, None] * w
    v = np.atleast_2d(field(wt, ys, t))
    v_true = oracle_velocity(target, wt, None, t)
    vals = np.sum((v - v_true) ** 2, axis=1)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))
