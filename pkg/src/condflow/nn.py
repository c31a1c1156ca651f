"""Feed-forward ReLU network with manual backprop and Adam.

The network class carries two hard constraints that hold exactly after every
step: the output is rescaled onto the ball of radius K when its l2-norm
exceeds K, and every parameter is clamped to [-kappa, kappa] after each
optimizer update. The Lipschitz constants (gamma1..gamma3) are configuration
records only; `lipschitz_diagnostic` probes them empirically but nothing
enforces them during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream

__all__ = [
    "MlpConfig",
    "MlpParams",
    "AdamState",
    "init_params",
    "forward",
    "forward_features",
    "time_features",
    "loss_and_grad",
    "adam_step",
    "lipschitz_diagnostic",
]

UNBOUNDED = math.inf


@dataclass(frozen=True)
class MlpConfig:
    """Architecture and constraint constants of the velocity network.

    in_dim is dx + dy + t-feature count for a velocity field; generic
    regression heads (e.g. the one-step generator) just set in_dim/out_dim
    directly with fourier_features_t = 0 and feed their own inputs.
    """

    in_dim: int
    out_dim: int
    hidden_widths: tuple[int, ...] = (256, 256, 256, 256)
    output_norm_cap: float = UNBOUNDED   # K
    weight_cap: float = UNBOUNDED        # kappa
    fourier_features_t: int = 0

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("in_dim and out_dim must be >= 1")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("every hidden width must be >= 1")
        if self.output_norm_cap <= 0 or self.weight_cap <= 0:
            raise ValueError("K and kappa must be positive (inf = unbounded)")
        if self.fourier_features_t < 0:
            raise ValueError("fourier_features_t must be >= 0")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def max_width(self) -> int:
        return max(self.hidden_widths) if self.hidden_widths else 0

    def layer_dims(self) -> list[tuple[int, int]]:
        widths = [self.in_dim, *self.hidden_widths, self.out_dim]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def size(self) -> int:
        """Total parameter count, sum of w_i*(w_i+1) over layers."""
        return sum(fan_out * (fan_in + 1) for fan_in, fan_out in self.layer_dims())

    @classmethod
    def for_velocity(cls, dx: int, dy: int, hidden_widths=(256, 256, 256, 256),
                     output_norm_cap: float = UNBOUNDED,
                     weight_cap: float = UNBOUNDED,
                     fourier_features_t: int = 0) -> "MlpConfig":
        tdim = 1 if fourier_features_t == 0 else 2 * fourier_features_t
        return cls(in_dim=dx + dy + tdim, out_dim=dx,
                   hidden_widths=tuple(hidden_widths),
                   output_norm_cap=output_norm_cap, weight_cap=weight_cap,
                   fourier_features_t=fourier_features_t)


@dataclass
class MlpParams:
    weights: list[np.ndarray]   # layer l: (fan_in, fan_out)
    biases: list[np.ndarray]    # layer l: (fan_out,)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    step: int = 0


def init_params(config: MlpConfig, rng: RngStream) -> MlpParams:
    """He-uniform initialization, biases zero."""
    weights, biases = [], []
    for fan_in, fan_out in config.layer_dims():
        bound = math.sqrt(6.0 / fan_in)
        u = rng.uniform(fan_in * fan_out).reshape(fan_in, fan_out)
        weights.append((2.0 * u - 1.0) * bound)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def zeros_like_params(params: MlpParams) -> MlpParams:
    return MlpParams([np.zeros_like(w) for w in params.weights],
                     [np.zeros_like(b) for b in params.biases])


def new_adam_state(params: MlpParams) -> AdamState:
    return AdamState(m=zeros_like_params(params), v=zeros_like_params(params))


def time_features(t: np.ndarray, fourier_features_t: int) -> np.ndarray:
    """(B,) times -> (B, 1) raw or (B, 2J) sinusoidal features."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if fourier_features_t == 0:
        return t[:, None]
    js = 2.0 ** np.arange(fourier_features_t) * np.pi
    arg = t[:, None] * js[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def forward_features(config: MlpConfig, x, y, t) -> np.ndarray:
    """Concatenate (x, y, t-features) into the network input, batched."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    b = x.shape[0]
    parts = [x]
    if y is not None:
        y = np.asarray(y, dtype=np.float64)
        y = np.broadcast_to(np.atleast_2d(y), (b, y.shape[-1] if y.ndim else 1))
        if y.shape[1] > 0:
            parts.append(y)
    tf = time_features(np.broadcast_to(np.asarray(t, dtype=np.float64), (b,)),
                       config.fourier_features_t)
    parts.append(tf)
    feats = np.concatenate(parts, axis=1)
    if feats.shape[1] != config.in_dim:
        raise ValueError(
            f"feature dim {feats.shape[1]} != configured in_dim {config.in_dim}")
    return feats


def _forward_cached(config: MlpConfig, params: MlpParams, inputs: np.ndarray):
    """Returns (projected output, cache for backprop)."""
    h = inputs
    pre_acts = []
    acts = [inputs]
    n_layers = len(params.weights)
    for l in range(n_layers):
        z = h @ params.weights[l] + params.biases[l]
        if l < n_layers - 1:
            pre_acts.append(z)
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            raw = z
    K = config.output_norm_cap
    if math.isinf(K):
        out = raw
        scale = None
    else:
        norms = np.sqrt(np.sum(raw * raw, axis=1, keepdims=True))
        # rescale only where the raw norm strictly exceeds K; at the
        # boundary the unprojected branch applies
        factor = np.where(norms > K, K / np.maximum(norms, 1e-300), 1.0)
        out = raw * factor
        scale = (raw, norms, factor)
    return out, (pre_acts, acts, scale)


def forward(config: MlpConfig, params: MlpParams, inputs: np.ndarray) -> np.ndarray:
    """Pure batched forward pass on pre-assembled features (B, in_dim)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != config.in_dim:
        raise ValueError(
            f"input dim {inputs.shape[1]} != configured in_dim {config.in_dim}")
    out, _ = _forward_cached(config, params, inputs)
    return out


def velocity_forward(config: MlpConfig, params: MlpParams, x, y, t) -> np.ndarray:
    """forward() on (x, y, t) with feature assembly; batch or single row."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = forward(config, params, forward_features(config, x, y, t))
    return out[0] if single else out


def loss_and_grad(config: MlpConfig, params: MlpParams,
                  inputs: np.ndarray, targets: np.ndarray):
    """Mean over the batch of |target - net(input)|_2^2, with its exact
    gradient by backprop (including the K-projection branch)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if inputs.shape[0] == 0:
        raise ValueError("empty batch")
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs/targets row mismatch")
    b = inputs.shape[0]
    out, (pre_acts, acts, scale) = _forward_cached(config, params, inputs)
    resid = out - targets
    loss = float(np.sum(resid * resid) / b)

    d_out = (2.0 / b) * resid
    if scale is None:
        d_raw = d_out
    else:
        raw, norms, factor = scale
        # through out = raw * K/|raw| where |raw| > K:
        # d raw = factor * (d_out - raw * <raw, d_out>/|raw|^2)
        inner = np.sum(raw * d_out, axis=1, keepdims=True)
        proj = d_out - raw * inner / np.maximum(norms * norms, 1e-300)
        d_raw = np.where(norms > config.output_norm_cap, factor * proj, d_out)

    n_layers = len(params.weights)
    g_w = [None] * n_layers
    g_b = [None] * n_layers
    delta = d_raw
    for l in range(n_layers - 1, -1, -1):
        g_w[l] = acts[l].T @ delta
        g_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * (pre_acts[l - 1] > 0.0)
    return loss, MlpParams(g_w, g_b)


def adam_step(config: MlpConfig, params: MlpParams, grad: MlpParams,
              state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction, then kappa clamp."""
    for g in grad.weights + grad.biases:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient entries (divergence)")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    kappa = config.weight_cap
    for group in ("weights", "biases"):
        ps = getattr(params, group)
        gs = getattr(grad, group)
        ms = getattr(state.m, group)
        vs = getattr(state.v, group)
        for p, g, m, v in zip(ps, gs, ms, vs):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
            if not math.isinf(kappa):
                np.clip(p, -kappa, kappa, out=p)


def lipschitz_diagnostic(config: MlpConfig, params: MlpParams,
                         rng: RngStream, dx: int, dy: int, T: float,
                         probes: int = 200, h: float = 1e-4) -> dict[str, float]:
    """Empirical finite-difference Lipschitz ratios in x, y, and t.

    Reported, never enforced: the class constants gamma1..gamma3 describe
    the hypothesis class, training itself is plain ERM.
    """
    ratios = {"x": 0.0, "y": 0.0, "t": 0.0}
    x = rng.gauss_matrix(probes, dx)
    y = rng.uniform(probes * dy).reshape(probes, dy) if dy > 0 else None
    t = rng.uniform(probes) * T
    base = forward(config, params, forward_features(config, x, y, t))
    for name, bump in (("x", 0), ("y", 1), ("t", 2)):
        if name == "y" and dy == 0:
            continue
        if bump == 0:
            direction = rng.gauss_matrix(probes, dx)
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            pert = forward(config, params,
                           forward_features(config, x + h * direction, y, t))
            dist = h
        elif bump == 1:
            direction = rng.gauss_matrix(probes, dy)
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            pert = forward(config, params,
                           forward_features(config, x, y + h * direction, t))
            dist = h
        else:
            pert = forward(config, params,
                           forward_features(config, x, y, np.minimum(t + h, 1.0)))
            dist = h
        num = np.max(np.abs(pert - base), axis=1)
        ratios[name] = float(np.max(num / dist))
    return ratios
