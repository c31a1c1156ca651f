"""Samplers: Euler integration of the velocity ODE, Euler-Maruyama
integration of the marginal-equivalent reverse SDE, and one-step generation.

A velocity field here is any callable ``field(x, y, t) -> v`` that is
vectorized over the rows of ``x`` (shape (B, dx)) for a fixed scalar ``t``;
``y`` is a single condition vector (or ``None``) broadcast to the batch.

The reverse-SDE drift is not something the training stage produces
directly; it is derived from the learned velocity. The interpolant score is
s(x, y, t) = t*v(x, y, t) - x, the forward noising dynamics are an
Ornstein-Uhlenbeck-type SDE whose time reversal has drift
(-forward drift + diffusion^2 * score), and substituting the score-velocity
relation gives drift 2*v(z, y, t) - z/t with diffusion sqrt(2/t). The first
step, where the diffusion coefficient is singular at t = 0, is taken as a
deterministic Euler step with the field; marginal equivalence with the ODE
sampler is covered by tests rather than derivation comments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FlowConfig, RngStream, RowStreams

__all__ = [
    "SamplePath",
    "euler_sample",
    "euler_batch",
    "sample_batch",
    "sde_sample",
    "one_step_generate",
]


@dataclass(frozen=True)
class SamplePath:
    """Recorded trajectory (t_k, z_k), k = 0..N, plus its endpoint."""

    times: np.ndarray      # (N+1,)
    points: np.ndarray     # (N+1, dx)

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]


def _check_finite(v: np.ndarray, t: float, z: np.ndarray) -> None:
    if not np.all(np.isfinite(v)):
        bad = np.nonzero(~np.isfinite(v).all(axis=1))[0][0]
        raise FloatingPointError(
            f"non-finite velocity at t={t:.6g}, |z|={np.linalg.norm(z[bad]):.6g}")


def euler_batch(field, y, flow: FlowConfig, z0: np.ndarray) -> np.ndarray:
    """Euler endpoints for a (B, dx) matrix of starting points."""
    z = np.array(np.atleast_2d(z0), dtype=np.float64)
    dt = flow.dt
    for k in range(flow.N):
        t = k * dt
        v = np.atleast_2d(field(z, y, t))
        _check_finite(v, t, z)
        z += dt * v
    return z


def euler_sample(field, y, flow: FlowConfig, z0: np.ndarray,
                 record_path: bool = False):
    """Endpoint of the Euler scheme z_{k+1} = z_k + (T/N) v(z_k, y, t_k).

    Deterministic given z0; optionally records the full trajectory.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    if not record_path:
        return euler_batch(field, y, flow, z0[None, :])[0]
    times = flow.grid()
    points = np.empty((flow.N + 1, z0.size))
    points[0] = z0
    z = z0[None, :].copy()
    dt = flow.dt
    for k in range(flow.N):
        t = k * dt
        v = np.atleast_2d(field(z, y, t))
        _check_finite(v, t, z)
        z += dt * v
        points[k + 1] = z[0]
    return SamplePath(times=times, points=points)


def sample_batch(field, y, flow: FlowConfig, count: int,
                 rng: RngStream, dx: int | None = None) -> np.ndarray:
    """(count, dx) Euler endpoints with z0 ~ N(0, I) per row.

    Row i draws its z0 from the stream ``rng.split(i)`` (vectorized), so the
    output is independent of any internal chunking.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    dx = _field_dim(field, dx)
    z0 = RowStreams(rng, count).gauss(dx)
    return euler_batch(field, y, flow, z0)


def sde_sample(field, y, flow: FlowConfig, count: int,
               rng: RngStream, dx: int | None = None) -> np.ndarray:
    """(count, dx) endpoints of the Euler-Maruyama reverse-SDE scheme.

    Step k >= 1: z += dt * (2 v(z, y, t_k) - z/t_k) + sqrt(2 dt/t_k) * xi.
    The k = 0 step is a deterministic Euler step (see module docstring).
    Shares the ODE sampler's time-T marginal in distribution.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if flow.N < 2:
        raise ValueError("the SDE scheme needs N >= 2")
    dx = _field_dim(field, dx)
    streams = RowStreams(rng, count)
    z = streams.gauss(dx)
    dt = flow.dt
    v = np.atleast_2d(field(z, y, 0.0))
    _check_finite(v, 0.0, z)
    z += dt * v
    for k in range(1, flow.N):
        t = k * dt
        v = np.atleast_2d(field(z, y, t))
        _check_finite(v, t, z)
        drift = 2.0 * v - z / t
        z += dt * drift + np.sqrt(2.0 * dt / t) * streams.gauss(dx)
    return z


def one_step_generate(generator, y, count: int, rng: RngStream) -> np.ndarray:
    """(count, dx) samples G(z, y) with z ~ N(0, I) per-row streams."""
    dx = generator.spec.dx
    if count == 0:
        return np.empty((0, dx))
    if count < 0:
        raise ValueError("count must be >= 0")
    z = RowStreams(rng, count).gauss(dx)
    return generator.generate(z, y)


def _field_dim(field, dx: int | None) -> int:
    """Field state dimension: explicit argument or a ``dx`` attribute."""
    if dx is not None:
        return int(dx)
    dim = getattr(field, "dx", None)
    if dim is None:
        raise ValueError("pass dx= or use a field exposing a .dx attribute")
    return int(dim)
