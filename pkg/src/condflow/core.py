"""Shared domain types, deterministic RNG, and the linear interpolant.

Everything downstream (training batches, samplers, synthetic data) draws its
randomness from :class:`RngStream`, a counter-based generator: the value at
counter ``c`` is a pure function of ``(seed, stream_id, c)``, so sequences are
reproducible across platforms and independent streams can be handed to
parallel workers without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataSpec",
    "Dataset",
    "FlowConfig",
    "RngStream",
    "RowStreams",
    "interpolant",
]


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class DataSpec:
    """Dimensions and (optional) support bounds of the paired data."""

    dx: int
    dy: int = 0
    x_bounds: tuple[tuple[float, float], ...] | None = None
    y_bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.dx < 1:
            raise ValueError(f"dx must be >= 1, got {self.dx}")
        if self.dy < 0:
            raise ValueError(f"dy must be >= 0, got {self.dy}")
        for name, bounds, d in (("x_bounds", self.x_bounds, self.dx),
                                ("y_bounds", self.y_bounds, self.dy)):
            if bounds is None:
                continue
            if len(bounds) != d:
                raise ValueError(f"{name} must have {d} entries")
            for lo, hi in bounds:
                if not lo < hi:
                    raise ValueError(f"{name}: need lo < hi, got [{lo}, {hi}]")


@dataclass(frozen=True)
class Dataset:
    """Paired samples, xs (n, dx) and ys (n, dy), row-major float64."""

    xs: np.ndarray
    ys: np.ndarray
    spec: DataSpec

    def __post_init__(self) -> None:
        xs = np.ascontiguousarray(np.asarray(self.xs, dtype=np.float64))
        ys = np.ascontiguousarray(np.asarray(self.ys, dtype=np.float64))
        if xs.ndim != 2 or ys.ndim != 2:
            raise ValueError("xs and ys must be 2-D arrays")
        if xs.shape[0] != ys.shape[0]:
            raise ValueError(
                f"row mismatch: xs has {xs.shape[0]} rows, ys has {ys.shape[0]}")
        if xs.shape[1] != self.spec.dx:
            raise ValueError(f"xs has {xs.shape[1]} columns, spec.dx={self.spec.dx}")
        if ys.shape[1] != self.spec.dy:
            raise ValueError(f"ys has {ys.shape[1]} columns, spec.dy={self.spec.dy}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.xs.shape[0]


@dataclass(frozen=True)
class FlowConfig:
    """Euler grid: N uniform steps on [0, T] with stopping time T < 1."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if not 0.0 < self.T < 1.0:
            raise ValueError(f"T must lie in (0, 1), got {self.T}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")

    def grid(self) -> np.ndarray:
        """t_k = k*T/N for k = 0..N."""
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def dt(self) -> float:
        return self.T / self.N


# ---------------------------------------------------------------------------
# counter-based RNG

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INV_2_53 = float(2.0 ** -53)


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer (Steele, Lea & Flood); bijective on uint64."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


_M64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN_INT = 0x9E3779B97F4A7C15


def _mix64_int(z: int) -> int:
    """Python-int twin of :func:`_mix64` (scalar paths avoid numpy
    uint64 scalar arithmetic, which warns on wraparound)."""
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def _stream_key(seed: int, stream_id: int) -> np.uint64:
    key = _mix64_int(_mix64_int(seed) + (stream_id & _M64) * _GOLDEN_INT)
    return np.uint64(key)


def _block(key: np.uint64, start: int, n: int) -> np.ndarray:
    """Uniforms in [0, 1) at counters start..start+n-1 of the keyed stream."""
    ctr = np.arange(start, start + n, dtype=np.uint64)
    bits = _mix64(key + (ctr + np.uint64(1)) * _GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * _INV_2_53


class RngStream:
    """Deterministic stream of uniforms/gaussians.

    Splitting rule: ``split(i)`` derives a child whose stream_id is
    ``mix64(stream_id + (i+1)*GOLDEN)``; children of distinct indices (and
    the parent itself) behave as statistically independent streams.

    Gaussians use the polar (Marsaglia) method; counter consumption is
    strictly sequential, so results do not depend on request batching.
    Single-owner: not safe for concurrent mutation.
    """

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._key = _stream_key(self.seed, self.stream_id)
        self._counter = 0
        self._spare: float | None = None

    def split(self, index: int) -> "RngStream":
        child = _mix64_int((self.stream_id & _M64)
                           + ((index + 1) & _M64) * _GOLDEN_INT)
        return RngStream(self.seed, child)

    def uniform(self, n: int) -> np.ndarray:
        """Next n uniforms in [0, 1)."""
        out = _block(self._key, self._counter, n)
        self._counter += n
        return out

    def gauss(self, d: int) -> np.ndarray:
        """Next d standard-normal draws (polar method, spare cached)."""
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        out = np.empty(d)
        filled = 0
        if self._spare is not None:
            out[0] = self._spare
            self._spare = None
            filled = 1
        while filled < d:
            need_pairs = (d - filled + 1) // 2
            # ~78.5% acceptance; oversample, then rewind the counter to just
            # past the pair that completes the request so consumption does
            # not depend on how draws were batched
            m = max(8, int(need_pairs / 0.7) + 2)
            start = self._counter
            u = _block(self._key, start, 2 * m)
            v1 = 2.0 * u[0::2] - 1.0
            v2 = 2.0 * u[1::2] - 1.0
            s = v1 * v1 + v2 * v2
            ok = (s > 0.0) & (s < 1.0)
            accepted = np.cumsum(ok)
            if accepted[-1] >= need_pairs:
                pos = int(np.searchsorted(accepted, need_pairs))
                self._counter = start + 2 * (pos + 1)
                sel = np.nonzero(ok[:pos + 1])[0]
            else:
                self._counter = start + 2 * m
                sel = np.nonzero(ok)[0]
            if sel.size == 0:
                continue
            v1, v2, s = v1[sel], v2[sel], s[sel]
            r = np.sqrt(-2.0 * np.log(s) / s)
            pair = np.empty(2 * s.size)
            pair[0::2] = v1 * r
            pair[1::2] = v2 * r
            take = min(pair.size, d - filled)
            out[filled:filled + take] = pair[:take]
            filled += take
            if take < pair.size:
                self._spare = float(pair[take])
        return out

    def gauss_matrix(self, rows: int, cols: int) -> np.ndarray:
        """(rows, cols) gaussians from this single stream, row-major order."""
        return self.gauss(rows * cols).reshape(rows, cols)


class RowStreams:
    """Vectorized bundle of per-row streams, ``split(base, i)`` for row i.

    Used by the batch samplers: row i of a batch always consumes stream
    ``parent.split(i)`` regardless of how work is chunked, so outputs are
    reproducible independent of worker count.
    """

    def __init__(self, parent: RngStream, rows: int) -> None:
        ids = (np.uint64(parent.stream_id & 0xFFFFFFFFFFFFFFFF)
               + (np.arange(1, rows + 1, dtype=np.uint64)) * _GOLDEN)
        seeds = _mix64(np.full(rows, np.uint64(parent.seed & 0xFFFFFFFFFFFFFFFF)))
        self._keys = _mix64(seeds + _mix64(ids) * _GOLDEN)
        self._counters = np.zeros(rows, dtype=np.uint64)
        self._spare = np.full(rows, np.nan)
        self.rows = rows

    def _uniform_pair(self, active: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        keys = self._keys[active]
        c = self._counters[active]
        one, two = np.uint64(1), np.uint64(2)
        b1 = _mix64(keys + (c + one) * _GOLDEN)
        b2 = _mix64(keys + (c + two) * _GOLDEN)
        self._counters[active] = c + two
        u1 = (b1 >> np.uint64(11)).astype(np.float64) * _INV_2_53
        u2 = (b2 >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u1, u2

    def gauss(self, cols: int) -> np.ndarray:
        """(rows, cols) gaussians; row i advances only stream i."""
        out = np.empty((self.rows, cols))
        filled = np.zeros(self.rows, dtype=np.int64)
        has_spare = ~np.isnan(self._spare)
        if has_spare.any():
            out[has_spare, 0] = self._spare[has_spare]
            filled[has_spare] = 1
            self._spare[has_spare] = np.nan
        while True:
            active = np.nonzero(filled < cols)[0]
            if active.size == 0:
                break
            u1, u2 = self._uniform_pair(active)
            v1 = 2.0 * u1 - 1.0
            v2 = 2.0 * u2 - 1.0
            s = v1 * v1 + v2 * v2
            ok = (s > 0.0) & (s < 1.0)
            rows_ok = active[ok]
            v1, v2, s = v1[ok], v2[ok], s[ok]
            r = np.sqrt(-2.0 * np.log(s) / s)
            g1 = v1 * r
            g2 = v2 * r
            f = filled[rows_ok]
            out[rows_ok, f] = g1
            room = f + 1 < cols
            out[rows_ok[room], f[room] + 1] = g2[room]
            self._spare[rows_ok[~room]] = g2[~room]
            filled[rows_ok] = np.minimum(f + 2, cols)
        return out


def gauss_vector(rng: RngStream, d: int) -> np.ndarray:
    """d standard-normal draws; advances the stream."""
    return rng.gauss(d)


# ---------------------------------------------------------------------------
# interpolant


def interpolant(x: np.ndarray, w: np.ndarray, t: float) -> np.ndarray:
    """t*x + sqrt(1 - t^2)*w, the noisy bridge between noise and data.

    Accepts matching vectors or batches (broadcast on leading axes).
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape[-1] != w.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {w.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return t * x + np.sqrt(1.0 - t * t) * w
