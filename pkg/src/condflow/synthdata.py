"""Synthetic data generators, CSV ingestion, and min-max scaling.

The 2-D toy shapes are this package's canonical definitions (frozen
constants, seeded draws); the three regression models come with their exact
conditional mean/std functions so moment errors can be scored against
ground truth. The x-axis coordinate is the response X and the y-axis
coordinate the condition Y for every shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DataSpec, Dataset, RngStream

__all__ = [
    "SHAPES",
    "REGRESSION_MODELS",
    "ShapeSpec",
    "RegressionModelSpec",
    "ScalingRecord",
    "gen_shape",
    "gen_regression",
    "regression_truth",
    "shape_conditional_density",
    "load_csv",
    "save_csv",
]

SHAPES = ("four_squares", "checkerboard", "pinwheel", "rings", "swiss_roll")
REGRESSION_MODELS = ("M1", "M2", "M3")

_RING_RADII = np.array([0.5, 1.0, 1.5, 2.0])
_RING_SIGMA = 0.02


@dataclass(frozen=True)
class ShapeSpec:
    shape: str
    n: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class RegressionModelSpec:
    model: str
    n: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in REGRESSION_MODELS:
            raise ValueError(
                f"unknown model {self.model!r}; choose from {REGRESSION_MODELS}")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class ScalingRecord:
    """Invertible per-coordinate affine map onto [0, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(hi <= lo):
            raise ValueError("need hi > lo in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def fit(cls, values: np.ndarray) -> "ScalingRecord":
        lo = values.min(axis=0)
        hi = values.max(axis=0)
        degenerate = hi <= lo
        hi = np.where(degenerate, lo + 1.0, hi)
        return cls(lo=lo, hi=hi)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * (self.hi - self.lo) + self.lo


# ---------------------------------------------------------------------------
# 2-D toy shapes


def _gen_four_squares(n: int, rng: RngStream) -> np.ndarray:
    corner = (rng.uniform(2 * n).reshape(n, 2) < 0.5) * 2.0 - 1.0
    offset = rng.uniform(2 * n).reshape(n, 2) - 0.5
    return corner + offset


def _gen_checkerboard(n: int, rng: RngStream) -> np.ndarray:
    x1 = rng.uniform(n) * 4.0 - 2.0
    u = rng.uniform(n)
    j = (rng.uniform(n) < 0.5).astype(np.float64)
    x2 = u + 2.0 * j - 2.0 + np.floor(x1 + 2.0) % 2
    return np.column_stack([x1, x2])


def _gen_pinwheel(n: int, rng: RngStream) -> np.ndarray:
    arm = (rng.uniform(n) * 5.0).astype(np.int64)
    a = rng.gauss(n) * 0.3 + 1.0
    b = rng.gauss(n) * 0.05
    theta = arm * (2.0 * np.pi / 5.0) + 0.25 * a * a * np.sign(a)
    c, s = np.cos(theta), np.sin(theta)
    return np.column_stack([a * c - b * s, a * s + b * c])


def _gen_rings(n: int, rng: RngStream) -> np.ndarray:
    r = _RING_RADII[(rng.uniform(n) * 4.0).astype(np.int64)]
    theta = rng.uniform(n) * 2.0 * np.pi
    noise = rng.gauss_matrix(n, 2) * _RING_SIGMA
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)]) + noise


def _gen_swiss_roll(n: int, rng: RngStream) -> np.ndarray:
    theta = rng.uniform(n) * 3.0 * np.pi + 1.5 * np.pi
    scale = 2.0 / (4.5 * np.pi)
    pts = np.column_stack([theta * np.cos(theta), theta * np.sin(theta)]) * scale
    return pts + rng.gauss_matrix(n, 2) * 0.05


_SHAPE_FNS = {
    "four_squares": _gen_four_squares,
    "checkerboard": _gen_checkerboard,
    "pinwheel": _gen_pinwheel,
    "rings": _gen_rings,
    "swiss_roll": _gen_swiss_roll,
}


def gen_shape(spec: ShapeSpec) -> Dataset:
    """dx = 1 (x-axis coordinate), dy = 1 (y-axis coordinate)."""
    rng = RngStream(spec.seed, stream_id=hash_stream(spec.shape))
    pts = _SHAPE_FNS[spec.shape](spec.n, rng)
    return Dataset(xs=pts[:, :1], ys=pts[:, 1:], spec=DataSpec(dx=1, dy=1))


def hash_stream(name: str) -> int:
    """Stable stream id for a generator name (fnv-1a, 64-bit)."""
    h = 0xCBF29CE484222325
    for ch in name.encode():
        h = ((h ^ ch) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


# conditional densities of X given the y-axis value, where a closed slice
# form exists; None means "use a reference-sample KDE fallback"


def _four_squares_slice(y: float):
    if not (-1.5 <= y <= -0.5 or 0.5 <= y <= 1.5):
        return None

    def dens(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        inside = ((-1.5 <= x) & (x <= -0.5)) | ((0.5 <= x) & (x <= 1.5))
        return np.where(inside, 0.5, 0.0)

    return dens


def _checkerboard_slice(y: float):
    if not -2.0 <= y <= 2.0:
        return None
    parity = int(math.floor(y + 2.0)) % 2

    def dens(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        col = np.floor(x + 2.0).astype(np.int64) % 2
        inside = (x >= -2.0) & (x < 2.0) & (col == parity)
        return np.where(inside, 0.5, 0.0)

    return dens


def _rings_slice(y: float, n_theta: int = 2048):
    # p(x, y) = sum_r (1/4) E_theta[ phi_sigma(x - r cos) phi_sigma(y - r sin) ];
    # the theta average is a trapezoid over a periodic integrand
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    sig2 = _RING_SIGMA ** 2
    cx = np.concatenate([r * np.cos(theta) for r in _RING_RADII])
    cy = np.concatenate([r * np.sin(theta) for r in _RING_RADII])
    wy = np.exp(-0.5 * (y - cy) ** 2 / sig2)
    norm = wy.sum()
    if norm <= 0.0:
        return None

    def dens(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        e = np.exp(-0.5 * (x[:, None] - cx[None, :]) ** 2 / sig2)
        return (e @ wy) / (norm * np.sqrt(2.0 * np.pi * sig2))

    return dens


def shape_conditional_density(shape: str, y: float):
    """Exact p(x | y-axis = y) where a closed slice form exists, else None."""
    if shape == "four_squares":
        return _four_squares_slice(y)
    if shape == "checkerboard":
        return _checkerboard_slice(y)
    if shape == "rings":
        return _rings_slice(y)
    return None


# ---------------------------------------------------------------------------
# regression models


def gen_regression(spec: RegressionModelSpec) -> Dataset:
    rng = RngStream(spec.seed, stream_id=hash_stream(spec.model))
    n = spec.n
    if spec.model in ("M1", "M2"):
        ys = rng.gauss_matrix(n, 5)
        eps = rng.gauss(n)
        if spec.model == "M1":
            x = (ys[:, 0] ** 2 + np.exp(ys[:, 1] + 0.25 * ys[:, 2])
                 + np.cos(ys[:, 3] + ys[:, 4]) + eps)
        else:
            sd = 0.5 + 0.5 * ys[:, 1] ** 2 + 0.5 * ys[:, 4] ** 2
            x = (ys[:, 0] ** 2 + np.exp(ys[:, 1] + 0.25 * ys[:, 2])
                 + ys[:, 3] - ys[:, 4] + sd * eps)
        return Dataset(xs=x[:, None], ys=ys, spec=DataSpec(dx=1, dy=5))
    # M3: symmetric two-component mixture around +-Y
    y = rng.gauss(n)
    u = rng.uniform(n)
    z = rng.gauss(n) * 0.25
    x = np.where(u <= 0.5, -y, y) + z
    return Dataset(xs=x[:, None], ys=y[:, None], spec=DataSpec(dx=1, dy=1))


def regression_truth(model: str):
    """(mean_fn, std_fn) taking a (dy,) or (B, dy) condition array."""

    def _cols(y):
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        return y

    if model == "M1":
        return (lambda y: (lambda c: c[:, 0] ** 2 + np.exp(c[:, 1] + 0.25 * c[:, 2])
                           + np.cos(c[:, 3] + c[:, 4]))(_cols(y)),
                lambda y: np.ones(_cols(y).shape[0]))
    if model == "M2":
        return (lambda y: (lambda c: c[:, 0] ** 2 + np.exp(c[:, 1] + 0.25 * c[:, 2])
                           + c[:, 3] - c[:, 4])(_cols(y)),
                lambda y: (lambda c: 0.5 + 0.5 * c[:, 1] ** 2
                           + 0.5 * c[:, 4] ** 2)(_cols(y)))
    if model == "M3":
        return (lambda y: np.zeros(_cols(y).shape[0]),
                lambda y: np.sqrt(_cols(y)[:, 0] ** 2 + 0.0625))
    raise ValueError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# CSV in/out


def save_csv(dataset: Dataset, path) -> None:
    """Header x0..,y0.., 17 significant digits, LF newlines."""
    dx, dy = dataset.spec.dx, dataset.spec.dy
    header = ",".join([f"x{i}" for i in range(dx)] + [f"y{i}" for i in range(dy)])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        both = np.hstack([dataset.xs, dataset.ys])
        for row in both:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_csv(path, dx: int, dy: int, scale: bool = False):
    """(Dataset, ScalingRecord | None); first dx columns are X, next dy are Y."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise ValueError(f"{path}: missing header row")
        ncols = dx + dy
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) < ncols:
                raise ValueError(
                    f"{path}:{lineno}: expected >= {ncols} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts[:ncols]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    xs, ys = arr[:, :dx], arr[:, dx:dx + dy]
    record = None
    if scale:
        record = ScalingRecord.fit(arr[:, :dx + dy])
        scaled = record.apply(arr[:, :dx + dy])
        xs, ys = scaled[:, :dx], scaled[:, dx:dx + dy]
    spec = DataSpec(dx=dx, dy=dy)
    return Dataset(xs=xs, ys=ys, spec=spec), record
