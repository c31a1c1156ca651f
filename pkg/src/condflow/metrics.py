"""Evaluation metrics: 1-D Gaussian KDE, total variation on a grid,
1-D Wasserstein-2, conditional-moment MSEs, and Student-t prediction
intervals with empirical coverage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Kde1D",
    "kde_fit",
    "tv_distance",
    "w2_1d",
    "moment_mse",
    "t_quantile",
    "prediction_interval",
    "coverage",
    "IntervalReport",
    "EvalReport",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Kde1D:
    samples: np.ndarray
    h: float

    def __post_init__(self) -> None:
        s = np.ascontiguousarray(self.samples, dtype=np.float64).ravel()
        if s.size < 2:
            raise ValueError("need at least 2 samples")
        if not self.h > 0.0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "samples", s)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        z = (x[..., None] - self.samples) / self.h
        return np.exp(-0.5 * z * z).sum(axis=-1) / (self.samples.size * self.h * _SQRT_2PI)

    def __call__(self, x) -> np.ndarray:
        return self.density(x)


def kde_fit(samples) -> Kde1D:
    """Silverman bandwidth h = 1.06 sigma n^(-1/5); constant samples are an error."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 2:
        raise ValueError("need at least 2 samples")
    sigma = s.std(ddof=1)
    if sigma <= 0.0:
        raise ValueError("samples are constant; bandwidth would be zero")
    return Kde1D(samples=s, h=1.06 * sigma * s.size ** (-0.2))


def tv_distance(p, q, lo: float, hi: float, points: int = 2048) -> float:
    """Trapezoid of (1/2)|p - q| over [lo, hi]; values land in [0, 1]."""
    if points < 16:
        raise ValueError("points must be >= 16")
    if lo >= hi:
        raise ValueError("need lo < hi")
    grid = np.linspace(lo, hi, points)
    diff = 0.5 * np.abs(np.asarray(p(grid), dtype=np.float64)
                        - np.asarray(q(grid), dtype=np.float64))
    return float(np.trapezoid(diff, grid))


def w2_1d(samples_a, samples_b=None, quantile=None) -> float:
    """Two-sample mode pairs sorted values; quantile mode compares the sorted
    sample to Q((i - 0.5)/n)."""
    a = np.sort(np.asarray(samples_a, dtype=np.float64).ravel())
    if a.size == 0:
        raise ValueError("empty input")
    if (samples_b is None) == (quantile is None):
        raise ValueError("give exactly one of samples_b or quantile")
    if samples_b is not None:
        b = np.sort(np.asarray(samples_b, dtype=np.float64).ravel())
        if b.size != a.size:
            raise ValueError("two-sample mode needs equal lengths")
    else:
        probs = (np.arange(a.size) + 0.5) / a.size
        b = np.asarray([quantile(p) for p in probs], dtype=np.float64)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def moment_mse(est_means, est_stds, true_means, true_stds):
    """(MSE over means, MSE over stds) across aligned per-condition lists."""
    em = np.asarray(est_means, dtype=np.float64).ravel()
    es = np.asarray(est_stds, dtype=np.float64).ravel()
    tm = np.asarray(true_means, dtype=np.float64).ravel()
    ts = np.asarray(true_stds, dtype=np.float64).ravel()
    if not em.size == es.size == tm.size == ts.size:
        raise ValueError("length mismatch")
    return float(np.mean((em - tm) ** 2)), float(np.mean((es - ts) ** 2))


# ---------------------------------------------------------------------------
# Student-t quantiles via the regularized incomplete beta function


def _betacf(a: float, b: float, x: float) -> float:
    # Lentz's algorithm for the continued fraction of I_x(a, b)
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def _betainc(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - lbeta)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _t_cdf(df: int, x: float) -> float:
    if x == 0.0:
        return 0.5
    ib = _betainc(df / 2.0, 0.5, df / (df + x * x))
    return 1.0 - 0.5 * ib if x > 0.0 else 0.5 * ib


def t_quantile(df: int, p: float) -> float:
    """Inverse Student-t CDF by bisection, absolute tolerance 1e-8."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while _t_cdf(df, lo) > p:
        lo *= 2.0
        if lo < -1e12:
            break
    while _t_cdf(df, hi) < p:
        hi *= 2.0
        if hi > 1e12:
            break
    while hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        if _t_cdf(df, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def prediction_interval(samples, alpha: float):
    """mean +- t_{N*-1, 1-alpha/2} * s * sqrt(1 + 1/N*); constant samples
    give a zero-width interval."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 2:
        raise ValueError("need N* >= 2 samples")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    mean = float(s.mean())
    sd = float(s.std(ddof=1))
    if sd == 0.0:
        return mean, mean
    half = t_quantile(s.size - 1, 1.0 - alpha / 2.0) * sd * math.sqrt(1.0 + 1.0 / s.size)
    return mean - half, mean + half


def coverage(intervals, truths) -> float:
    """Fraction of truths inside their interval, endpoints inclusive."""
    ivs = list(intervals)
    ts = np.asarray(truths, dtype=np.float64).ravel()
    if len(ivs) != ts.size:
        raise ValueError("length mismatch")
    hits = sum(1 for (lo, hi), t in zip(ivs, ts) if lo <= t <= hi)
    return hits / ts.size


@dataclass(frozen=True)
class IntervalReport:
    lowers: np.ndarray
    uppers: np.ndarray
    hits: np.ndarray
    cr: float

    @classmethod
    def build(cls, intervals, truths) -> "IntervalReport":
        lo = np.asarray([iv[0] for iv in intervals], dtype=np.float64)
        hi = np.asarray([iv[1] for iv in intervals], dtype=np.float64)
        if np.any(lo > hi):
            raise ValueError("interval with lower > upper")
        t = np.asarray(truths, dtype=np.float64).ravel()
        if t.size != lo.size:
            raise ValueError("length mismatch")
        hits = (lo <= t) & (t <= hi)
        return cls(lowers=lo, uppers=hi, hits=hits, cr=float(hits.mean()))


@dataclass
class EvalReport:
    """Accumulated metric records plus wall-clock timings.

    The CSV holds only (metric, value, std) so a fixed-seed rerun reproduces
    it byte for byte; timings go in the text summary.
    """

    records: list = field(default_factory=list)
    timings: list = field(default_factory=list)

    def add(self, metric: str, value: float, std: float = float("nan"),
            runtime: float = float("nan")) -> None:
        if "," in metric or "\n" in metric:
            raise ValueError("metric names must be comma- and newline-free")
        self.records.append((metric, float(value), float(std)))
        self.timings.append(float(runtime))

    def to_csv(self) -> str:
        lines = ["metric,value,std"]
        for name, value, std in self.records:
            lines.append(f"{name},{value:.17g},{std:.17g}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = []
        for (name, value, std), runtime in zip(self.records, self.timings):
            parts = [f"{name}: {value:.6g}"]
            if not math.isnan(std):
                parts.append(f"std {std:.3g}")
            if not math.isnan(runtime):
                parts.append(f"runtime {runtime:.2f}s")
            lines.append("  ".join(parts))
        return "\n".join(lines) + "\n"

    def save(self, csv_path, text_path=None) -> None:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())
        if text_path is not None:
            with open(text_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.to_text())
