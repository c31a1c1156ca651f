"""Closed-form velocity, interpolant density, and quantiles for targets
given as finite atom mixtures per condition.

For a target supported on atoms {u_k} with weights {w_k}, the density of
t*X + sqrt(1-t^2)*W is the Gaussian mixture sum_k w_k N(t*u_k, (1-t^2) I),
the posterior mean E[X | W_t = x] is a softmax-weighted atom average, and
the transport velocity follows as (E[X | W_t = x] - t*x) / (1 - t^2).
All mixture arithmetic is done in log-space with max-subtraction: near the
stopping time the exponents scale like 1/(1 - t^2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DiscreteConditionalTarget",
    "posterior_mean",
    "oracle_velocity",
    "interpolant_density",
    "score_from_velocity",
    "exact_quantile",
    "interpolant_quantile",
    "self_check",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DiscreteConditionalTarget:
    """Finite-atom conditional target: resolver maps y -> (atoms, weights).

    atoms: (k, dx) array, weights: (k,) positive, summing to 1.
    """

    resolver: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    dx: int
    dy: int = 0

    @staticmethod
    def _check(atoms: np.ndarray, weights: np.ndarray, dx: int) -> tuple[np.ndarray, np.ndarray]:
        atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if atoms.shape[0] < 1:
            raise ValueError("need at least one atom")
        if atoms.shape[1] != dx:
            raise ValueError(f"atoms have dim {atoms.shape[1]}, expected {dx}")
        if atoms.shape[0] != weights.size:
            raise ValueError("atoms/weights length mismatch")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()}, not 1")
        return atoms, weights

    @classmethod
    def fixed(cls, atoms, weights, dy: int = 0) -> "DiscreteConditionalTarget":
        """Same atoms for every condition (or unconditional, dy = 0)."""
        atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
        dx = atoms.shape[1]
        atoms, weights = cls._check(atoms, weights, dx)

        def resolve(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return atoms, weights

        return cls(resolver=resolve, dx=dx, dy=dy)

    @classmethod
    def from_table(cls, ys, atom_table, weight_table) -> "DiscreteConditionalTarget":
        """Nearest-neighbour lookup on a finite table of conditions."""
        ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
        dy = ys.shape[1]
        dx = np.atleast_2d(np.asarray(atom_table[0], dtype=np.float64)).shape[1]
        entries = [cls._check(a, w, dx) for a, w in zip(atom_table, weight_table)]

        def resolve(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            y = np.asarray(y, dtype=np.float64).ravel()
            i = int(np.argmin(np.sum((ys - y) ** 2, axis=1)))
            return entries[i]

        return cls(resolver=resolve, dx=dx, dy=dy)

    @classmethod
    def from_file(cls, path) -> "DiscreteConditionalTarget":
        """Load from JSON: {"dx":, "dy":, "conditions": [{"y": [...],
        "atoms": [[...]], "weights": [...]}, ...]} (single entry may omit y).
        """
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        dx, dy = int(doc["dx"]), int(doc.get("dy", 0))
        conds = doc["conditions"]
        if len(conds) == 1 and "y" not in conds[0]:
            return cls.fixed(conds[0]["atoms"], conds[0]["weights"], dy=dy)
        ys = [c["y"] for c in conds]
        return cls.from_table(ys,
                              [c["atoms"] for c in conds],
                              [c["weights"] for c in conds])

    # convenience accessors -------------------------------------------------

    def atoms_for(self, y) -> tuple[np.ndarray, np.ndarray]:
        y = np.zeros(self.dy) if y is None else np.asarray(y, dtype=np.float64)
        return self._check(*self.resolver(y), self.dx)

    def conditional_mean(self, y=None) -> np.ndarray:
        atoms, weights = self.atoms_for(y)
        return weights @ atoms

    def velocity_field(self):
        """Batched velocity callable (x:(B,dx), y, t) -> (B,dx) for samplers."""

        def field(x: np.ndarray, y, t) -> np.ndarray:
            return oracle_velocity(self, x, y, t)

        field.dx = self.dx
        return field


def _check_t(t, lo_open: bool = False) -> np.ndarray:
    """Validate t in [0, 1) (scalar or per-row array); returns as array."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= 1.0):
        raise ValueError(f"t must be < 1, got {t}")
    if lo_open and np.any(t <= 0.0):
        raise ValueError(f"t must be > 0, got {t}")
    if np.any(t < 0.0):
        raise ValueError(f"t must be >= 0, got {t}")
    return t


def _log_resp(atoms: np.ndarray, weights: np.ndarray,
              x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Unnormalized log posterior weights, shape (B, k); t scalar or (B,)."""
    tb = t.reshape(-1, 1, 1) if t.ndim else t
    var = 1.0 - t * t
    varb = var.reshape(-1, 1) if t.ndim else var
    # (B, k): squared distances to each shifted atom
    d2 = np.sum((x[:, None, :] - tb * atoms[None, :, :]) ** 2, axis=2)
    return np.log(weights)[None, :] - d2 / (2.0 * varb)


def posterior_mean(target: DiscreteConditionalTarget, x, y, t) -> np.ndarray:
    """E[X | W_t = x, Y = y]: softmax-weighted atom average.

    t may be a scalar or a per-row array matching a batched x.
    """
    t = _check_t(t)
    atoms, weights = target.atoms_for(y)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    # softmax logits drop the terms constant across atoms: the full
    # exponent -(|x - t u|^2)/(2 var) reduces to t x.u/var - t^2|u|^2/(2 var)
    var = 1.0 - t * t
    tb = t.reshape(-1, 1) if t.ndim else t
    varb = var.reshape(-1, 1) if t.ndim else var
    u2 = np.sum(atoms * atoms, axis=1)
    logr = (np.log(weights)[None, :]
            + (tb / varb) * (xb @ atoms.T)
            - (tb * tb / (2.0 * varb)) * u2[None, :])
    # axis-1 reductions over a handful of atoms are slow in numpy; do the
    # max as a column sweep and the normalising sum as a matmul instead
    peak = logr[:, 0].copy()
    for k in range(1, logr.shape[1]):
        np.maximum(peak, logr[:, k], out=peak)
    logr -= peak[:, None]
    r = np.exp(logr)
    r /= r @ np.ones((r.shape[1], 1))
    out = r @ atoms
    return out[0] if single else out


def oracle_velocity(target: DiscreteConditionalTarget, x, y, t) -> np.ndarray:
    """Transport velocity (E[X | W_t = x, Y = y] - t*x) / (1 - t^2).

    At t = 0 this equals E[X | Y = y] independently of x.
    """
    t = _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    pm = posterior_mean(target, x, y, t)
    tb = t.reshape(-1, 1) if t.ndim else t
    return (pm - tb * x) / (1.0 - tb * tb)


def interpolant_density(target: DiscreteConditionalTarget, x, y, t):
    """Density of t*X + sqrt(1-t^2)*W given Y = y at x (scalar or batch)."""
    t = _check_t(t)
    atoms, weights = target.atoms_for(y)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    var = 1.0 - t * t
    logr = _log_resp(atoms, weights, xb, t)
    log_norm = 0.5 * target.dx * (_LOG_2PI + np.log(var))
    logr -= log_norm.reshape(-1, 1) if t.ndim else log_norm
    m = logr.max(axis=1)
    dens = np.exp(m) * np.exp(logr - m[:, None]).sum(axis=1)
    return float(dens[0]) if single else dens


def score_from_velocity(x, t: float, v) -> np.ndarray:
    """Invert v = (x + s)/t to the log-density gradient s = t*v - x.

    The relation degenerates at t = 0 (velocity is the meaningful object
    there), so t must be strictly positive.
    """
    _check_t(t, lo_open=True)
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return t * v - x


def exact_quantile(target: DiscreteConditionalTarget, p: float, y=None) -> float:
    """Quantile of the 1-D atom distribution itself (discrete CDF)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if target.dx != 1:
        raise ValueError("exact_quantile requires dx = 1")
    atoms, weights = target.atoms_for(y)
    order = np.argsort(atoms[:, 0])
    a = atoms[order, 0]
    cum = np.cumsum(weights[order])
    idx = int(np.searchsorted(cum, p, side="left"))
    return float(a[min(idx, a.size - 1)])


def interpolant_quantile(target: DiscreteConditionalTarget, p: float,
                         t: float, y=None, tol: float = 1e-10) -> float:
    """Quantile of the 1-D mixture f_t by bisection on its exact CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if target.dx != 1:
        raise ValueError("interpolant_quantile requires dx = 1")
    _check_t(t)
    atoms, weights = target.atoms_for(y)
    mu = t * atoms[:, 0]
    sd = np.sqrt(1.0 - t * t)

    def cdf(x: float) -> float:
        from math import erf
        z = (x - mu) / (sd * np.sqrt(2.0))
        return float(weights @ (0.5 * (1.0 + np.array([erf(v) for v in z]))))

    lo = float(mu.min() - 10.0 * sd)
    hi = float(mu.max() + 10.0 * sd)
    while cdf(lo) > p:
        lo -= 10.0 * sd
    while cdf(hi) < p:
        hi += 10.0 * sd
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def self_check(target: DiscreteConditionalTarget, T: float = 0.99,
               probes: int = 1000, rng=None, y=None) -> dict:
    """Internal consistency probes for a closed-form target.

    Returns worst-case discrepancies over `probes` random points:
      score_rel_err   - velocity-implied log-density gradient vs central
                        finite differences of log f_t
      mean_limit_err  - velocity at t -> 0 vs the conditional mean
      lipschitz_ratio - empirical |v(x1)-v(x2)|/|x1-x2| divided by the
                        dx/(1-T)^2 envelope (valid for atoms in the unit
                        ball; ratios must stay below 1)
    """
    from .core import RngStream

    if rng is None:
        rng = RngStream(0, stream_id=0x5E1FC0DE)
    dx = target.dx
    mean = target.conditional_mean(y)

    score_err = 0.0
    lip_ratio = 0.0
    mean_err = 0.0
    envelope = dx / (1.0 - T) ** 2
    for i in range(probes):
        t = 0.05 + (T - 0.05) * float(rng.uniform(1)[0])
        x = rng.gauss(dx)
        v = oracle_velocity(target, x, y, t)
        s = score_from_velocity(x, t, v)
        # central differences on log f_t; h balances truncation vs cancellation
        h = 1e-5 * max(1.0, float(np.abs(x).max()))
        for j in range(dx):
            e = np.zeros(dx)
            e[j] = h
            fd = (np.log(interpolant_density(target, x + e, y, t))
                  - np.log(interpolant_density(target, x - e, y, t))) / (2.0 * h)
            rel = abs(fd - s[j]) / max(1.0, abs(s[j]))
            score_err = max(score_err, rel)

        v0 = oracle_velocity(target, x, y, 1e-7)
        mean_err = max(mean_err, float(np.abs(v0 - mean).max()))

        x2 = x + rng.gauss(dx) * 0.5
        v2 = oracle_velocity(target, x2, y, t)
        gap = float(np.linalg.norm(x2 - x))
        if gap > 1e-9:
            slope = float(np.linalg.norm(v2 - v)) / gap
            lip_ratio = max(lip_ratio, slope / envelope)

    return {"score_rel_err": score_err,
            "mean_limit_err": mean_err,
            "lipschitz_ratio": lip_ratio}
