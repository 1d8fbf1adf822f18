"""Brownian paths on dyadic grids and their piecewise-linear interpolation.

Randomness is counter based: every Gaussian is a pure function of
(seed, level, grid index, coordinate), hashed with the splitmix64 finalizer
and pushed through the inverse normal CDF.  A path sampled at level N+1 is
therefore bit-identical to the level-N path refined once, regardless of the
order in which cells are generated.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.special import ndtri

from .errors import EmptyWindow, OutOfHorizon

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ROOT_TAG = np.uint64(0x5EED0001)
_BRIDGE_TAG = np.uint64(0x5EED0002)
_PATH_TAG = np.uint64(0x5EED0003)


def _mix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(0xBF58476D1CE4E5B9)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _u64(x):
    return np.atleast_1d(np.asarray(x, dtype=np.uint64))


def _gaussians(seeds, tag, level, index, r):
    """Standard normals of shape (len(seeds), len(index), r)."""
    s = _u64(seeds)[:, None, None]
    idx = _u64(index)[None, :, None]
    coord = np.arange(r, dtype=np.uint64)[None, None, :]
    h = _mix(s ^ tag)
    h = _mix(h + _u64(level) * _GOLDEN)
    h = _mix(h + idx * _GOLDEN)
    h = _mix(h + (coord + np.uint64(1)) * _GOLDEN)
    u = ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def path_seeds(master_seed: int, n: int) -> np.ndarray:
    """Per-path seeds derived from a master seed (uint64 array)."""
    base = _mix(_u64(master_seed) ^ _PATH_TAG)
    return _mix(base + np.arange(n, dtype=np.uint64) * _GOLDEN)


def root_level(T: float) -> int:
    """Smallest level at which T is a whole number of cells."""
    frac = Fraction(T).limit_denominator(1 << 40)
    if frac <= 0 or float(frac) != float(T):
        raise ValueError(f"horizon {T} is not a positive dyadic number")
    den = frac.denominator
    if den & (den - 1):
        raise ValueError(f"horizon {T} is not dyadic")
    return den.bit_length() - 1


def n_cells(T: float, N: int) -> int:
    m = T * 2.0 ** N
    if m != int(m) or m < 1:
        raise ValueError(f"horizon {T} is not a multiple of 2^-{N}")
    return int(m)


def sample_paths(r: int, N: int, T: float, seeds) -> np.ndarray:
    """Grid values of level-N paths for each seed, shape (P, T*2^N + 1, r)."""
    seeds = _u64(seeds)
    n0 = root_level(T)
    if N < n0:
        raise ValueError(f"level {N} is coarser than the horizon allows ({n0})")
    m0 = n_cells(T, n0)
    inc = _gaussians(seeds, _ROOT_TAG, n0, np.arange(m0), r) * np.sqrt(2.0 ** -n0)
    vals = np.zeros((len(seeds), m0 + 1, r))
    np.cumsum(inc, axis=1, out=vals[:, 1:])
    for level in range(n0, N):
        vals = refine_values(vals, level, seeds)
    return vals


def refine_values(values: np.ndarray, N: int, seeds) -> np.ndarray:
    """Insert Brownian-bridge midpoints into level-N grid values."""
    seeds = _u64(seeds)
    P, M1, r = values.shape
    out = np.empty((P, 2 * M1 - 1, r))
    out[:, ::2] = values
    mids = 2 * np.arange(M1 - 1) + 1
    z = _gaussians(seeds, _BRIDGE_TAG, N + 1, mids, r)
    out[:, 1::2] = 0.5 * (values[:, :-1] + values[:, 1:]) + np.sqrt(2.0 ** -(N + 2)) * z
    return out


@dataclass(frozen=True, eq=False)
class DyadicPath:
    """Level-N piecewise-linear path; ``seed is None`` marks a deterministic driver."""

    values: np.ndarray  # (T*2^N + 1, r)
    level: int
    horizon: float
    seed: int | None = None
    refinements: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if len(v) != n_cells(self.horizon, self.level) + 1:
            raise ValueError("value count does not match level and horizon")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_cells(self) -> int:
        return len(self.values) - 1

    @property
    def dt(self) -> float:
        return 2.0 ** -self.level

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt

    def slopes(self) -> np.ndarray:
        return np.diff(self.values, axis=0) * 2.0 ** self.level

    def _cell(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise OutOfHorizon(f"time outside [0, {self.horizon}]")
        # right-limit convention: a grid time belongs to the cell on its right
        m = np.minimum(np.floor(t * 2.0 ** self.level).astype(int), self.n_cells - 1)
        return t, m

    def evaluate(self, t):
        t, m = self._cell(t)
        frac = (t - m * self.dt) / self.dt
        v = self.values
        out = v[m] + frac[..., None] * (v[m + 1] - v[m])
        out = np.where((frac == 0)[..., None], v[m], out)
        return np.where((frac == 1)[..., None], v[m + 1], out)

    def slope(self, t):
        _, m = self._cell(t)
        return self.slopes()[m]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"w{i + 1}" for i in range(self.dim)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def sample_path(r: int, N: int, T: float, seed: int) -> DyadicPath:
    vals = sample_paths(r, N, T, [seed])[0]
    return DyadicPath(vals, N, T, int(seed))


def refine(path: DyadicPath) -> DyadicPath:
    """Level N+1 path; deterministic drivers are refined by linear interpolation."""
    if path.seed is None:
        v = path.values
        out = np.empty((2 * len(v) - 1, v.shape[1]))
        out[::2] = v
        out[1::2] = 0.5 * (v[:-1] + v[1:])
    else:
        out = refine_values(path.values[None], path.level, [path.seed])[0]
    return DyadicPath(out, path.level + 1, path.horizon, path.seed, path.refinements + 1)


def zero_path(r: int, N: int, T: float) -> DyadicPath:
    return DyadicPath(np.zeros((n_cells(T, N) + 1, r)), N, T)


def linear_path(rate, N: int, T: float) -> DyadicPath:
    """w_t = rate * t (rate is a scalar or an r-vector)."""
    rate = np.atleast_1d(np.asarray(rate, dtype=float))
    t = np.arange(n_cells(T, N) + 1) * 2.0 ** -N
    return DyadicPath(t[:, None] * rate[None, :], N, T)


# ---------------------------------------------------------------------------
# path norms
# ---------------------------------------------------------------------------


class HolderNorm(NamedTuple):
    value: float
    exact: bool  # False when the dyadic-pair approximation was used


_EXACT_LIMIT = 10_000


@njit(cache=True)
def _holder_exact(t, x, beta):
    n = t.shape[0]
    d = x.shape[1]
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dt = t[j] - t[i]
            if dt <= 0.0:
                continue
            s = 0.0
            for c in range(d):
                s += (x[j, c] - x[i, c]) ** 2
            val = np.sqrt(s) / dt ** beta
            if val > best:
                best = val
    return best


def _window(times, values, s, t):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(times) != len(values):
        raise ValueError("times and values differ in length")
    s = times[0] if s is None else s
    t = times[-1] if t is None else t
    keep = (times >= s) & (times <= t)
    if keep.sum() < 2:
        raise EmptyWindow(f"fewer than two samples in [{s}, {t}]")
    return times[keep], np.ascontiguousarray(values[keep])


def holder_norm(times, values, beta: float, s: float | None = None,
                t: float | None = None) -> HolderNorm:
    """sup |psi(u2) - psi(u1)| / (u2 - u1)^beta over sample pairs in [s, t]."""
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    tt, xx = _window(times, values, s, t)
    if len(tt) <= _EXACT_LIMIT:
        return HolderNorm(float(_holder_exact(tt, xx, beta)), True)
    best = 0.0
    lag = 1
    while lag < len(tt):
        dx = np.linalg.norm(xx[lag:] - xx[:-lag], axis=1)
        best = max(best, float((dx / (tt[lag:] - tt[:-lag]) ** beta).max()))
        lag *= 2
    return HolderNorm(best, False)


def total_variation(times, values, s: float | None = None, t: float | None = None) -> float:
    _, xx = _window(times, values, s, t)
    return float(np.linalg.norm(np.diff(xx, axis=0), axis=1).sum())


def sup_norm(times, values, s: float | None = None, t: float | None = None) -> float:
    _, xx = _window(times, values, s, t)
    return float(np.linalg.norm(xx, axis=1).max())
