"""Monte-Carlo diagnostics: moment scaling, Holder tails, variation growth,
weak-convergence ladders and the Kolmogorov-Smirnov distance.

Everything here is a deterministic function of its inputs; ensembles are
reduced with numpy's pairwise summation so results do not depend on how the
paths were produced.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateWindow, InsufficientSamples
from .geometry import Domain
from .fields import FieldSpec
from .reflect import DEFAULT_SUBSTEPS, ReflectedTrajectory, integrate_ensemble
from .wiener import holder_norm, path_seeds, refine_values, sample_paths

MIN_PATHS = 100


@dataclass
class EnsembleSummary:
    """A table of named columns plus pass/fail flags."""

    experiment: str
    columns: dict
    n_samples: int
    flags: dict = dc_field(default_factory=dict)
    extra: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_csv(self, path):
        names = list(self.columns)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*(self.columns[n] for n in names)):
                w.writerow([repr(float(v)) for v in row])

    def report(self) -> str:
        lines = [f"{self.experiment} (n={self.n_samples})"]
        for k, v in self.extra.items():
            lines.append(f"  {k} = {v}")
        for k, ok in self.flags.items():
            lines.append(f"  {'PASS' if ok else 'FAIL'} {k}")
        return "\n".join(lines)


def _need(n, what="paths"):
    if n < MIN_PATHS:
        raise InsufficientSamples(f"need at least {MIN_PATHS} {what}, got {n}")


def _times_values(ensemble, times=None):
    if times is not None:
        return np.asarray(times, dtype=float), np.asarray(ensemble, dtype=float)
    return np.asarray(ensemble.t), np.asarray(ensemble.x)


def _lag_steps(t, lags):
    dt = t[1] - t[0]
    steps = []
    for lag in lags:
        k = lag / dt
        if abs(k - round(k)) > 1e-9 or round(k) < 1:
            raise ValueError(f"lag {lag} is not a multiple of the sample spacing {dt}")
        steps.append(int(round(k)))
    return steps


def moment_scaling(ensemble, m: int, lags: Sequence[float], times=None) -> EnsembleSummary:
    """E|X_t - X_s|^(2^(m+1)) per lag over all grid pairs, with a log-log slope.

    ``ensemble`` is a TrajectoryEnsemble, or an array (P, R, d) with ``times``.
    """
    if m not in (0, 1, 2):
        raise ValueError("m must be 0, 1 or 2")
    t, x = _times_values(ensemble, times)
    if x.ndim == 2:
        x = x[..., None]
    _need(x.shape[0])
    power = 2 ** (m + 1)
    means, ses = [], []
    for k in _lag_steps(t, lags):
        inc = np.linalg.norm(x[:, k:] - x[:, :-k], axis=2) ** power
        per_path = inc.mean(axis=1)
        means.append(per_path.mean())
        ses.append(per_path.std(ddof=1) / math.sqrt(len(per_path)))
    means = np.array(means)
    lags = np.asarray(lags, dtype=float)
    slope = float("nan")
    if np.all(means > 0):
        slope = float(np.polyfit(np.log(lags), np.log(means), 1)[0])
    return EnsembleSummary(f"moment_scaling(m={m})",
                           {"lag": lags, "moment": means, "se": np.array(ses)},
                           x.shape[0], extra={"slope": slope})


def holder_tail(norms_or_ensemble, beta: float = 0.25, R_grid: Sequence[float] = (),
                drivers=None, driver_times=None) -> EnsembleSummary:
    """Empirical P(max(|W|_beta, |X|_beta, |L|_beta) >= R) on a grid of R.

    Pass either a 1-d array of per-path maxima, or an ensemble together with
    the driver grid values ``drivers`` (P, M + 1, r) and their times.
    """
    if not 0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 1/2)")
    if isinstance(norms_or_ensemble, np.ndarray) and norms_or_ensemble.ndim == 1:
        norms = norms_or_ensemble
    else:
        ens = norms_or_ensemble
        norms = np.empty(len(ens))
        for i in range(len(ens)):
            vals = [holder_norm(ens.t, ens.x[i], beta).value,
                    holder_norm(ens.t, ens.l[i], beta).value]
            if drivers is not None:
                vals.append(holder_norm(driver_times, drivers[i], beta).value)
            norms[i] = max(vals)
    _need(len(norms))
    R = np.asarray(R_grid, dtype=float)
    prob = (norms[None, :] >= R[:, None]).mean(axis=1)
    ok = prob > 0
    exponent = float("nan")
    if ok.sum() >= 2:
        exponent = float(-np.polyfit(np.log(R[ok]), np.log(prob[ok]), 1)[0])
    return EnsembleSummary("holder_tail", {"R": R, "tail": prob}, len(norms),
                           flags={"tail nonincreasing": bool(np.all(np.diff(prob) <= 0))},
                           extra={"beta": beta, "tail_exponent": exponent})


def variation_growth(traj: ReflectedTrajectory, windows: Sequence[tuple[float, float]],
                     R: float = 1.0) -> EnsembleSummary:
    """Per window, (|L|_t - |L|_s) / (((t - s) R^-4 |X|_{1/4}^4 + 1) sup|L|).

    ``sup|L|`` is the sup norm of L over the window.  A window with no pushing
    has ratio 0; pushing with sup|L| = 0 cannot occur and raises.
    """
    rows = {"s": [], "t": [], "dvar": [], "holder_x": [], "sup_l": [], "ratio": []}
    for s, t in windows:
        if s < traj.t[0] or t > traj.t[-1] + 1e-12 or not s < t:
            raise ValueError(f"window ({s}, {t}) is not inside the horizon")
        keep = (traj.t >= s - 1e-12) & (traj.t <= t + 1e-12)
        idx = np.flatnonzero(keep)
        dvar = float(traj.lvar[idx[-1]] - traj.lvar[idx[0]])
        hx = holder_norm(traj.t[idx], traj.x[idx], 0.25).value
        sup_l = float(np.linalg.norm(traj.l[idx], axis=1).max())
        if sup_l == 0:
            if dvar > 0:
                raise DegenerateWindow(f"pushing in ({s}, {t}) with zero sup|L|")
            ratio = 0.0
        else:
            ratio = dvar / (((t - s) * R ** -4 * hx ** 4 + 1.0) * sup_l)
        for k, v in zip(rows, (s, t, dvar, hx, sup_l, ratio)):
            rows[k].append(v)
    cols = {k: np.array(v) for k, v in rows.items()}
    return EnsembleSummary("variation_growth", cols, 1,
                           extra={"max_ratio": float(cols["ratio"].max(initial=0.0))})


def weak_convergence_ladder(domain: Domain, field: FieldSpec, f: Callable, x0,
                            levels: Sequence[int], paths: int, seed: int, T: float = 1.0,
                            substeps: int = DEFAULT_SUBSTEPS, n_se: float = 2.0,
                            chunk: int = 2000) -> EnsembleSummary:
    """Mean of f(X_T) per level, one Brownian lineage per path refined upward.

    Successive differences use paired standard errors (same lineage at both
    levels).  The flag checks that each difference exceeds the next by more
    than ``n_se`` combined standard errors.
    """
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be increasing")
    _need(paths)
    seeds = path_seeds(seed, paths)
    fx = np.empty((len(levels), paths))
    for c0 in range(0, paths, chunk):
        sl = slice(c0, min(paths, c0 + chunk))
        vals = sample_paths(field.r, levels[0], T, seeds[sl])
        cur = levels[0]
        for li, N in enumerate(levels):
            while cur < N:
                vals = refine_values(vals, cur, seeds[sl])
                cur += 1
            M = vals.shape[1] - 1
            ens = integrate_ensemble(domain, field, vals, N, x0, substeps, stride=M * substeps)
            fx[li, sl] = np.array([f(z) for z in ens.x[:, -1]])
    mean = fx.mean(axis=1)
    se = fx.std(axis=1, ddof=1) / math.sqrt(paths)
    diff = np.abs(np.diff(mean))
    dse = (fx[1:] - fx[:-1]).std(axis=1, ddof=1) / math.sqrt(paths)
    cols = {"level": np.array(levels, float), "mean": mean, "se": se,
            "delta": np.append(diff, np.nan), "delta_se": np.append(dse, np.nan)}
    decreasing = [bool(diff[i] - diff[i + 1] > n_se * math.hypot(dse[i], dse[i + 1]))
                  for i in range(len(diff) - 1)]
    return EnsembleSummary("weak_convergence_ladder", cols, paths,
                           flags={"delta decreasing": all(decreasing) if decreasing else True},
                           extra={"decreasing_by_level": decreasing})


def ks_statistic(sample, cdf: Callable) -> float:
    """sup |F_n - F| over the sample points, checking both one-sided gaps."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ValueError("sample is empty")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max((i / n - F).max(), (F - (i - 1) / n).max()))


def folded_normal_cdf(x, scale: float = 1.0):
    """P(|Z| <= x) = 2 Phi(x / scale) - 1 = erf(x / (scale sqrt 2)) for x >= 0."""
    from scipy.special import erf
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, erf(np.maximum(x, 0) / (scale * math.sqrt(2))), 0.0)


def folded_normal_capped_mean(cap: float = 2.0) -> float:
    """E[min(|Z|, cap)] by quadrature of the survival function."""
    from scipy.integrate import quad
    from scipy.special import erfc
    val, _ = quad(lambda u: erfc(u / math.sqrt(2)), 0.0, cap, epsabs=1e-13, epsrel=1e-13)
    return val
