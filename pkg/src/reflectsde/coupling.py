"""Synchronous and mirror couplings of two reflected Brownian motions.

Both processes live in the same planar domain and are advanced on a shared
substep grid with the catch-up scheme.  The pair is declared coalesced once
it comes within ``delta_coal`` (or, for the mirror coupling, once the two
points cross the bisector between substeps).  After that the synchronous
pair moves together and the mirror pair is frozen.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from numba import njit

from .errors import OutOfReach
from .geometry import PROJECTORS, Domain, LipDomain, signed_distance_kernel
from .reflect import DEFAULT_SUBSTEPS, MAX_SUBSTEPS
from .wiener import DyadicPath


class CouplingKind(enum.Enum):
    SYNCHRONOUS = "synchronous"
    MIRROR = "mirror"


class _Coalesced:
    """Marker returned by ``angle`` for (numerically) coincident points."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "Coalesced"

    def __bool__(self):
        return False


Coalesced = _Coalesced()


def angle(x, y, delta_coal: float = 0.0):
    """arg(y - x) in (-pi, pi], or ``Coalesced`` when |y - x| <= delta_coal."""
    dx = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    r = math.hypot(dx[0], dx[1])
    if r <= delta_coal:
        return Coalesced
    return math.atan2(dx[1], dx[0])


def _make_couple(proj):
    def kernel(dp, half_reach, mirror, slopes, x0, y0, h, nsub, stride, delta,
               xs, ys, co, lv, yv):
        """Returns the first coalesced substep (-1 if none) or -(k + 2) on OutOfReach."""
        x = x0.copy()
        y = y0.copy()
        xp = np.empty(2)
        yp = np.empty(2)
        xn = np.empty(2)
        yn = np.empty(2)
        vy = np.empty(2)
        lvx = 0.0
        lvy = 0.0
        yvx = 0.0
        yvy = 0.0
        tau = -1
        if math.hypot(y[0] - x[0], y[1] - x[1]) < delta:
            tau = 0
            y[0] = x[0]
            y[1] = x[1]
        xs[0, 0] = x[0]
        xs[0, 1] = x[1]
        ys[0, 0] = y[0]
        ys[0, 1] = y[1]
        co[0] = tau == 0
        lv[0, 0] = 0.0
        lv[0, 1] = 0.0
        yv[0, 0] = 0.0
        yv[0, 1] = 0.0
        j = 0
        for m in range(slopes.shape[0]):
            v = slopes[m]
            for _ in range(nsub):
                frozen = mirror and tau >= 0
                if not frozen:
                    if mirror:
                        ux = y[0] - x[0]
                        uy = y[1] - x[1]
                        coef = 2.0 * (ux * v[0] + uy * v[1]) / (ux * ux + uy * uy)
                        vy[0] = v[0] - coef * ux
                        vy[1] = v[1] - coef * uy
                    else:
                        vy[0] = v[0]
                        vy[1] = v[1]
                    xp[0] = x[0] + h * v[0]
                    xp[1] = x[1] + h * v[1]
                    if proj(dp, xp, xn) > half_reach:
                        return -(j + 2)
                    lvx += math.hypot(xn[0] - xp[0], xn[1] - xp[1])
                    yvx += h * math.hypot(v[0], v[1])
                    if tau >= 0:
                        yn[0] = xn[0]
                        yn[1] = xn[1]
                    else:
                        yp[0] = y[0] + h * vy[0]
                        yp[1] = y[1] + h * vy[1]
                        if proj(dp, yp, yn) > half_reach:
                            return -(j + 2)
                        lvy += math.hypot(yn[0] - yp[0], yn[1] - yp[1])
                        yvy += h * math.hypot(vy[0], vy[1])
                        dnx = yn[0] - xn[0]
                        dny = yn[1] - xn[1]
                        hit = math.hypot(dnx, dny) < delta
                        if mirror and dnx * (y[0] - x[0]) + dny * (y[1] - x[1]) <= 0.0:
                            hit = True  # crossed the diagonal within the substep
                        if hit:
                            tau = j + 1
                            yn[0] = xn[0]
                            yn[1] = xn[1]
                    x[0] = xn[0]
                    x[1] = xn[1]
                    y[0] = yn[0]
                    y[1] = yn[1]
                j += 1
                if j % stride == 0:
                    k = j // stride
                    xs[k, 0] = x[0]
                    xs[k, 1] = x[1]
                    ys[k, 0] = y[0]
                    ys[k, 1] = y[1]
                    co[k] = tau >= 0
                    lv[k, 0] = lvx
                    lv[k, 1] = lvy
                    yv[k, 0] = yvx
                    yv[k, 1] = yvy
        return tau
    return njit(cache=True)(kernel)


_KERNELS: dict = {}


def _kernel(dkind):
    if dkind not in _KERNELS:
        _KERNELS[dkind] = _make_couple(PROJECTORS[dkind])
    return _KERNELS[dkind]


@dataclass(eq=False)
class CouplingRun:
    """A coupled pair on a shared (thinned) grid.

    ``theta`` is NaN where the pair is coalesced.  ``lvar``/``yvar`` hold the
    accumulated |L| and input variation for X (column 0) and Y (column 1).
    """

    kind: CouplingKind
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    coalesced: np.ndarray
    tau: float | None
    delta_coal: float
    substeps: int
    lvar: np.ndarray
    yvar: np.ndarray
    domain: Domain | None = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def theta(self) -> np.ndarray:
        d = self.y - self.x
        th = np.arctan2(d[:, 1], d[:, 0])
        th[self.coalesced] = np.nan
        return th

    def to_csv(self, path):
        th = self.theta
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "y1", "y2", "theta", "coalesced"])
            for k in range(len(self.t)):
                w.writerow([repr(float(self.t[k])), *(repr(float(v)) for v in self.x[k]),
                            *(repr(float(v)) for v in self.y[k]),
                            "" if self.coalesced[k] else repr(float(th[k])),
                            int(self.coalesced[k])])


def _run(kind, domain, path, x0, y0, substeps, delta_coal, stride):
    if domain.dim != 2:
        raise ValueError("couplings need a planar domain")
    if path.dim != 2:
        raise ValueError("couplings need a two-dimensional driver")
    if substeps < 1 or substeps & (substeps - 1):
        raise ValueError("substeps must be a positive power of two")
    x0 = np.ascontiguousarray(x0, dtype=float).reshape(2)
    y0 = np.ascontiguousarray(y0, dtype=float).reshape(2)
    for p in (x0, y0):
        if signed_distance_kernel(domain.kind, domain.params, p) > domain.eps_bdry:
            raise ValueError("starting point lies outside the closure")
    delta = 1e-8 * domain.diameter if delta_coal is None else float(delta_coal)
    mirror = kind is CouplingKind.MIRROR
    if mirror and math.dist(x0, y0) < delta:
        raise ValueError("mirror coupling needs |x0 - y0| >= delta_coal")
    slopes = np.ascontiguousarray(path.slopes())
    M = slopes.shape[0]
    if (M * substeps) % stride:
        raise ValueError("stride must divide the number of substeps")
    rows = M * substeps // stride + 1
    cur, cur_stride = substeps, stride
    while True:
        xs = np.empty((rows, 2))
        ys = np.empty((rows, 2))
        co = np.zeros(rows, dtype=np.bool_)
        lv = np.empty((rows, 2))
        yv = np.empty((rows, 2))
        h = path.dt / cur
        tau = _kernel(domain.kind)(domain.params, domain.reach / 2, mirror, slopes, x0, y0, h, cur,
                                   cur_stride, delta, xs, ys, co, lv, yv)
        if tau >= -1:
            break
        if cur >= MAX_SUBSTEPS:
            raise OutOfReach(f"step leaves the projection neighbourhood at {cur} substeps")
        cur *= 2
        cur_stride *= 2
    t = np.arange(rows) * (path.dt * stride / substeps)
    return CouplingRun(kind, t, xs, ys, co, None if tau < 0 else tau * path.dt / cur, delta,
                       cur, lv, yv, domain)


def run_synchronous(domain: Domain, path: DyadicPath, x0, y0,
                    substeps: int = DEFAULT_SUBSTEPS, delta_coal: float | None = None,
                    stride: int = 1) -> CouplingRun:
    """Both processes driven by the same path; after coalescence Y = X."""
    return _run(CouplingKind.SYNCHRONOUS, domain, path, x0, y0, substeps, delta_coal, stride)


def run_mirror(domain: Domain, path: DyadicPath, x0, y0, substeps: int = DEFAULT_SUBSTEPS,
               delta_coal: float | None = None, stride: int = 1) -> CouplingRun:
    """Y driven by the slope reflected across the bisector of the current pair."""
    return _run(CouplingKind.MIRROR, domain, path, x0, y0, substeps, delta_coal, stride)


# ---------------------------------------------------------------------------
# invariant checks
# ---------------------------------------------------------------------------


@dataclass
class InvariantReport:
    name: str
    checked: int
    violations: list  # (t, value) pairs

    @property
    def passed(self) -> bool:
        return not self.violations

    def text(self, limit: int = 20) -> str:
        head = f"{self.name}: {'PASS' if self.passed else 'FAIL'} " \
               f"({len(self.violations)} violations in {self.checked} samples)"
        rows = [f"  t={t:.10g}  value={v:.10g}" for t, v in self.violations[:limit]]
        return "\n".join([head, *rows])


def check_cone_invariant(run: CouplingRun, lower: float, upper: float,
                         eps_angle: float = 1e-4) -> InvariantReport:
    """Every non-coalesced angle must lie in [lower - eps, upper + eps]."""
    if not lower < upper:
        raise ValueError("need lower < upper")
    th = run.theta
    live = ~run.coalesced
    bad = live & ((th < lower - eps_angle) | (th > upper + eps_angle))
    idx = np.flatnonzero(bad)
    return InvariantReport("angle cone", int(live.sum()),
                           [(float(run.t[i]), float(th[i])) for i in idx])


def check_coalescence_absorbing(run: CouplingRun) -> InvariantReport:
    c = run.coalesced
    first = np.argmax(c) if c.any() else len(c)
    bad = np.flatnonzero(~c[first:]) + first
    return InvariantReport("coalescence absorbing", len(c),
                           [(float(run.t[i]), 0.0) for i in bad])


def _on_graph(domain: LipDomain, pts, which, eps):
    xs = pts[:, 0]
    inside = (xs > domain.a) & (xs < domain.b)
    f = domain.f2(xs) if which == "upper" else domain.f1(xs)
    return inside & (np.abs(pts[:, 1] - f) <= eps)


def check_wall_exclusion(run: CouplingRun, domain: LipDomain, eps_bdry: float | None = None,
                         eps_angle: float = 0.0) -> InvariantReport:
    """With the angle in [pi/4, pi/2 - atan(lam)], X avoids the upper graph and Y the lower."""
    eps = domain.eps_bdry if eps_bdry is None else eps_bdry
    lo = math.pi / 4 + eps_angle
    hi = math.pi / 2 - math.atan(domain.lip_constant) - eps_angle
    th = run.theta
    band = ~run.coalesced & (th >= lo) & (th <= hi)
    bad = band & (_on_graph(domain, run.x, "upper", eps) | _on_graph(domain, run.y, "lower", eps))
    idx = np.flatnonzero(bad)
    return InvariantReport("wall exclusion", int(band.sum()),
                           [(float(run.t[i]), float(th[i])) for i in idx])


def check_edge_monotonicity(run: CouplingRun, lam: float, eps_angle: float = 1e-4,
                            tol: float = 1e-6) -> InvariantReport:
    """Angle increments must be <= tol on steps that start inside the upper band."""
    th = run.theta
    lo = math.pi / 4 + eps_angle
    hi = math.pi / 2 - math.atan(lam) - eps_angle
    start = th[:-1]
    live = ~run.coalesced[:-1] & ~run.coalesced[1:]
    band = live & (start >= lo) & (start <= hi)
    dth = th[1:] - start
    bad = band & (dth > tol)
    idx = np.flatnonzero(bad)
    return InvariantReport("edge monotonicity", int(band.sum()),
                           [(float(run.t[i + 1]), float(dth[i])) for i in idx])


def triangle_angles(vertices) -> tuple[float, float]:
    """(alpha, beta) for a triangle whose longest side lies on the x-axis from the origin.

    alpha is the angle at the origin and beta the angle at the far base vertex.
    """
    v = np.asarray(vertices, dtype=float)
    a, b, c = v
    alpha = math.atan2(c[1] - a[1], c[0] - a[0]) - math.atan2(b[1] - a[1], b[0] - a[0])
    beta = math.atan2(c[1] - b[1], -(c[0] - b[0]))
    return alpha, beta
