"""Reflected ODEs driven by dyadic piecewise-linear paths.

Three solvers share one output layout:

* ``integrate_reflected``: explicit step then closest-point projection;
* ``integrate_tangent_form``: step along the velocity projected on the
  tangent cone, then project back;
* ``solve_picard``: fixed point of y -> Gamma(x0 + int sigma(y) dw) on
  windows of dyadic cells, Gamma being the sigma = I projection scheme.

Built-in fields run in compiled kernels.  Custom fields fall back to the
pure-Python loops at the bottom of the module.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from numba import njit

from .cones import project_cone_kernel
from .errors import DegenerateCone, NoConvergence, OutOfReach, SingularPoint
from .fields import MIRROR_PAIR, VELOCITIES, FieldSpec
from .geometry import (MAX_GENERATORS, NORMALS, PROJECTORS, Domain, normals_kernel,
                       project_kernel, signed_distance_kernel)
from .wiener import DyadicPath

DEFAULT_SUBSTEPS = 64
MAX_SUBSTEPS = 1 << 14

_OK = 0
_DEGENERATE = -1
_NO_CONVERGENCE = -2


# ---------------------------------------------------------------------------
# compiled per-path kernels
#
# Kernels are built per (domain kind, field kind) so the hot loop calls
# straight-line projection and velocity code; a generic dispatch inside the
# loop defeats numba's refcount pruning and costs an order of magnitude.
#
# All write thinned rows (every `stride` substeps, plus t = 0) into
# xs (R, d), ls (R, d), lv (R,), yv (R,).  Return 0 on success, the
# offending substep index (> 0) when a pre-projection point is out of
# reach, or a negative code.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _write_row(k, x, L, lvar, yvar, xs, ls, lv, yv):
    for c in range(x.shape[0]):
        xs[k, c] = x[c]
        ls[k, c] = L[c]
    lv[k] = lvar
    yv[k] = yvar


def _make_catchup(proj, vel):
    def kernel(dp, half_reach, fp, slopes, x0, h, nsub, stride, xs, ls, lv, yv):
        d = x0.shape[0]
        x = x0.copy()
        L = np.zeros(d)
        w = np.empty(d)
        xp = np.empty(d)
        xn = np.empty(d)
        lvar = 0.0
        yvar = 0.0
        _write_row(0, x, L, lvar, yvar, xs, ls, lv, yv)
        j = 0
        for m in range(slopes.shape[0]):
            v = slopes[m]
            for _ in range(nsub):
                vel(fp, x, v, w)
                ss = 0.0
                for c in range(d):
                    xp[c] = x[c] + h * w[c]
                    ss += (h * w[c]) ** 2
                yvar += math.sqrt(ss)
                if proj(dp, xp, xn) > half_reach:
                    return j + 1
                dd = 0.0
                for c in range(d):
                    dl = xn[c] - xp[c]
                    L[c] += dl
                    dd += dl * dl
                    x[c] = xn[c]
                lvar += math.sqrt(dd)
                j += 1
                if j % stride == 0:
                    _write_row(j // stride, x, L, lvar, yvar, xs, ls, lv, yv)
        return _OK
    return njit(cache=True)(kernel)


def _make_tangent(proj, nrm, vel):
    def kernel(dp, half_reach, eps, fp, slopes, x0, h, nsub, stride, xs, ls, lv, yv):
        d = x0.shape[0]
        x = x0.copy()
        L = np.zeros(d)
        w = np.empty(d)
        u = np.empty(d)
        xp = np.empty(d)
        xn = np.empty(d)
        G = np.zeros((MAX_GENERATORS, d))
        lvar = 0.0
        yvar = 0.0
        _write_row(0, x, L, lvar, yvar, xs, ls, lv, yv)
        j = 0
        for m in range(slopes.shape[0]):
            v = slopes[m]
            for _ in range(nsub):
                vel(fp, x, v, w)
                k = nrm(dp, x, eps, G)
                if project_cone_kernel(G, k, w, u) != 0:
                    return _DEGENERATE
                ss = 0.0
                for c in range(d):
                    xp[c] = x[c] + h * u[c]
                    ss += (h * w[c]) ** 2
                yvar += math.sqrt(ss)
                if proj(dp, xp, xn) > half_reach:
                    return j + 1
                dd = 0.0
                for c in range(d):
                    dl = xn[c] - x[c] - h * w[c]
                    L[c] += dl
                    dd += dl * dl
                    x[c] = xn[c]
                lvar += math.sqrt(dd)
                j += 1
                if j % stride == 0:
                    _write_row(j // stride, x, L, lvar, yvar, xs, ls, lv, yv)
        return _OK
    return njit(cache=True)(kernel)


def _make_picard(proj, vel):
    def kernel(dp, half_reach, fp, slopes, x0, h, nsub, wcells, tol, max_iter, stride,
               xs, ls, lv, yv, info):
        # info <- [max iterations in a window, total iterations, last residual]
        d = x0.shape[0]
        M = slopes.shape[0]
        n_max = wcells * nsub
        Y = np.empty((n_max + 1, d))
        D = np.empty((n_max, d))
        w = np.empty(d)
        yj = np.empty(d)
        zj = np.empty(d)
        zn = np.empty(d)
        x = x0.copy()
        L = np.zeros(d)
        lvar = 0.0
        yvar = 0.0
        _write_row(0, x, L, lvar, yvar, xs, ls, lv, yv)
        info[0] = 0.0
        info[1] = 0.0
        info[2] = 0.0
        start = 0
        m0 = 0
        while m0 < M:
            n = min(wcells, M - m0) * nsub
            for j in range(n + 1):
                for c in range(d):
                    Y[j, c] = x[c]
            it = -1  # the first map of the constant path is not counted
            while True:
                # Z = F(Y) is written over Y in place; Y[j] is read before row j is replaced
                for c in range(d):
                    zj[c] = x[c]
                    yj[c] = Y[0, c]
                res = 0.0
                for j in range(n):
                    m = m0 + j // nsub
                    vel(fp, yj, slopes[m], w)
                    for c in range(d):
                        D[j, c] = h * w[c]
                        zj[c] += D[j, c]
                    if proj(dp, zj, zn) > half_reach:
                        return start + j + 1
                    s = 0.0
                    for c in range(d):
                        yj[c] = Y[j + 1, c]
                        s += (zn[c] - yj[c]) ** 2
                        Y[j + 1, c] = zn[c]
                        zj[c] = zn[c]
                    if s > res:
                        res = s
                res = math.sqrt(res)
                it += 1
                if it == 0:
                    continue
                info[2] = res
                if res < tol:
                    break
                if it >= max_iter:
                    info[0] = max(info[0], it)
                    info[1] += it
                    return _NO_CONVERGENCE
            info[0] = max(info[0], it)
            info[1] += it
            for j in range(n):
                dd = 0.0
                ss = 0.0
                for c in range(d):
                    dl = Y[j + 1, c] - Y[j, c] - D[j, c]
                    L[c] += dl
                    dd += dl * dl
                    ss += D[j, c] * D[j, c]
                    x[c] = Y[j + 1, c]
                lvar += math.sqrt(dd)
                yvar += math.sqrt(ss)
                g = start + j + 1
                if g % stride == 0:
                    _write_row(g // stride, x, L, lvar, yvar, xs, ls, lv, yv)
            start += n
            m0 += wcells
        return _OK
    return njit(cache=True)(kernel)


_KERNELS: dict = {}


def _kernel(method, dkind, fkind):
    key = (method, dkind, fkind)
    if key not in _KERNELS:
        proj, vel = PROJECTORS[dkind], VELOCITIES[fkind]
        if method == "catchup":
            _KERNELS[key] = _make_catchup(proj, vel)
        elif method == "tangent":
            _KERNELS[key] = _make_tangent(proj, NORMALS[dkind], vel)
        else:
            _KERNELS[key] = _make_picard(proj, vel)
    return _KERNELS[key]


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ReflectedTrajectory:
    """Samples of X, L and the running variations on a (thinned) substep grid.

    ``lvar`` is the accumulated |L| and ``yvar`` the variation of the composed
    input x0 + int sigma(X) dw + int b dt.
    """

    t: np.ndarray
    x: np.ndarray
    l: np.ndarray
    lvar: np.ndarray
    yvar: np.ndarray
    level: int
    substeps: int
    stride: int = 1
    path: DyadicPath | None = None
    method: str = "catchup"
    iterations: int | None = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def x0(self) -> np.ndarray:
        return self.x[0]

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def to_csv(self, path):
        d = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(d)]
                       + [f"l{i + 1}" for i in range(d)] + ["lvar"])
            for k in range(len(self.t)):
                w.writerow([repr(float(self.t[k]))]
                           + [repr(float(v)) for v in self.x[k]]
                           + [repr(float(v)) for v in self.l[k]]
                           + [repr(float(self.lvar[k]))])


@dataclass(eq=False)
class TrajectoryEnsemble:
    """Stacked trajectories on a common output grid: x has shape (P, R, d)."""

    t: np.ndarray
    x: np.ndarray
    l: np.ndarray
    lvar: np.ndarray
    yvar: np.ndarray
    level: int
    substeps: np.ndarray
    method: str = "catchup"

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i) -> ReflectedTrajectory:
        return ReflectedTrajectory(self.t, self.x[i], self.l[i], self.lvar[i], self.yvar[i],
                                   self.level, int(self.substeps[i]), method=self.method)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def _check_substeps(nsub):
    if nsub < 1 or nsub & (nsub - 1):
        raise ValueError("substeps_per_cell must be a positive power of two")


def _check_start(domain, x0):
    x0 = np.ascontiguousarray(x0, dtype=float).reshape(domain.dim)
    if signed_distance_kernel(domain.kind, domain.params, x0) > domain.eps_bdry:
        raise ValueError("starting point lies outside the closure")
    return x0


def _run_one(method, domain, field, slopes, level, x0, nsub, stride, tol, max_iter, wcells):
    """Run one path, doubling substeps on OutOfReach; returns arrays and stats."""
    _check_substeps(nsub)
    M = slopes.shape[0]
    if (M * nsub) % stride:
        raise ValueError("stride must divide the number of substeps")
    half_reach = domain.reach / 2
    d = domain.dim
    rows = M * nsub // stride + 1
    cur, cur_stride = nsub, stride
    while True:
        xs = np.empty((rows, d))
        ls = np.empty((rows, d))
        lv = np.empty(rows)
        yv = np.empty(rows)
        info = np.zeros(3)
        h = 2.0 ** -level / cur
        if field.compiled:
            kern = _kernel(method, domain.kind, field.kind)
            fa = (field.params, slopes, x0, h, cur)
            if method == "catchup":
                st = kern(domain.params, half_reach, *fa, cur_stride, xs, ls, lv, yv)
            elif method == "tangent":
                st = kern(domain.params, half_reach, domain.eps_bdry, *fa, cur_stride,
                          xs, ls, lv, yv)
            else:
                st = kern(domain.params, half_reach, *fa, wcells, tol, max_iter, cur_stride,
                          xs, ls, lv, yv, info)
        else:
            st = _python_solver(method, domain, field, slopes, x0, h, cur, cur_stride,
                                xs, ls, lv, yv, info, tol, max_iter, wcells)
        if st == _OK:
            return xs, ls, lv, yv, cur, info
        if st == _DEGENERATE:
            raise DegenerateCone("tangent cone with antipodal normals met during integration")
        if st == _NO_CONVERGENCE:
            raise NoConvergence(f"Picard iteration did not converge in {max_iter} iterations",
                                residual=float(info[2]), iterations=int(info[0]))
        if cur >= MAX_SUBSTEPS:
            raise OutOfReach(f"step leaves the projection neighbourhood even at "
                             f"{cur} substeps per cell")
        cur *= 2
        cur_stride *= 2


def _solve(method, domain, field, path, x0, substeps_per_cell, stride,
           tol=1e-10, max_iter=100, window_cells=1):
    if field.d != domain.dim:
        raise ValueError(f"field dimension {field.d} does not match domain dimension {domain.dim}")
    if path.dim != field.r:
        raise ValueError(f"driver dimension {path.dim} does not match field ({field.r})")
    x0 = _check_start(domain, x0)
    slopes = np.ascontiguousarray(path.slopes())
    xs, ls, lv, yv, nsub, info = _run_one(method, domain, field, slopes, path.level, x0,
                                          substeps_per_cell, stride, tol, max_iter,
                                          window_cells)
    t = np.arange(len(xs)) * (stride * 2.0 ** -path.level / substeps_per_cell)
    traj = ReflectedTrajectory(t, xs, ls, lv, yv, path.level, nsub, stride, path, method)
    if method == "picard":
        traj.iterations = int(info[0])
        traj.meta.update(total_iterations=int(info[1]), residual=float(info[2]),
                         window_cells=window_cells)
    return traj


def integrate_reflected(domain: Domain, field: FieldSpec, path: DyadicPath, x0,
                        substeps_per_cell: int = DEFAULT_SUBSTEPS,
                        stride: int = 1) -> ReflectedTrajectory:
    """Catch-up scheme: x <- proj(x + h (sigma(x) v_m + b(x))) on each substep."""
    return _solve("catchup", domain, field, path, x0, substeps_per_cell, stride)


def integrate_tangent_form(domain: Domain, field: FieldSpec, path: DyadicPath, x0,
                           substeps_per_cell: int = DEFAULT_SUBSTEPS,
                           stride: int = 1) -> ReflectedTrajectory:
    """Step along the tangent-cone projection of the velocity, then project."""
    return _solve("tangent", domain, field, path, x0, substeps_per_cell, stride)


def solve_picard(domain: Domain, field: FieldSpec, path: DyadicPath, x0, tol: float = 1e-10,
                 max_iter: int = 100, substeps_per_cell: int = DEFAULT_SUBSTEPS,
                 stride: int = 1, window_cells: int = 1) -> ReflectedTrajectory:
    """Picard iteration for the reflected ODE, run window by window.

    ``iterations`` on the result is the largest count needed in any window.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if window_cells < 1:
        raise ValueError("window_cells must be >= 1")
    return _solve("picard", domain, field, path, x0, substeps_per_cell, stride,
                  tol, max_iter, window_cells)


def integrate_ensemble(domain: Domain, field: FieldSpec, values: np.ndarray, level: int, x0,
                       substeps_per_cell: int = DEFAULT_SUBSTEPS, stride: int = 1,
                       method: str = "catchup", tol: float = 1e-10, max_iter: int = 100,
                       window_cells: int = 1) -> TrajectoryEnsemble:
    """Integrate many drivers given as grid values of shape (P, M + 1, r).

    ``x0`` is one point or one point per path.
    """
    if method not in ("catchup", "tangent", "picard"):
        raise ValueError(f"unknown method {method!r}")
    values = np.asarray(values, dtype=float)
    P = values.shape[0]
    x0 = np.asarray(x0, dtype=float)
    starts = np.broadcast_to(x0.reshape(-1, domain.dim), (P, domain.dim)) \
        if x0.size == domain.dim or x0.ndim == 2 else x0
    if values.shape[2] != field.r:
        raise ValueError("driver dimension does not match the field")
    slopes_all = np.diff(values, axis=1) * 2.0 ** level
    M = slopes_all.shape[1]
    rows = M * substeps_per_cell // stride + 1
    X = np.empty((P, rows, domain.dim))
    Lc = np.empty_like(X)
    LV = np.empty((P, rows))
    YV = np.empty((P, rows))
    subs = np.empty(P, dtype=np.int64)
    for i in range(P):
        x0i = _check_start(domain, starts[i])
        X[i], Lc[i], LV[i], YV[i], subs[i], _ = _run_one(
            method, domain, field, np.ascontiguousarray(slopes_all[i]), level, x0i,
            substeps_per_cell, stride, tol, max_iter, window_cells)
    t = np.arange(rows) * (stride * 2.0 ** -level / substeps_per_cell)
    return TrajectoryEnsemble(t, X, Lc, LV, YV, level, subs, method)


# ---------------------------------------------------------------------------
# closed forms and the correction term
# ---------------------------------------------------------------------------


def skorohod_map_1d(w, x0: float = 0.0):
    """Reflection of x0 + w at 0 from below: returns (x, l) sample arrays.

    l_t = max(0, max_{s<=t}(-w_s) - x0); exact on the sample grid.
    """
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    w = np.asarray(w, dtype=float)
    low = np.maximum.accumulate(-(x0 + w))
    l = np.maximum(low, 0.0)
    return x0 + w + l, l


def stratonovich_correction(field: FieldSpec, z, fd_step: float = 1e-5) -> np.ndarray:
    """0.5 * sum_i (D V_i) V_i at z by central differences along V_i(z)."""
    z = np.asarray(z, dtype=float).reshape(field.d)
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    if field.kind == MIRROR_PAIR:
        h = field.d // 2
        if np.linalg.norm(z[h:] - z[:h]) < 10 * fd_step:
            raise SingularPoint("mirror field evaluated too close to the diagonal")
    sig = field.sigma(z)
    out = np.zeros(field.d)
    for i in range(field.r):
        col = sig[:, i]
        fwd = field.sigma(z + fd_step * col)[:, i]
        bwd = field.sigma(z - fd_step * col)[:, i]
        out += (fwd - bwd) / (2 * fd_step)
    return 0.5 * out


# ---------------------------------------------------------------------------
# pure-Python fallback for custom fields
# ---------------------------------------------------------------------------


def _python_solver(method, domain, field, slopes, x0, h, nsub, stride, xs, ls, lv, yv, info,
                   tol, max_iter, wcells):
    dk, dp = domain.kind, domain.params
    half_reach = domain.reach / 2
    d = domain.dim
    xn = np.empty(d)
    G = np.zeros((MAX_GENERATORS, d))
    u = np.empty(d)

    def vel(x, v):
        return field.velocity(x, v)

    x = x0.copy()
    L = np.zeros(d)
    lvar = yvar = 0.0
    _write_row.py_func(0, x, L, lvar, yvar, xs, ls, lv, yv)
    if method in ("catchup", "tangent"):
        j = 0
        for v in slopes:
            for _ in range(nsub):
                w = vel(x, v)
                if method == "tangent":
                    k = normals_kernel(dk, dp, x, domain.eps_bdry, G)
                    if project_cone_kernel(G, k, np.ascontiguousarray(w), u):
                        return _DEGENERATE
                    step = h * u
                else:
                    step = h * w
                yvar += float(np.linalg.norm(h * w))
                if project_kernel(dk, dp, x + step, xn) > half_reach:
                    return j + 1
                dl = xn - x - h * w
                L += dl
                lvar += float(np.linalg.norm(dl))
                x = xn.copy()
                j += 1
                if j % stride == 0:
                    _write_row.py_func(j // stride, x, L, lvar, yvar, xs, ls, lv, yv)
        return _OK
    M = len(slopes)
    start = 0
    for m0 in range(0, M, wcells):
        n = min(wcells, M - m0) * nsub
        Y = np.repeat(x[None], n + 1, axis=0)
        it = -1
        while True:
            Z = np.empty_like(Y)
            Z[0] = x
            D = np.empty((n, d))
            for j in range(n):
                D[j] = h * vel(Y[j], slopes[m0 + j // nsub])
                if project_kernel(dk, dp, Z[j] + D[j], Z[j + 1]) > half_reach:
                    return start + j + 1
            res = float(np.linalg.norm(Z - Y, axis=1).max())
            Y = Z
            it += 1
            if it == 0:
                continue
            info[2] = res
            if res < tol:
                break
            if it >= max_iter:
                info[0] = max(info[0], it)
                return _NO_CONVERGENCE
        info[0] = max(info[0], it)
        info[1] += it
        for j in range(n):
            dl = Y[j + 1] - Y[j] - D[j]
            L += dl
            lvar += float(np.linalg.norm(dl))
            yvar += float(np.linalg.norm(D[j]))
            x = Y[j + 1].copy()
            g = start + j + 1
            if g % stride == 0:
                _write_row.py_func(g // stride, x, L, lvar, yvar, xs, ls, lv, yv)
        start += n
    return _OK
