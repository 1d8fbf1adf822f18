"""Admissible planar domains and their products.

Every domain is encoded as an integer kind plus a flat float64 parameter
vector so the per-point kernels can be compiled with numba and called from
the integrators without Python overhead.  The classes below wrap those
kernels with validation and the admissibility certificate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numba import njit

from .errors import NotOnBoundary, OutOfReach

INTERVAL, POLYGON, DISC, LIP, PRODUCT = 0, 1, 2, 3, 4

LIP_TABLE_POINTS = 4097  # 4096 cells
LIP_NEWTON_STEPS = 60
MAX_GENERATORS = 4


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _lip_f(p, which, s):
    """Value, slope and curvature term of the lower (which=0) or upper (which=1) graph."""
    a = p[0]
    b = p[1]
    K = int(p[2])
    off = 4 if which == 1 else 4 + K
    w = math.pi / (b - a)
    th = w * (s - a)
    f = 0.0
    df = 0.0
    d2f = 0.0
    for k in range(K):
        c = p[off + k]
        kw = (k + 1) * w
        sn = math.sin((k + 1) * th)
        f += c * sn
        df += c * kw * math.cos((k + 1) * th)
        d2f -= c * kw * kw * sn
    return f, df, d2f


@njit(cache=True)
def _lip_closest(p, which, zx, zy):
    """Closest point on one graph: pruned table scan, then safeguarded Newton."""
    a = p[0]
    b = p[1]
    K = int(p[2])
    nt = int(p[3])
    toff = 4 + 2 * K + (0 if which == 1 else nt)
    dx = (b - a) / (nt - 1)
    sc = min(max(zx, a), b)
    f0, _, _ = _lip_f(p, which, sc)
    r = math.sqrt((zx - sc) ** 2 + (zy - f0) ** 2)
    # any graph parameter farther than r from zx cannot beat the point at sc
    i0 = int(math.floor((zx - r - a) / dx)) - 1
    i1 = int(math.ceil((zx + r - a) / dx)) + 1
    if i0 < 0:
        i0 = 0
    if i1 > nt - 1:
        i1 = nt - 1
    best = np.inf
    jb = i0
    for j in range(i0, i1 + 1):
        sx = a + j * dx
        dd = (sx - zx) ** 2 + (p[toff + j] - zy) ** 2
        if dd < best:
            best = dd
            jb = j
    sj = b if jb == nt - 1 else a + jb * dx
    lo = a + max(jb - 1, 0) * dx
    hi = b if jb >= nt - 2 else a + (jb + 1) * dx
    f, df, _ = _lip_f(p, which, lo)
    glo = (lo - zx) + (f - zy) * df
    f, df, _ = _lip_f(p, which, hi)
    ghi = (hi - zx) + (f - zy) * df
    if glo >= 0.0:
        s = lo
    elif ghi <= 0.0:
        s = hi
    else:
        # G(s) = (s - zx) + (f - zy) f' changes sign on [lo, hi]
        s = min(max(sj, lo), hi)
        for _ in range(LIP_NEWTON_STEPS):
            f, df, d2f = _lip_f(p, which, s)
            g = (s - zx) + (f - zy) * df
            if g > 0.0:
                hi = s
            else:
                lo = s
            gp = 1.0 + df * df + (f - zy) * d2f
            sn = s - g / gp if gp > 0.0 else 0.5 * (lo + hi)
            if not (lo < sn < hi):
                sn = 0.5 * (lo + hi)
            if abs(sn - s) <= 1e-15 * (1.0 + abs(s)) or hi - lo <= 1e-15 * (1.0 + abs(s)):
                s = sn
                break
            s = sn
    f, _, _ = _lip_f(p, which, s)
    dist = math.sqrt((s - zx) ** 2 + (f - zy) ** 2)
    fj, _, _ = _lip_f(p, which, sj)
    dj = math.sqrt((sj - zx) ** 2 + (fj - zy) ** 2)
    if dj < dist:
        s = sj
        f = fj
        dist = dj
    return s, f, dist


@njit(cache=True)
def _lip_inside(p, zx, zy):
    if zx < p[0] or zx > p[1]:
        return False
    lo, _, _ = _lip_f(p, 0, zx)
    up, _, _ = _lip_f(p, 1, zx)
    return lo <= zy <= up


@njit(cache=True)
def _seg_closest(ax, ay, bx, by, zx, zy):
    ex = bx - ax
    ey = by - ay
    ll = ex * ex + ey * ey
    t = ((zx - ax) * ex + (zy - ay) * ey) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cx = ax + t * ex
    cy = ay + t * ey
    return cx, cy, math.sqrt((zx - cx) ** 2 + (zy - cy) ** 2)


@njit(cache=True)
def _poly_inside(p, zx, zy):
    n = int(p[0])
    for i in range(n):
        j = i + 1 if i + 1 < n else 0  # avoids an integer modulo in the hot loop
        ax = p[1 + 2 * i]
        ay = p[2 + 2 * i]
        bx = p[1 + 2 * j]
        by = p[2 + 2 * j]
        # inward normal of a CCW edge is the edge rotated by +90 degrees
        if (zx - ax) * (-(by - ay)) + (zy - ay) * (bx - ax) < 0.0:
            return False
    return True


@njit(cache=True)
def _poly_edge_distance(p, zx, zy):
    n = int(p[0])
    best = np.inf
    bx_ = 0.0
    by_ = 0.0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        cx, cy, dd = _seg_closest(p[1 + 2 * i], p[2 + 2 * i], p[1 + 2 * j],
                                  p[2 + 2 * j], zx, zy)
        if dd < best:
            best = dd
            bx_ = cx
            by_ = cy
    return bx_, by_, best


# signed distance, one function per kind (negative inside)


@njit(cache=True)
def sd_interval(p, z):
    x = z[0]
    if x < p[0]:
        return p[0] - x
    if x > p[1]:
        return x - p[1]
    return -min(x - p[0], p[1] - x)


@njit(cache=True)
def sd_disc(p, z):
    return math.sqrt((z[0] - p[0]) ** 2 + (z[1] - p[1]) ** 2) - p[2]


@njit(cache=True)
def sd_polygon(p, z):
    _, _, best = _poly_edge_distance(p, z[0], z[1])
    return -best if _poly_inside(p, z[0], z[1]) else best


@njit(cache=True)
def sd_lip(p, z):
    _, _, du = _lip_closest(p, 1, z[0], z[1])
    _, _, dl = _lip_closest(p, 0, z[0], z[1])
    dd = min(du, dl)
    return -dd if _lip_inside(p, z[0], z[1]) else dd


# closest point of the closure into out; returns |z - out|


@njit(cache=True)
def proj_interval(p, z, out):
    x = z[0]
    if x < p[0]:
        out[0] = p[0]
        return p[0] - x
    if x > p[1]:
        out[0] = p[1]
        return x - p[1]
    out[0] = x
    return 0.0


@njit(cache=True)
def proj_disc(p, z, out):
    dx = z[0] - p[0]
    dy = z[1] - p[1]
    rr = math.sqrt(dx * dx + dy * dy)
    if rr <= p[2]:
        out[0] = z[0]
        out[1] = z[1]
        return 0.0
    out[0] = p[0] + dx * (p[2] / rr)
    out[1] = p[1] + dy * (p[2] / rr)
    return rr - p[2]


@njit(cache=True)
def proj_polygon(p, z, out):
    if _poly_inside(p, z[0], z[1]):
        out[0] = z[0]
        out[1] = z[1]
        return 0.0
    cx, cy, best = _poly_edge_distance(p, z[0], z[1])
    out[0] = cx
    out[1] = cy
    return best


@njit(cache=True)
def proj_lip(p, z, out):
    zx = z[0]
    zy = z[1]
    if p[0] <= zx <= p[1]:
        lo, _, _ = _lip_f(p, 0, zx)
        up, _, _ = _lip_f(p, 1, zx)
        if lo <= zy <= up:
            out[0] = zx
            out[1] = zy
            return 0.0
        # the segment to any point of the far graph crosses the near one
        s, f, dd = _lip_closest(p, 1 if zy > up else 0, zx, zy)
        out[0] = s
        out[1] = f
        return dd
    su, fu, du = _lip_closest(p, 1, zx, zy)
    sl, fl, dl = _lip_closest(p, 0, zx, zy)
    if du <= dl:
        out[0] = su
        out[1] = fu
        return du
    out[0] = sl
    out[1] = fl
    return dl


# inward proximal normal generators written from out[row, col]; returns the count


@njit(cache=True)
def _nrm_interval(p, z, eps, out, row, col):
    cnt = 0
    if z[0] - p[0] <= eps:
        out[row, col] = 1.0
        cnt += 1
    if p[1] - z[0] <= eps:
        out[row + cnt, col] = -1.0
        cnt += 1
    return cnt


@njit(cache=True)
def _nrm_disc(p, z, eps, out, row, col):
    dx = p[0] - z[0]
    dy = p[1] - z[1]
    rr = math.sqrt(dx * dx + dy * dy)
    if rr >= p[2] - eps and rr > 0.0:
        out[row, col] = dx / rr
        out[row, col + 1] = dy / rr
        return 1
    return 0


@njit(cache=True)
def _nrm_polygon(p, z, eps, out, row, col):
    n = int(p[0])
    cnt = 0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        ax = p[1 + 2 * i]
        ay = p[2 + 2 * i]
        bx = p[1 + 2 * j]
        by = p[2 + 2 * j]
        _, _, dd = _seg_closest(ax, ay, bx, by, z[0], z[1])
        if dd <= eps and cnt < MAX_GENERATORS:
            ex = bx - ax
            ey = by - ay
            ll = math.sqrt(ex * ex + ey * ey)
            out[row + cnt, col] = -ey / ll
            out[row + cnt, col + 1] = ex / ll
            cnt += 1
    return cnt


@njit(cache=True)
def _nrm_lip(p, z, eps, out, row, col):
    # for slopes below 1 the distance to a graph is at least gap/sqrt(2)
    zx = z[0]
    zy = z[1]
    cnt = 0
    for which in (1, 0):
        if p[0] <= zx <= p[1]:
            f, _, _ = _lip_f(p, which, zx)
            if abs(f - zy) > 1.5 * eps:
                continue
        s, _, dd = _lip_closest(p, which, zx, zy)
        if dd <= eps:
            _, df, _ = _lip_f(p, which, s)
            nn = math.sqrt(1.0 + df * df)
            if which == 1:
                out[row + cnt, col] = df / nn
                out[row + cnt, col + 1] = -1.0 / nn
            else:
                out[row + cnt, col] = -df / nn
                out[row + cnt, col + 1] = 1.0 / nn
            cnt += 1
    return cnt


@njit(cache=True)
def nrm_interval(p, z, eps, out):
    out[:, :] = 0.0
    return _nrm_interval(p, z, eps, out, 0, 0)


@njit(cache=True)
def nrm_disc(p, z, eps, out):
    out[:, :] = 0.0
    return _nrm_disc(p, z, eps, out, 0, 0)


@njit(cache=True)
def nrm_polygon(p, z, eps, out):
    out[:, :] = 0.0
    return _nrm_polygon(p, z, eps, out, 0, 0)


@njit(cache=True)
def nrm_lip(p, z, eps, out):
    out[:, :] = 0.0
    return _nrm_lip(p, z, eps, out, 0, 0)


# kind dispatch; the integrators use the per-kind functions directly


@njit(cache=True)
def _signed_distance_simple(kind, p, z):
    if kind == INTERVAL:
        return sd_interval(p, z)
    if kind == DISC:
        return sd_disc(p, z)
    if kind == POLYGON:
        return sd_polygon(p, z)
    return sd_lip(p, z)


@njit(cache=True)
def _project_simple(kind, p, z, out):
    if kind == INTERVAL:
        return proj_interval(p, z, out)
    if kind == DISC:
        return proj_disc(p, z, out)
    if kind == POLYGON:
        return proj_polygon(p, z, out)
    return proj_lip(p, z, out)


@njit(cache=True)
def _normals_simple(kind, p, z, eps, out, row, col):
    if kind == INTERVAL:
        return _nrm_interval(p, z, eps, out, row, col)
    if kind == DISC:
        return _nrm_disc(p, z, eps, out, row, col)
    if kind == POLYGON:
        return _nrm_polygon(p, z, eps, out, row, col)
    return _nrm_lip(p, z, eps, out, row, col)


@njit(cache=True)
def _split(p):
    k1 = int(p[0])
    d1 = int(p[1])
    n1 = int(p[2])
    o2 = 3 + n1
    k2 = int(p[o2])
    d2 = int(p[o2 + 1])
    n2 = int(p[o2 + 2])
    return k1, d1, p[3:3 + n1], k2, d2, p[o2 + 3:o2 + 3 + n2]


@njit(cache=True)
def signed_distance_kernel(kind, p, z):
    if kind != PRODUCT:
        return _signed_distance_simple(kind, p, z)
    k1, d1, p1, k2, d2, p2 = _split(p)
    s1 = _signed_distance_simple(k1, p1, z[:d1])
    s2 = _signed_distance_simple(k2, p2, z[d1:d1 + d2])
    if s1 <= 0.0 and s2 <= 0.0:
        return max(s1, s2)
    return math.sqrt(max(s1, 0.0) ** 2 + max(s2, 0.0) ** 2)


@njit(cache=True)
def project_kernel(kind, p, z, out):
    if kind != PRODUCT:
        return _project_simple(kind, p, z, out)
    k1, d1, p1, k2, d2, p2 = _split(p)
    e1 = _project_simple(k1, p1, z[:d1], out[:d1])
    e2 = _project_simple(k2, p2, z[d1:d1 + d2], out[d1:d1 + d2])
    return math.sqrt(e1 * e1 + e2 * e2)


@njit(cache=True)
def normals_kernel(kind, p, z, eps, out):
    """Fill rows of out (zeroed first) with generators; return the count."""
    out[:, :] = 0.0
    if kind != PRODUCT:
        return _normals_simple(kind, p, z, eps, out, 0, 0)
    k1, d1, p1, k2, d2, p2 = _split(p)
    c1 = _normals_simple(k1, p1, z[:d1], eps, out, 0, 0)
    c2 = _normals_simple(k2, p2, z[d1:d1 + d2], eps, out, c1, d1)
    return c1 + c2


@njit(cache=True)
def proj_product(p, z, out):
    return project_kernel(PRODUCT, p, z, out)


@njit(cache=True)
def nrm_product(p, z, eps, out):
    return normals_kernel(PRODUCT, p, z, eps, out)


PROJECTORS = {INTERVAL: proj_interval, POLYGON: proj_polygon, DISC: proj_disc, LIP: proj_lip,
              PRODUCT: proj_product}
NORMALS = {INTERVAL: nrm_interval, POLYGON: nrm_polygon, DISC: nrm_disc, LIP: nrm_lip,
           PRODUCT: nrm_product}


@njit(cache=True)
def _project_many(kind, p, zs, out):
    dist = np.empty(zs.shape[0])
    for i in range(zs.shape[0]):
        dist[i] = project_kernel(kind, p, zs[i], out[i])
    return dist


@njit(cache=True)
def _signed_distance_many(kind, p, zs):
    res = np.empty(zs.shape[0])
    for i in range(zs.shape[0]):
        res[i] = signed_distance_kernel(kind, p, zs[i])
    return res


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticPhi:
    """phi(x) = const - |x - center|^2."""

    center: np.ndarray
    const: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, float)
        return self.const - np.sum((x - self.center) ** 2, axis=-1)

    def grad(self, x):
        return -2.0 * (np.asarray(x, float) - self.center)


@dataclass(frozen=True)
class LinearPhi:
    """phi(x) = slope * (x - origin); used for the half-line."""

    origin: float
    slope: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, float)
        return self.slope * (x[..., 0] - self.origin)

    def grad(self, x):
        x = np.asarray(x, float)
        return np.full_like(x, self.slope)


@dataclass(frozen=True)
class ProductPhi:
    """Phi(x, y) = (phi1(x) + s1) (phi2(y) + s2) with both factors >= 1."""

    first: object
    second: object
    shift1: float
    shift2: float
    split: int

    def __call__(self, z):
        z = np.asarray(z, float)
        a = self.first(z[..., :self.split]) + self.shift1
        b = self.second(z[..., self.split:]) + self.shift2
        return a * b

    def grad(self, z):
        z = np.asarray(z, float)
        x, y = z[..., :self.split], z[..., self.split:]
        a = self.first(x) + self.shift1
        b = self.second(y) + self.shift2
        ga = self.first.grad(x) * np.asarray(b)[..., None]
        gb = self.second.grad(y) * np.asarray(a)[..., None]
        return np.concatenate([ga, gb], axis=-1)


@dataclass(frozen=True)
class CoveringBall:
    center: np.ndarray
    radius: float
    direction: np.ndarray
    lam: float


@dataclass(frozen=True)
class AdmissibilityCertificate:
    C0: float
    phi: object
    alpha: float
    covering: tuple | None  # None: implied by the phi condition (bounded product)
    covering_radius: float
    lam: float

    @property
    def reach(self) -> float:
        return math.inf if self.C0 == 0.0 else 1.0 / (2.0 * self.C0)


class PointTag(enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    EXTERIOR_NEAR = "ExteriorNear"
    EXTERIOR_FAR = "ExteriorFar"


@dataclass(frozen=True)
class PointClass:
    tag: PointTag
    distance: float  # signed: negative inside, positive outside

    @property
    def boundary_distance(self) -> float:
        return abs(self.distance)


# ---------------------------------------------------------------------------
# domain classes
# ---------------------------------------------------------------------------


class Domain:
    """Common surface of all admissible domains."""

    kind: int
    dim: int
    params: np.ndarray

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def eps_bdry(self) -> float:
        d = self.diameter
        return 1e-9 * (d if math.isfinite(d) else 1.0)

    @cached_property
    def certificate(self) -> AdmissibilityCertificate:
        return self._build_certificate()

    @property
    def reach(self) -> float:
        return self.certificate.reach

    def _build_certificate(self) -> AdmissibilityCertificate:
        raise NotImplementedError

    def boundary_samples(self, n: int, rng=None) -> np.ndarray:
        """Points on the boundary, roughly uniform in arc length."""
        raise NotImplementedError

    def interior_samples(self, n: int, rng) -> np.ndarray:
        """Uniform samples of the closure by rejection from the bounding box."""
        lo, hi = self.bounding_box()
        out = []
        count = 0
        while count < n:
            z = rng.uniform(lo, hi, size=(2 * n, self.dim))
            keep = z[_signed_distance_many(self.kind, self.params, z) <= 0.0]
            out.append(keep)
            count += len(keep)
        return np.concatenate(out)[:n]

    def bounding_box(self):
        raise NotImplementedError

    # convenience wrappers over the module functions
    def contains(self, z, eps=None) -> bool:
        eps = self.eps_bdry if eps is None else eps
        return signed_distance(self, z) <= eps

    def project(self, z):
        return project_to_closure(self, z)


def _as_points(z, dim):
    z = np.ascontiguousarray(z, dtype=float)
    if z.shape[-1] != dim:
        if dim == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        else:
            raise ValueError(f"expected points of dimension {dim}, got shape {z.shape}")
    return z


class Interval(Domain):
    kind = INTERVAL
    dim = 1

    def __init__(self, lo: float = 0.0, hi: float = math.inf):
        if not lo < hi:
            raise ValueError("interval needs lo < hi")
        if not math.isfinite(lo):
            raise ValueError("lower endpoint must be finite")
        self.lo = float(lo)
        self.hi = float(hi)
        self.params = np.array([self.lo, self.hi])

    def __repr__(self):
        return f"Interval({self.lo}, {self.hi})"

    @property
    def diameter(self):
        return self.hi - self.lo

    def bounding_box(self):
        hi = self.hi if math.isfinite(self.hi) else self.lo + 1.0
        return np.array([self.lo]), np.array([hi])

    def boundary_samples(self, n, rng=None):
        pts = [self.lo] if not math.isfinite(self.hi) else [self.lo, self.hi]
        return np.resize(np.array(pts), n)[:, None]

    def _build_certificate(self):
        if math.isfinite(self.hi):
            c = 0.5 * (self.lo + self.hi)
            phi = QuadraticPhi(np.array([c]), 0.0)
            alpha = 2.0 * (c - self.lo)
            R = self.diameter / 4
            cov = (CoveringBall(np.array([self.lo]), R, np.array([1.0]), 1.0),
                   CoveringBall(np.array([self.hi]), R, np.array([-1.0]), 1.0))
        else:
            phi = LinearPhi(self.lo)
            alpha = 1.0
            R = 1.0
            cov = (CoveringBall(np.array([self.lo]), R, np.array([1.0]), 1.0),)
        return AdmissibilityCertificate(0.0, phi, alpha, cov, R, 1.0)


def half_line(lo: float = 0.0) -> Interval:
    return Interval(lo, math.inf)


class ConvexPolygon(Domain):
    kind = POLYGON
    dim = 2

    def __init__(self, vertices: Sequence[Sequence[float]]):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0):
            raise ValueError("vertices must be counter-clockwise and strictly convex")
        # strict convexity with CCW turns and total turning 2*pi means simple
        ang = np.arctan2(e[:, 1], e[:, 0])
        turn = np.mod(np.diff(np.append(ang, ang[0])), 2 * np.pi)
        if not math.isclose(turn.sum(), 2 * np.pi, rel_tol=1e-9):
            raise ValueError("polygon is not simple")
        self.vertices = v
        self.params = np.concatenate([[len(v)], v.ravel()])

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()})"

    @cached_property
    def diameter(self):
        diff = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    @property
    def edge_normals(self) -> np.ndarray:
        e = np.roll(self.vertices, -1, axis=0) - self.vertices
        n = np.stack([-e[:, 1], e[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def bounding_box(self):
        return self.vertices.min(0), self.vertices.max(0)

    def boundary_samples(self, n, rng=None):
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        lengths = np.linalg.norm(w - v, axis=1)
        s = (np.arange(n) + 0.5) / n * lengths.sum() if rng is None else \
            rng.uniform(0, lengths.sum(), n)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(v) - 1)
        t = (s - cum[idx]) / lengths[idx]
        return v[idx] + t[:, None] * (w[idx] - v[idx])

    def chebyshev_center(self):
        """Center of the largest inscribed disc (small LP)."""
        from scipy.optimize import linprog

        n = self.edge_normals
        b = np.einsum("ij,ij->i", n, self.vertices)
        # maximize r subject to n_i . c - r >= b_i
        res = linprog([0, 0, -1], A_ub=np.hstack([-n, np.ones((len(n), 1))]), b_ub=-b,
                      bounds=[(None, None), (None, None), (0, None)])
        return res.x[:2]

    def _build_certificate(self):
        c = self.chebyshev_center()
        n = self.edge_normals
        # grad phi . nu = 2 (c - x) . nu is constant along each edge
        alpha = float(2.0 * np.min(np.einsum("ij,ij->i", n, c - self.vertices)))
        phi = QuadraticPhi(c, float(np.max(np.sum((self.vertices - c) ** 2, axis=1))))
        return _covering_certificate(self, 0.0, phi, alpha)


def rectangle(x0: float, x1: float, y0: float, y1: float) -> ConvexPolygon:
    return ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


class Disc(Domain):
    kind = DISC
    dim = 2

    def __init__(self, center=(0.0, 0.0), radius: float = 1.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.params = np.array([self.center[0], self.center[1], self.radius])

    def __repr__(self):
        return f"Disc({self.center.tolist()}, {self.radius})"

    @property
    def diameter(self):
        return 2 * self.radius

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def boundary_samples(self, n, rng=None):
        th = 2 * np.pi * ((np.arange(n) + 0.5) / n if rng is None else rng.uniform(0, 1, n))
        return self.center + self.radius * np.stack([np.cos(th), np.sin(th)], axis=1)

    def _build_certificate(self):
        phi = QuadraticPhi(self.center, self.radius ** 2)
        return _covering_certificate(self, 0.0, phi, 2.0 * self.radius)


class LipDomain(Domain):
    """Region between two graphs f1 <= f2 over [a, b] meeting at both tips.

    Each graph is a sine series ``f(x) = sum_k c_k sin(k pi (x - a) / (b - a))``,
    so both vanish at the tips and derivatives are available in closed form.
    """

    kind = LIP
    dim = 2

    def __init__(self, lower: Sequence[float], upper: Sequence[float],
                 a: float = 0.0, b: float = 1.0):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        K = max(len(lower), len(upper))
        lower = np.pad(lower, (0, K - len(lower)))
        upper = np.pad(upper, (0, K - len(upper)))
        if not a < b:
            raise ValueError("need a < b")
        self.a, self.b = float(a), float(b)
        self.lower_coeffs, self.upper_coeffs = lower, upper
        xs = np.linspace(a, b, LIP_TABLE_POINTS)
        head = np.concatenate([[a, b, K, LIP_TABLE_POINTS], upper, lower])
        self.params = np.concatenate([head, self.f2(xs), self.f1(xs)])
        dense = np.linspace(a, b, 20001)
        gap = self.f2(dense[1:-1]) - self.f1(dense[1:-1])
        if np.any(gap <= 0):
            raise ValueError("lip domain needs f1 < f2 strictly inside (a, b)")
        self.lip_constant = float(max(np.abs(self.df1(dense)).max(),
                                      np.abs(self.df2(dense)).max()))
        if self.lip_constant >= 1.0:
            raise ValueError(f"slope bound {self.lip_constant:.3f} must be < 1")

    def __repr__(self):
        return f"LipDomain(lower={self.lower_coeffs.tolist()}, upper={self.upper_coeffs.tolist()}, a={self.a}, b={self.b})"

    def _series(self, c, x, deriv=0):
        x = np.asarray(x, dtype=float)
        w = np.pi / (self.b - self.a)
        k = np.arange(1, len(c) + 1)
        th = np.multiply.outer(w * (x - self.a), k)
        if deriv == 0:
            return np.sin(th) @ c
        if deriv == 1:
            return np.cos(th) @ (c * k * w)
        return -(np.sin(th) @ (c * (k * w) ** 2))

    def f1(self, x):
        return self._series(self.lower_coeffs, x)

    def f2(self, x):
        return self._series(self.upper_coeffs, x)

    def df1(self, x):
        return self._series(self.lower_coeffs, x, 1)

    def df2(self, x):
        return self._series(self.upper_coeffs, x, 1)

    @cached_property
    def diameter(self):
        xs = np.linspace(self.a, self.b, 2001)
        pts = np.concatenate([np.stack([xs, self.f1(xs)], 1), np.stack([xs, self.f2(xs)], 1)])
        hull_lo, hull_hi = pts.min(0), pts.max(0)
        return float(max(self.b - self.a, np.linalg.norm(hull_hi - hull_lo)))

    def bounding_box(self):
        xs = np.linspace(self.a, self.b, 2001)
        return (np.array([self.a, self.f1(xs).min()]), np.array([self.b, self.f2(xs).max()]))

    def boundary_samples(self, n, rng=None):
        u = (np.arange(n) + 0.5) / n if rng is None else rng.uniform(0, 1, n)
        x = self.a + (self.b - self.a) * (2 * u % 1.0)
        upper = u < 0.5
        y = np.where(upper, self.f2(x), self.f1(x))
        return np.stack([x, y], axis=1)

    def _outward_curvature(self):
        xs = np.linspace(self.a, self.b, 20001)
        k2 = self._series(self.upper_coeffs, xs, 2) / (1 + self.df2(xs) ** 2) ** 1.5
        k1 = -self._series(self.lower_coeffs, xs, 2) / (1 + self.df1(xs) ** 2) ** 1.5
        # positive values bend the boundary away from the region (non-convex part)
        return float(max(k2.max(), k1.max(), 0.0))

    def _build_certificate(self):
        kappa = self._outward_curvature()
        C0 = 0.5 * kappa if kappa > 0 else 0.0  # exterior ball of radius 1/kappa
        xs = np.linspace(self.a, self.b, 2001)
        c = np.array([0.5 * (self.a + self.b),
                      0.5 * (self.f1(xs[1000]) + self.f2(xs[1000]))])
        phi = QuadraticPhi(c, float(max(self.b - self.a, 1.0) ** 2))
        pts = self.boundary_samples(8192)
        alpha = np.inf
        for z in pts:
            for nu in proximal_normal_generators(self, z, 1e-9 * self.diameter):
                alpha = min(alpha, float(phi.grad(z) @ nu))
        if alpha <= 0:
            raise ValueError("could not certify the phi condition for this lip domain")
        return _covering_certificate(self, C0, phi, 0.9 * alpha)


def default_lip_domain() -> LipDomain:
    g = 0.5 / math.pi
    return LipDomain(lower=[-g], upper=[g], a=0.0, b=1.0)


def default_triangle() -> ConvexPolygon:
    return ConvexPolygon([(0.0, 0.0), (4.0, 0.0), (1.0, 1.0)])


class Product(Domain):
    kind = PRODUCT

    def __init__(self, first: Domain, second: Domain):
        if isinstance(first, Product) or isinstance(second, Product):
            raise ValueError("products of products are not supported")
        self.first = first
        self.second = second
        self.dim = first.dim + second.dim
        self.params = np.concatenate([
            [first.kind, first.dim, len(first.params)], first.params,
            [second.kind, second.dim, len(second.params)], second.params,
        ])

    def __repr__(self):
        return f"Product({self.first!r}, {self.second!r})"

    @property
    def diameter(self):
        return math.hypot(self.first.diameter, self.second.diameter)

    def bounding_box(self):
        l1, h1 = self.first.bounding_box()
        l2, h2 = self.second.bounding_box()
        return np.concatenate([l1, l2]), np.concatenate([h1, h2])

    def boundary_samples(self, n, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        half = n // 2
        a = np.hstack([self.first.boundary_samples(half, rng),
                       self.second.interior_samples(half, rng)])
        b = np.hstack([self.first.interior_samples(n - half, rng),
                       self.second.boundary_samples(n - half, rng)])
        return np.vstack([a, b])

    def _build_certificate(self):
        c1, c2 = self.first.certificate, self.second.certificate
        rng = np.random.default_rng(0)
        s = []
        for dom, cert in ((self.first, c1), (self.second, c2)):
            vals = cert.phi(dom.interior_samples(4096, rng))
            vals = np.concatenate([vals, cert.phi(dom.boundary_samples(4096))])
            # slack covers the sampled minimum
            s.append(1.0 - float(vals.min()) + 0.1 * float(np.ptp(vals)))
        phi = ProductPhi(c1.phi, c2.phi, s[0], s[1], self.first.dim)
        return AdmissibilityCertificate(
            C0=max(c1.C0, c2.C0), phi=phi, alpha=min(c1.alpha, c2.alpha), covering=None,
            covering_radius=min(c1.covering_radius, c2.covering_radius),
            lam=min(c1.lam, c2.lam))


def make_product(d1: Domain, d2: Domain) -> Product:
    return Product(d1, d2)


def _covering_certificate(domain, C0, phi, alpha):
    """Attach a boundary covering (centers, radius R, directions a_i, lambda)."""
    pts = domain.boundary_samples(4096)
    eps = domain.eps_bdry
    gens = [proximal_normal_generators(domain, z, eps) for z in pts]
    R = domain.diameter / 8
    for _ in range(12):
        balls = []
        ok = True
        order = _arc_order(pts)
        centers = [order[0]]
        for i in order[1:]:
            if np.linalg.norm(pts[i] - pts[centers[-1]]) >= R / 2:
                centers.append(i)
        lam_all = np.inf
        for ci in centers:
            near = np.linalg.norm(pts - pts[ci], axis=1) < 2 * R
            nus = np.concatenate([np.atleast_2d(gens[j]) for j in np.flatnonzero(near)])
            a = _central_direction(nus)
            lam = -1.0 if a is None else float((nus @ a).min())
            if lam <= 0:
                ok = False
                break
            lam_all = min(lam_all, lam)
            balls.append(CoveringBall(pts[ci].copy(), R, a, lam))
        if ok:
            return AdmissibilityCertificate(C0, phi, alpha, tuple(balls), R, 0.9 * lam_all)
        R /= 2
    raise ValueError("could not build a boundary covering")


def _central_direction(nus):
    """Unit vector maximizing the smallest inner product with planar normals."""
    if nus.shape[1] == 1:
        sgn = np.sign(nus[:, 0])
        return None if sgn.min() != sgn.max() else np.array([sgn[0]])
    ang = np.sort(np.arctan2(nus[:, 1], nus[:, 0]))
    gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
    k = int(np.argmax(gaps))
    span = 2 * np.pi - gaps[k]
    if span >= np.pi:
        return None
    mid = ang[(k + 1) % len(ang)] + span / 2
    return np.array([np.cos(mid), np.sin(mid)])


def _arc_order(pts):
    # boundary samples are generated in arc order already
    return list(range(len(pts)))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def signed_distance(domain: Domain, z) -> np.ndarray | float:
    z = _as_points(z, domain.dim)
    flat = z.reshape(-1, domain.dim)
    res = _signed_distance_many(domain.kind, domain.params, flat)
    return float(res[0]) if z.ndim == 1 else res.reshape(z.shape[:-1])


def classify_point(domain: Domain, z, eps_bdry: float | None = None) -> PointClass:
    eps = domain.eps_bdry if eps_bdry is None else eps_bdry
    if eps <= 0:
        raise ValueError("eps_bdry must be positive")
    z = _as_points(z, domain.dim)
    sd = signed_distance_kernel(domain.kind, domain.params, z)
    if abs(sd) <= eps:
        tag = PointTag.BOUNDARY
    elif sd < 0:
        tag = PointTag.INTERIOR
    elif sd > domain.reach / 2:
        tag = PointTag.EXTERIOR_FAR
    else:
        tag = PointTag.EXTERIOR_NEAR
    return PointClass(tag, float(sd))


def project_to_closure(domain: Domain, z) -> np.ndarray:
    """Closest point of the closure; accepts a point or an array of points."""
    z = _as_points(z, domain.dim)
    flat = np.ascontiguousarray(z.reshape(-1, domain.dim))
    out = np.empty_like(flat)
    dist = _project_many(domain.kind, domain.params, flat, out)
    if np.any(dist > domain.reach / 2):
        raise OutOfReach(f"point at distance {dist.max():.3g} exceeds half the reach "
                         f"({domain.reach / 2:.3g})")
    return out.reshape(z.shape)


def proximal_normal_generators(domain: Domain, x, eps_bdry: float | None = None) -> np.ndarray:
    """Extreme inward normals at a boundary point, shape (k, dim)."""
    eps = domain.eps_bdry if eps_bdry is None else eps_bdry
    x = _as_points(x, domain.dim)
    sd = signed_distance_kernel(domain.kind, domain.params, x)
    if abs(sd) > eps:
        raise NotOnBoundary(f"point is at signed distance {sd:.3g} from the boundary")
    out = np.zeros((MAX_GENERATORS, domain.dim))
    k = normals_kernel(domain.kind, domain.params, x, eps, out)
    return out[:k].copy()


def verify_certificate(domain: Domain, n_boundary: int = 10_000, n_inner: int = 10_000,
                       seed: int = 0, tol: float = 1e-9) -> dict:
    """Sampled checks of the three admissibility conditions.

    Returns worst-case margins; every margin should be >= -tol.
    """
    rng = np.random.default_rng(seed)
    cert = domain.certificate
    eps = domain.eps_bdry
    bpts = domain.boundary_samples(n_boundary, rng)
    inner = domain.interior_samples(n_inner, rng)
    worst_ball = np.inf
    worst_phi = np.inf
    worst_cover = np.inf
    uncovered = 0
    centers = None if cert.covering is None else np.array([b.center for b in cert.covering])
    for z in bpts[: min(len(bpts), 500)]:
        for nu in proximal_normal_generators(domain, z, eps):
            diff = inner - z
            margin = diff @ nu + cert.C0 * np.sum(diff ** 2, axis=1)
            worst_ball = min(worst_ball, float(margin.min()))
    for z in bpts:
        gens = proximal_normal_generators(domain, z, eps)
        g = cert.phi.grad(z)
        worst_phi = min(worst_phi, float((gens @ g).min() - cert.alpha))
        if centers is not None:
            dist = np.linalg.norm(centers - z, axis=1)
            if dist.min() >= cert.covering_radius:
                uncovered += 1
            for i in np.flatnonzero(dist < 2 * cert.covering_radius):
                worst_cover = min(worst_cover, float((gens @ cert.covering[i].direction).min()
                                                     - cert.lam))
    return {"exterior_ball": worst_ball, "phi": worst_phi, "covering": worst_cover,
            "uncovered": uncovered}
