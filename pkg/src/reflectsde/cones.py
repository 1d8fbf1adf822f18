"""Tangent cones as finite intersections of half-spaces, and exact projection.

A cone here is ``{u : u . n_i >= 0 for all i}``.  Projection enumerates every
subset of constraints taken as equalities (at most 2**4 of them), projects
onto the corresponding subspace, and keeps the nearest feasible candidate.
The true projection lies in the relative interior of one such face, so the
enumeration is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numba import njit

from .errors import DegenerateCone, OutsideDomain
from .geometry import MAX_GENERATORS, Domain, normals_kernel, signed_distance_kernel

ANTIPODAL_TOL = 1e-9
_FEAS_TOL = 1e-12


def _subset_order(k_max):
    # by size, then lexicographically on the index tuple
    masks = [0]
    for size in range(1, k_max + 1):
        for combo in combinations(range(k_max), size):
            masks.append(sum(1 << i for i in combo))
    return np.array(masks, dtype=np.int64)


_ORDERS = [_subset_order(k) for k in range(MAX_GENERATORS + 1)]
_ORDER_TABLE = np.full((MAX_GENERATORS + 1, 1 << MAX_GENERATORS), -1, dtype=np.int64)
for _k, _o in enumerate(_ORDERS):
    _ORDER_TABLE[_k, :len(_o)] = _o


@njit(cache=True)
def project_cone_kernel(G, k, v, out):
    """Project v onto {u : G[i] . u >= 0, i < k}; 0 on success, 1 if degenerate."""
    d = v.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            dot = 0.0
            for c in range(d):
                dot += G[i, c] * G[j, c]
            if dot <= -1.0 + ANTIPODAL_TOL:
                return 1
    vv = 0.0
    for c in range(d):
        vv += v[c] * v[c]
        out[c] = v[c]
    if k == 0:
        return 0
    Q = np.empty((MAX_GENERATORS, d))
    u = np.empty(d)
    best = np.inf
    scale = max(1.0, np.sqrt(vv))
    n_masks = 1 << k
    for idx in range(n_masks):
        mask = _ORDER_TABLE[k, idx]
        # orthonormal basis of the span of the selected normals
        q = 0
        for i in range(k):
            if (mask >> i) & 1:
                for c in range(d):
                    Q[q, c] = G[i, c]
                for jj in range(q):
                    dot = 0.0
                    for c in range(d):
                        dot += Q[q, c] * Q[jj, c]
                    for c in range(d):
                        Q[q, c] -= dot * Q[jj, c]
                nrm = 0.0
                for c in range(d):
                    nrm += Q[q, c] * Q[q, c]
                nrm = np.sqrt(nrm)
                if nrm > 1e-12:
                    for c in range(d):
                        Q[q, c] /= nrm
                    q += 1
        for c in range(d):
            u[c] = v[c]
        for jj in range(q):
            dot = 0.0
            for c in range(d):
                dot += v[c] * Q[jj, c]
            for c in range(d):
                u[c] -= dot * Q[jj, c]
        feasible = True
        for i in range(k):
            dot = 0.0
            for c in range(d):
                dot += u[c] * G[i, c]
            if dot < -_FEAS_TOL * scale:
                feasible = False
                break
        if not feasible:
            continue
        dist = 0.0
        for c in range(d):
            dist += (u[c] - v[c]) ** 2
        # strict improvement keeps the earliest (lexicographically smallest) set on ties
        if best == np.inf or dist < best - 1e-14 * (best + vv):
            best = dist
            for c in range(d):
                out[c] = u[c]
    return 0


@dataclass(frozen=True)
class ConeSpec:
    """Cone {u : u . n_i >= 0} based at a point; no normals means all of R^d."""

    base: np.ndarray
    normals: np.ndarray  # shape (k, dim)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @property
    def k(self) -> int:
        return self.normals.shape[0]

    @classmethod
    def whole_space(cls, base):
        base = np.asarray(base, dtype=float)
        return cls(base, np.zeros((0, base.size)))

    @classmethod
    def from_normals(cls, base, normals):
        base = np.asarray(base, dtype=float)
        n = np.asarray(normals, dtype=float).reshape(-1, base.size)
        norms = np.linalg.norm(n, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("zero normal")
        return cls(base, n / norms)

    def contains(self, u, tol=1e-12) -> bool:
        return bool(np.all(self.normals @ np.asarray(u, float) >= -tol))


def tangent_cone(domain: Domain, x, eps_bdry: float | None = None) -> ConeSpec:
    eps = domain.eps_bdry if eps_bdry is None else eps_bdry
    x = np.ascontiguousarray(x, dtype=float).reshape(domain.dim)
    if signed_distance_kernel(domain.kind, domain.params, x) > eps:
        raise OutsideDomain("point lies outside the closure")
    out = np.zeros((MAX_GENERATORS, domain.dim))
    k = normals_kernel(domain.kind, domain.params, x, eps, out)
    return ConeSpec(x.copy(), out[:k].copy())


def project_onto_cone(cone: ConeSpec, v) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=float)
    if v.shape != (cone.dim,):
        raise ValueError(f"vector of shape {v.shape} does not match cone dimension {cone.dim}")
    if cone.k > MAX_GENERATORS:
        raise ValueError(f"at most {MAX_GENERATORS} constraints are supported")
    out = np.empty_like(v)
    G = np.ascontiguousarray(cone.normals)
    if project_cone_kernel(G, cone.k, v, out):
        raise DegenerateCone("cone normals include an antipodal pair")
    return out


def project_product(cone_a: ConeSpec, cone_b: ConeSpec, v) -> np.ndarray:
    """Blockwise projection onto the product cone T_a x T_b."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        xi, eta = v[0], v[1]
    else:
        xi, eta = v[:cone_a.dim], v[cone_a.dim:]
    if xi.size != cone_a.dim or eta.size != cone_b.dim:
        raise ValueError("block dimensions do not match the cones")
    res = np.concatenate([project_onto_cone(cone_a, xi), project_onto_cone(cone_b, eta)])
    return res.reshape(v.shape)


def embed_product(cone_a: ConeSpec, cone_b: ConeSpec) -> ConeSpec:
    """The product cone written as one cone in the joint space."""
    da, db = cone_a.dim, cone_b.dim
    n = np.zeros((cone_a.k + cone_b.k, da + db))
    n[:cone_a.k, :da] = cone_a.normals
    n[cone_a.k:, da:] = cone_b.normals
    return ConeSpec(np.concatenate([cone_a.base, cone_b.base]), n)

