"""Diffusion and drift fields sigma(x), b(x).

Built-in fields are evaluated by a compiled kernel; ``custom`` fields hold
Python callables and run through the slower reference integrators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

IDENTITY, ROTATION, MIRROR_PAIR, CONSTANT, CUSTOM = 0, 1, 2, 3, 4


# out = sigma(x) v + b(x), one function per built-in kind


@njit(cache=True)
def vel_identity(p, x, v, out):
    for c in range(out.shape[0]):
        out[c] = v[c]


@njit(cache=True)
def vel_rotation(p, x, v, out):
    out[0] = x[1] * v[0]
    out[1] = -x[0] * v[0]


@njit(cache=True)
def vel_mirror(p, x, v, out):
    h = x.shape[0] // 2
    nn = 0.0
    dot = 0.0
    for c in range(h):
        dc = x[h + c] - x[c]
        nn += dc * dc
        dot += dc * v[c]
    coef = 2.0 * dot / nn if nn > 0.0 else 0.0
    for c in range(h):
        out[c] = v[c]
        out[h + c] = v[c] - coef * (x[h + c] - x[c])


@njit(cache=True)
def vel_constant(p, x, v, out):
    # p = [d, r, A (row major), b]
    d = int(p[0])
    r = int(p[1])
    for i in range(d):
        acc = p[2 + r * d + i]
        for j in range(r):
            acc += p[2 + i * r + j] * v[j]
        out[i] = acc


VELOCITIES = {IDENTITY: vel_identity, ROTATION: vel_rotation, MIRROR_PAIR: vel_mirror,
              CONSTANT: vel_constant}


@njit(cache=True)
def velocity_kernel(kind, p, x, v, out):
    """out = sigma(x) v + b(x) for any built-in kind."""
    if kind == IDENTITY:
        vel_identity(p, x, v, out)
    elif kind == ROTATION:
        vel_rotation(p, x, v, out)
    elif kind == MIRROR_PAIR:
        vel_mirror(p, x, v, out)
    else:
        vel_constant(p, x, v, out)


@dataclass(frozen=True, eq=False)
class FieldSpec:
    name: str
    kind: int
    d: int
    r: int
    params: np.ndarray
    smoothness: str = "C2"
    sigma_fn: Callable | None = None
    drift_fn: Callable | None = None

    @property
    def compiled(self) -> bool:
        return self.kind != CUSTOM

    def sigma(self, x) -> np.ndarray:
        """The d x r diffusion matrix at x."""
        x = np.asarray(x, dtype=float)
        if self.kind == CUSTOM:
            return np.asarray(self.sigma_fn(x), dtype=float).reshape(self.d, self.r)
        if self.kind == IDENTITY:
            return np.eye(self.d)
        if self.kind == ROTATION:
            return np.array([[x[1]], [-x[0]]])
        if self.kind == MIRROR_PAIR:
            h = self.d // 2
            diff = x[h:] - x[:h]
            nn = diff @ diff
            m = np.eye(h) - (2.0 * np.outer(diff, diff) / nn if nn > 0 else 0.0)
            return np.vstack([np.eye(h), m])
        return self.params[2:2 + self.d * self.r].reshape(self.d, self.r).copy()

    def drift(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == CUSTOM:
            if self.drift_fn is None:
                return np.zeros(self.d)
            return np.asarray(self.drift_fn(x), dtype=float).reshape(self.d)
        if self.kind == CONSTANT:
            return self.params[2 + self.d * self.r:].copy()
        return np.zeros(self.d)

    def velocity(self, x, v) -> np.ndarray:
        return self.sigma(x) @ np.asarray(v, dtype=float) + self.drift(x)

    def bound(self, domain, n: int = 2000, seed: int = 0) -> float:
        """Sampled sup of the operator norm of sigma over the closure."""
        pts = _closure_samples(domain, n, seed)
        return float(max(np.linalg.norm(self.sigma(z), 2) for z in pts))

    def lipschitz_estimate(self, domain, n: int = 500, seed: int = 0) -> float:
        pts = _closure_samples(domain, n, seed)
        rng = np.random.default_rng(seed + 1)
        pairs = rng.integers(0, len(pts), size=(n, 2))
        best = 0.0
        for i, j in pairs:
            dz = np.linalg.norm(pts[i] - pts[j])
            if dz > 1e-12:
                ds = np.linalg.norm(self.sigma(pts[i]) - self.sigma(pts[j]), 2)
                best = max(best, ds / dz)
        return best


def _closure_samples(domain, n, seed):
    rng = np.random.default_rng(seed)
    return np.vstack([domain.interior_samples(n, rng), domain.boundary_samples(n // 4 + 1)])


def identity(d: int = 2) -> FieldSpec:
    return FieldSpec("Identity", IDENTITY, d, d, np.zeros(1))


def rotation() -> FieldSpec:
    """sigma(x) = (x2, -x1)^T with a scalar driver."""
    return FieldSpec("Rotation", ROTATION, 2, 1, np.zeros(1))


def mirror_pair(d: int = 2) -> FieldSpec:
    """sigma(x, y) = (I ; I - 2 u u^T), u = (y - x)/|y - x|, on R^d x R^d."""
    return FieldSpec("MirrorPair", MIRROR_PAIR, 2 * d, d, np.zeros(1))


def constant(A, b=None) -> FieldSpec:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d, r = A.shape
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float).reshape(d)
    return FieldSpec("Constant", CONSTANT, d, r, np.concatenate([[d, r], A.ravel(), b]),
                     smoothness="C2")


def custom(sigma: Callable, d: int, r: int, drift: Callable | None = None,
           smoothness: str = "C2", name: str = "Custom") -> FieldSpec:
    return FieldSpec(name, CUSTOM, d, r, np.zeros(1), smoothness, sigma, drift)


def by_name(name: str, d: int = 2) -> FieldSpec:
    key = name.strip().lower()
    if key == "identity":
        return identity(d)
    if key == "rotation":
        return rotation()
    if key in ("mirror", "mirrorpair", "mirror_pair"):
        return mirror_pair(d // 2 if d > 2 else d)
    raise ValueError(f"unknown field {name!r}")


def mirror_matrix(x, y) -> np.ndarray:
    """Householder reflection I - 2 u u^T across the bisector of x and y."""
    diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    nn = diff @ diff
    if nn == 0:
        raise ValueError("mirror matrix is undefined on the diagonal")
    return np.eye(len(diff)) - 2.0 * np.outer(diff, diff) / nn

