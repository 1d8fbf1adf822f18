import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import nnls

from reflectsde import cones, geometry as geo
from reflectsde.errors import DegenerateCone, OutsideDomain

RECT = geo.rectangle(-1.0, 1.0, 0.0, 2.0)

angle = st.floats(0.0, 2 * math.pi, allow_nan=False)
vec = st.tuples(st.floats(-5, 5), st.floats(-5, 5)).map(np.array)


def unit(t):
    return np.array([math.cos(t), math.sin(t)])


def grid_projection(normals, v, half_width=1.0, n=2001):
    """Nearest feasible grid point around v (a brute-force oracle)."""
    g = np.linspace(-half_width, half_width, n)
    gx, gy = np.meshgrid(v[0] + g, v[1] + g)
    pts = np.c_[gx.ravel(), gy.ravel()]
    pts = np.vstack([pts, np.zeros(2)])
    feas = np.all(pts @ np.atleast_2d(normals).T >= 0, axis=1)
    cand = pts[feas]
    return cand[np.argmin(np.linalg.norm(cand - v, axis=1))]


def check_certificate(normals, v, p, tol=1e-10):
    """p is feasible, v - p is orthogonal to p and lies in the polar cone."""
    normals = np.atleast_2d(normals)
    scale = max(1.0, np.linalg.norm(v))
    assert np.all(normals @ p >= -tol * scale)
    assert abs((v - p) @ p) <= tol * scale ** 2
    # v - p = -sum lam_i n_i with lam >= 0
    _, res = nnls(normals.T, p - v)
    assert res <= tol * scale


# --- examples --------------------------------------------------------------


def test_whole_space_is_identity():
    # [TRIVIAL]
    c = cones.ConeSpec.whole_space((0.0, 0.0))
    assert np.array_equal(cones.project_onto_cone(c, (3.0, -1.0)), [3.0, -1.0])


def test_half_space_projection():
    # [TRIVIAL] v - min(0, v.n) n
    c = cones.ConeSpec.from_normals((0, 0), [(0.0, 1.0)])
    assert np.allclose(cones.project_onto_cone(c, (1.0, -2.0)), (1.0, 0.0))


def test_apex_is_nearest_for_wedge():
    # [DERIVED] brute-force grid over the cone
    n = [(0.0, 1.0), (-1 / math.sqrt(2), 1 / math.sqrt(2))]
    c = cones.ConeSpec.from_normals((0, 0), n)
    v = np.array([1.0, -1.0])
    p = cones.project_onto_cone(c, v)
    assert np.allclose(p, 0.0, atol=1e-14)
    assert np.allclose(grid_projection(np.array(n), v), 0.0, atol=1e-3)


def test_quadrant_clips_coordinates():
    # [DERIVED] the nonnegative orthant projects by clipping
    c = cones.ConeSpec.from_normals((0, 0), [(1.0, 0.0), (0.0, 1.0)])
    for v in np.random.default_rng(1).normal(size=(50, 2)):
        assert np.allclose(cones.project_onto_cone(c, v), np.maximum(v, 0.0))


def test_antipodal_normals_are_degenerate():
    c = cones.ConeSpec.from_normals((0, 0), [(0.0, 1.0), (0.0, -1.0)])
    with pytest.raises(DegenerateCone):
        cones.project_onto_cone(c, (1.0, 1.0))


def test_shape_and_zero_normal_errors():
    c = cones.ConeSpec.from_normals((0, 0), [(0.0, 1.0)])
    with pytest.raises(ValueError):
        cones.project_onto_cone(c, (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        cones.ConeSpec.from_normals((0, 0), [(0.0, 0.0)])


# --- tangent cones ---------------------------------------------------------


def test_tangent_cone_interior_is_whole_space():
    # [TRIVIAL]
    assert cones.tangent_cone(RECT, (0.0, 1.0)).k == 0


def test_tangent_cone_at_corner():
    # [TRIVIAL]
    c = cones.tangent_cone(RECT, (1.0, 0.0))
    assert sorted(map(tuple, np.round(c.normals, 12))) == [(-1.0, 0.0), (0.0, 1.0)]


def test_tangent_cone_outside_raises():
    with pytest.raises(OutsideDomain):
        cones.tangent_cone(RECT, (5.0, 5.0))


def test_product_tangent_cone_constraints():
    # [PAPER] corner in the first factor, interior in the second
    prod = geo.Product(RECT, RECT)
    c = cones.tangent_cone(prod, (1.0, 0.0, 0.0, 1.0))
    assert c.k == 2
    assert np.allclose(c.normals[:, 2:], 0.0)


# --- products --------------------------------------------------------------


def test_product_projection_identity_blocks():
    # [TRIVIAL]
    a = cones.ConeSpec.whole_space((0, 0))
    v = np.array([1.0, -2.0, 5.0, 5.0])
    assert np.array_equal(cones.project_product(a, a, v), v)


def test_product_projection_example():
    # [TRIVIAL]
    a = cones.ConeSpec.from_normals((0, 0), [(0.0, 1.0)])
    b = cones.ConeSpec.whole_space((0, 0))
    out = cones.project_product(a, b, np.array([[1.0, -2.0], [5.0, 5.0]]))
    assert np.allclose(out, [[1.0, 0.0], [5.0, 5.0]])


@given(t1=angle, t2=angle, t3=angle, v=st.tuples(*[st.floats(-3, 3)] * 4).map(np.array))
def test_product_projection_equals_embedded(t1, t2, t3, v):
    # [DERIVED] projecting blockwise equals projecting onto the embedded cone
    a = cones.ConeSpec.from_normals((0, 0), [unit(t1)])
    b = cones.ConeSpec.from_normals((0, 0), [unit(t2), unit(t2 + 0.5 + t3 / 3)])
    joint = cones.project_onto_cone(cones.embed_product(a, b), v)
    assert np.allclose(cones.project_product(a, b, v), joint, atol=1e-12)


# --- properties ------------------------------------------------------------


@st.composite
def cone_specs(draw):
    k = draw(st.integers(1, 4))
    ts = [draw(angle) for _ in range(k)]
    normals = np.array([unit(t) for t in ts])
    g = normals @ normals.T
    if np.any(g[np.triu_indices(k, 1)] <= -1 + 1e-6):
        normals = normals[:1]
    return normals


@given(normals=cone_specs(), v=vec)
def test_projection_certificate(normals, v):
    # [DERIVED] variational inequality checked with a nonnegative least-squares oracle
    c = cones.ConeSpec.from_normals((0, 0), normals)
    p = cones.project_onto_cone(c, v)
    check_certificate(c.normals, v, p)


@given(normals=cone_specs(), v=vec, s=st.floats(0.0, 10.0))
def test_projection_is_positively_homogeneous_and_idempotent(normals, v, s):
    # [TRIVIAL] P(sv) = sP(v), P(P(v)) = P(v)
    c = cones.ConeSpec.from_normals((0, 0), normals)
    p = cones.project_onto_cone(c, v)
    assert np.allclose(cones.project_onto_cone(c, s * v), s * p, atol=1e-9)
    assert np.allclose(cones.project_onto_cone(c, p), p, atol=1e-12)


@given(normals=cone_specs(), v=vec, w=vec)
def test_projection_is_nonexpansive(normals, v, w):
    # [TRIVIAL] metric projections onto convex sets are 1-Lipschitz
    c = cones.ConeSpec.from_normals((0, 0), normals)
    pv, pw = cones.project_onto_cone(c, v), cones.project_onto_cone(c, w)
    assert np.linalg.norm(pv - pw) <= np.linalg.norm(v - w) + 1e-12
