import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.spatial import cKDTree

from reflectsde import geometry as geo
from reflectsde.errors import NotOnBoundary, OutOfReach

RECT = geo.rectangle(-1.0, 1.0, 0.0, 2.0)
DISC = geo.Disc((0.0, 0.0), 1.0)
TRI = geo.default_triangle()
LIP = geo.default_lip_domain()
# upper graph dips in the middle, so this one is not convex
WAVY = geo.LipDomain(lower=[-0.15], upper=[0.15, 0.0, 0.05], a=0.0, b=1.0)

coord = st.floats(-4.0, 4.0, allow_nan=False)
points2 = st.tuples(coord, coord).map(np.array)


def segment_oracle(vertices, z):
    """Brute-force distance from z to a polygon boundary, signed by half-plane tests."""
    v = np.asarray(vertices, float)
    a, b = v, np.roll(v, -1, axis=0)
    ab = b - a
    s = np.clip(((z - a) * ab).sum(1) / (ab * ab).sum(1), 0.0, 1.0)
    dist = np.linalg.norm(a + s[:, None] * ab - z, axis=1).min()
    cross = ab[:, 0] * (z[1] - a[:, 1]) - ab[:, 1] * (z[0] - a[:, 0])
    return -dist if np.all(cross >= 0) else dist


def lip_oracle(domain, n=400_001):
    """Dense boundary sampling of the lip domain for nearest-point queries."""
    x = np.linspace(domain.a, domain.b, n)
    pts = np.vstack([np.c_[x, domain.f1(x)], np.c_[x, domain.f2(x)]])
    return pts, cKDTree(pts)


# --- classification --------------------------------------------------------


def test_disc_center_is_interior_at_unit_depth():
    # [TRIVIAL] center of the unit disc
    c = geo.classify_point(DISC, (0.0, 0.0))
    assert c.tag is geo.PointTag.INTERIOR
    assert c.boundary_distance == pytest.approx(1.0)


def test_rectangle_corner_is_boundary():
    # [TRIVIAL]
    assert geo.classify_point(RECT, (1.0, 0.0), 1e-9).tag is geo.PointTag.BOUNDARY


def test_far_point_of_disc():
    # [TRIVIAL] distance 2 from the boundary; a convex disc has infinite reach
    c = geo.classify_point(DISC, (3.0, 0.0))
    assert c.distance == pytest.approx(2.0)
    assert c.tag is geo.PointTag.EXTERIOR_NEAR
    # a non-convex lip domain has finite reach, so a point well outside is far
    assert geo.classify_point(WAVY, (0.5, 5.0)).tag is geo.PointTag.EXTERIOR_FAR


def test_product_of_discs_origin_interior():
    # [TRIVIAL]
    prod = geo.Product(DISC, DISC)
    assert geo.classify_point(prod, np.zeros(4)).tag is geo.PointTag.INTERIOR


def test_classify_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        geo.classify_point(DISC, (0.0, 0.0), 0.0)


# --- signed distance -------------------------------------------------------


def test_interval_signed_distance():
    # [TRIVIAL]
    iv = geo.Interval(0.0, 1.0)
    assert geo.signed_distance(iv, 0.3) == pytest.approx(-0.3)
    assert geo.signed_distance(iv, 1.5) == pytest.approx(0.5)
    assert geo.signed_distance(geo.half_line(), -2.0) == pytest.approx(2.0)


@given(points2)
def test_disc_signed_distance_closed_form(z):
    # [DERIVED] |z - c| - R
    assert geo.signed_distance(DISC, z) == pytest.approx(np.linalg.norm(z) - 1.0, abs=1e-12)


@pytest.mark.parametrize("poly", [RECT, TRI, geo.ConvexPolygon([(0, 0), (2, 0), (3, 1), (1, 2)])])
def test_polygon_signed_distance_matches_segment_oracle(poly):
    # [DERIVED] brute force over edges
    rng = np.random.default_rng(4)
    for z in rng.uniform(-3, 5, size=(500, 2)):
        assert geo.signed_distance(poly, z) == pytest.approx(
            segment_oracle(poly.vertices, z), abs=1e-12)


def test_lip_signed_distance_matches_dense_sampling():
    # [DERIVED] dense boundary sampling oracle
    _, tree = lip_oracle(LIP)
    rng = np.random.default_rng(5)
    z = np.c_[rng.uniform(-0.1, 1.1, 400), rng.uniform(-0.3, 0.3, 400)]
    sd = geo.signed_distance(LIP, z)
    inside = (z[:, 0] > 0) & (z[:, 0] < 1) & (np.abs(z[:, 1]) < LIP.f2(z[:, 0]))
    dist, _ = tree.query(z)
    # the oracle misses the straight end walls, so compare where the nearest point is on a graph
    ok = np.abs(sd) <= dist + 1e-9
    assert ok.all()
    assert np.all((sd < 0) == inside)


# --- projection ------------------------------------------------------------


def test_rectangle_corner_clamp():
    # [TRIVIAL]
    assert np.allclose(geo.project_to_closure(RECT, (2.0, 3.0)), (1.0, 2.0))


def test_disc_radial_projection():
    # [TRIVIAL]
    assert np.allclose(geo.project_to_closure(DISC, (2.0, 0.0)), (1.0, 0.0))


def test_lip_projection_example_point():
    # [DERIVED] nearest point on the upper graph by dense sampling
    pts, tree = lip_oracle(LIP)
    z = np.array([0.5, 0.3])
    p = geo.project_to_closure(LIP, z)
    _, i = tree.query(z)
    assert p[1] == pytest.approx(LIP.f2(p[0]), abs=1e-12)
    assert np.linalg.norm(z - p) == pytest.approx(np.linalg.norm(z - pts[i]), abs=1e-9)


def test_lip_projection_matches_dense_sampling():
    # [DERIVED]
    pts, tree = lip_oracle(LIP)
    rng = np.random.default_rng(6)
    z = np.c_[rng.uniform(0.05, 0.95, 300), rng.uniform(-0.3, 0.3, 300)]
    z = z[geo.signed_distance(LIP, z) > 0]
    p = geo.project_to_closure(LIP, z)
    dist, _ = tree.query(z)
    assert np.max(np.abs(np.linalg.norm(z - p, axis=1) - dist)) < 1e-8


def test_lip_projection_out_of_reach():
    with pytest.raises(OutOfReach):
        geo.project_to_closure(WAVY, (0.5, 50.0))


@pytest.mark.parametrize("dom", [RECT, DISC, TRI, LIP, WAVY])
@given(z=points2)
def test_projection_is_idempotent_and_nearest(dom, z):
    # [TRIVIAL] properties of a metric projection
    if isinstance(dom, geo.LipDomain):
        z = np.array([z[0] / 4 + 0.5, z[1] / 16])
    assume(geo.signed_distance(dom, z) < dom.reach / 2)
    p = geo.project_to_closure(dom, z)
    assert geo.signed_distance(dom, p) <= 1e-9
    assert np.allclose(geo.project_to_closure(dom, p), p, atol=1e-9)
    rng = np.random.default_rng(0)
    q = dom.interior_samples(200, rng)
    assert np.linalg.norm(z - p) <= np.linalg.norm(z - q, axis=1).min() + 1e-9


def test_product_projection_is_blockwise():
    # [TRIVIAL] the closest point of a product splits by factor
    prod = geo.Product(DISC, RECT)
    z = np.array([2.0, 0.0, 2.0, 3.0])
    assert np.allclose(geo.project_to_closure(prod, z), [1.0, 0.0, 1.0, 2.0])


# --- proximal normals ------------------------------------------------------


def test_rectangle_edge_normal():
    # [TRIVIAL]
    assert np.allclose(geo.proximal_normal_generators(RECT, (0.0, 0.0)), [[0.0, 1.0]])


def test_rectangle_corner_normals():
    # [TRIVIAL]
    n = geo.proximal_normal_generators(RECT, (1.0, 0.0))
    assert sorted(map(tuple, np.round(n, 12))) == [(-1.0, 0.0), (0.0, 1.0)]


def test_product_normals_when_second_factor_interior():
    # [PAPER] only the boundary factor contributes a normal
    prod = geo.Product(RECT, geo.rectangle(0.0, 1.0, 0.0, 2.0))
    n = geo.proximal_normal_generators(prod, (0.0, 0.0, 0.5, 1.0))
    assert np.allclose(n, [[0.0, 1.0, 0.0, 0.0]])


def test_normals_off_boundary_raise():
    with pytest.raises(NotOnBoundary):
        geo.proximal_normal_generators(RECT, (0.0, 1.0))


def test_disc_normal_points_inward():
    # [TRIVIAL]
    t = 0.7
    n = geo.proximal_normal_generators(DISC, (math.cos(t), math.sin(t)))
    assert np.allclose(n, [[-math.cos(t), -math.sin(t)]])


def test_lip_normals_are_graph_normals():
    # [DERIVED] inward normal of y = f2(x) is (f2', -1)/sqrt(1 + f2'^2)
    x = 0.3
    n = geo.proximal_normal_generators(LIP, (x, LIP.f2(x)))
    expect = np.array([LIP.df2(x), -1.0]) / math.hypot(LIP.df2(x), 1.0)
    assert np.allclose(n, [expect], atol=1e-9)


# --- construction and certificates -----------------------------------------


def test_invalid_domains_rejected():
    with pytest.raises(ValueError):
        geo.Interval(-math.inf, 0.0)
    with pytest.raises(ValueError):
        geo.Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        geo.ConvexPolygon([(0, 0), (1, 1), (2, 0), (1, 3)])
    with pytest.raises(ValueError):
        geo.Disc((0, 0), 0.0)


def test_reach_values():
    # [DERIVED] convex shapes have infinite reach; the wavy lip domain does not
    assert math.isinf(RECT.reach) and math.isinf(DISC.reach) and math.isinf(LIP.reach)
    assert math.isfinite(WAVY.reach)
    assert WAVY.reach == pytest.approx(1 / (2 * WAVY.certificate.C0))


def test_wavy_curvature_bound():
    # [DERIVED] C0 covers half the largest inward-bending curvature of the upper graph
    x = np.linspace(0, 1, 20001)
    f = 0.15 * np.sin(np.pi * x) + 0.05 * np.sin(3 * np.pi * x)
    d1, d2 = np.gradient(f, x), np.gradient(np.gradient(f, x), x)
    kappa = np.maximum(d2, 0) / (1 + d1 ** 2) ** 1.5
    assert WAVY.certificate.C0 >= 0.5 * kappa[5:-5].max() * 0.99


def test_lip_constant_below_one():
    assert 0 < LIP.lip_constant < 1


@pytest.mark.parametrize("dom", [geo.half_line(), geo.Interval(0.0, 1.0), RECT, DISC, TRI, LIP, WAVY,
                                 geo.Product(DISC, RECT)])
def test_certificates_verify(dom):
    m = geo.verify_certificate(dom, n_boundary=2000, n_inner=2000)
    assert m["exterior_ball"] >= -1e-9
    assert m["phi"] >= -1e-9
    assert m["covering"] >= -1e-9
    assert m["uncovered"] == 0
