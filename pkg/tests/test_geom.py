import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import sqrtm_eig, wasserstein_trace_form
from texttrack.errors import DegenerateGeometry
from texttrack.geom import (RotatedBox, as_polygon, box_to_gaussian, convex_hull, iou_matrix,
                            min_area_rotated_box, polygon_iou, positional_matrix, positional_score,
                            signed_area, sqrtm_2x2, wasserstein_distance, Gaussian2)

coord = st.floats(-500, 500, allow_nan=False)
side = st.floats(0.5, 300, allow_nan=False)
angle = st.floats(-4 * math.pi, 4 * math.pi, allow_nan=False)
boxes = st.builds(RotatedBox, coord, coord, side, side, angle)


# -- polygons ---------------------------------------------------------------

def test_as_polygon_orients_counter_clockwise():
    cw = [(0, 0), (0, 1), (1, 1), (1, 0)]
    poly = as_polygon(cw)
    assert signed_area(poly) == pytest.approx(1.0)
    assert as_polygon([0, 0, 1, 0, 1, 1, 0, 1]).shape == (4, 2)


@pytest.mark.parametrize("bad", [
    [(0, 0), (1, 1), (1, 0), (0, 1)],         # bow-tie
    [(0, 0), (1, 0), (2, 0), (3, 0)],         # collinear
    [(0, 0), (1, 0), (1, float("nan")), (0, 1)],
    [(0, 0), (1, 0)],
])
def test_as_polygon_rejects_invalid(bad):
    with pytest.raises((DegenerateGeometry, ValueError)):
        as_polygon(bad)


def test_unit_square_iou_half_offset():
    a = [(0, 0), (1, 0), (1, 1), (0, 1)]
    b = [(0.5, 0), (1.5, 0), (1.5, 1), (0.5, 1)]
    assert polygon_iou(a, b) == pytest.approx(1 / 3, abs=1e-12)
    assert polygon_iou(a, a) == pytest.approx(1.0)
    far = [(5, 5), (6, 5), (6, 6), (5, 6)]
    assert polygon_iou(a, far) == 0.0


def test_convex_hull_drops_interior_points():
    pts = np.array([(0, 0), (2, 0), (2, 2), (0, 2), (1, 1)], dtype=float)
    assert len(convex_hull(pts)) == 4


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(b1, b2):
    v = polygon_iou(b1.corners(), b2.corners())
    assert 0.0 <= v <= 1.0 + 1e-12
    assert v == pytest.approx(polygon_iou(b2.corners(), b1.corners()), abs=1e-9)


def test_rotated_iou_against_grid_sampling(rng):
    # Monte-Carlo style oracle on a fine grid.
    b1 = RotatedBox(0, 0, 4, 2, 0.3)
    b2 = RotatedBox(0.7, 0.4, 3, 2.5, -0.5)
    xs, ys = np.meshgrid(np.linspace(-4, 4, 1601), np.linspace(-4, 4, 1601))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)

    def inside(box):
        c, s = math.cos(box.theta), math.sin(box.theta)
        d = pts - [box.cx, box.cy]
        u = d[:, 0] * c + d[:, 1] * s
        v = -d[:, 0] * s + d[:, 1] * c
        return (np.abs(u) <= box.w / 2) & (np.abs(v) <= box.h / 2)

    m1, m2 = inside(b1), inside(b2)
    grid = (m1 & m2).sum() / (m1 | m2).sum()
    assert polygon_iou(b1.corners(), b2.corners()) == pytest.approx(grid, abs=2e-3)


# -- boxes ------------------------------------------------------------------

def test_min_area_box_of_unit_square():
    box = min_area_rotated_box([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert box.as_tuple() == pytest.approx((0.5, 0.5, 1.0, 1.0, 0.0), abs=1e-12)


def test_min_area_box_of_rotated_square():
    sq = RotatedBox(3, -2, 2, 2, math.pi / 6).corners()
    box = min_area_rotated_box(sq)
    assert box.theta == pytest.approx(math.pi / 6, abs=1e-9)
    assert (box.w, box.h) == pytest.approx((2, 2))


def test_min_area_box_rejects_collinear():
    with pytest.raises((DegenerateGeometry, ValueError)):
        min_area_rotated_box([(0, 0), (1, 1), (2, 2), (3, 3)])


@given(boxes)
def test_corners_round_trip_through_min_area_box(b):
    got = min_area_rotated_box(b.corners())
    assert got.cx == pytest.approx(b.cx, abs=1e-6)
    assert got.cy == pytest.approx(b.cy, abs=1e-6)
    assert got.area == pytest.approx(b.area, rel=1e-7)
    # same shape regardless of representation
    assert polygon_iou(got.corners(), b.corners()) == pytest.approx(1.0, abs=1e-6)


@given(boxes)
def test_canonical_form(b):
    assert b.w >= b.h
    assert -math.pi / 2 <= b.theta < math.pi / 2


def test_min_area_box_encloses_arbitrary_quad(rng):
    for _ in range(50):
        pts = rng.uniform(-10, 10, size=(4, 2))
        try:
            poly = as_polygon(pts)
        except (DegenerateGeometry, ValueError):
            continue
        box = min_area_rotated_box(poly)
        c, s = math.cos(box.theta), math.sin(box.theta)
        d = poly - [box.cx, box.cy]
        assert np.all(np.abs(d @ [c, s]) <= box.w / 2 + 1e-9)
        assert np.all(np.abs(d @ [-s, c]) <= box.h / 2 + 1e-9)


# -- Gaussians and distance ---------------------------------------------------

def test_gaussian_of_rotated_box():
    g = box_to_gaussian(RotatedBox(0, 0, 4, 2, math.pi / 4))
    assert g.sigma == pytest.approx(np.array([[1.5, 0.5], [0.5, 1.5]]), abs=1e-12)
    sq = box_to_gaussian(RotatedBox(0, 0, 4, 2, 0), "squared")
    assert np.diag(sq.sigma) == pytest.approx([4.0, 1.0])


def test_translation_only_pair():
    b1, b2 = RotatedBox(0, 0, 2, 2, 0), RotatedBox(3, 0, 2, 2, 0)
    d = wasserstein_distance(box_to_gaussian(b1), box_to_gaussian(b2))
    assert d == pytest.approx(3.0, abs=1e-12)
    assert positional_score(b1, b2, 1.0) == pytest.approx(1 - 3 / 2 ** 0.25, abs=1e-12)


def test_identical_boxes_score_one():
    b = RotatedBox(10, 20, 30, 8, 0.4)
    assert positional_score(b, b) == 1.0


def test_shape_only_difference():
    g1 = Gaussian2(np.zeros(2), np.diag([2.0, 1.0]))
    g2 = Gaussian2(np.zeros(2), np.diag([1.0, 2.0]))
    assert wasserstein_distance(g1, g2) == pytest.approx(math.sqrt(2 * (math.sqrt(2) - 1) ** 2), abs=1e-12)


def test_non_psd_covariance_rejected():
    bad = Gaussian2(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DegenerateGeometry):
        wasserstein_distance(bad, bad)


@given(boxes, boxes, st.sampled_from(["linear", "squared"]))
def test_distance_matches_trace_form(b1, b2, variant):
    g1, g2 = box_to_gaussian(b1, variant), box_to_gaussian(b2, variant)
    ref = wasserstein_trace_form(g1.mu, g1.sigma, g2.mu, g2.sigma)
    scale = 1 + np.trace(g1.sigma) + np.trace(g2.sigma)
    assert wasserstein_distance(g1, g2) == pytest.approx(ref, abs=1e-6 * scale)


@given(st.floats(1e-6, 1e4), st.floats(1e-6, 1e4), st.floats(-math.pi, math.pi))
def test_sqrtm_matches_eigen_oracle(l1, l2, t):
    c, s = math.cos(t), math.sin(t)
    r = np.array([[c, -s], [s, c]])
    m = r @ np.diag([l1, l2]) @ r.T
    root = sqrtm_2x2(m)
    assert root == pytest.approx(sqrtm_eig(m), abs=1e-8 * max(1.0, math.sqrt(max(l1, l2))))
    assert root @ root == pytest.approx(m, rel=1e-9, abs=1e-9 * max(l1, l2))


def test_positional_matrix_matches_pairwise(rng):
    rows = [RotatedBox(*rng.uniform(0, 100, 2), *rng.uniform(5, 50, 2), rng.uniform(-1, 1)) for _ in range(4)]
    cols = [RotatedBox(*rng.uniform(0, 100, 2), *rng.uniform(5, 50, 2), rng.uniform(-1, 1)) for _ in range(3)]
    m = positional_matrix(rows, cols, 0.7, "squared")
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            assert m[i, j] == pytest.approx(positional_score(a, b, 0.7, "squared"), abs=1e-12)
    assert iou_matrix([r.corners() for r in rows], []).shape == (4, 0)


def test_alpha_must_be_positive():
    b = RotatedBox(0, 0, 2, 1)
    with pytest.raises(ValueError):
        positional_score(b, b, 0.0)
