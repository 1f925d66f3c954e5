import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pqsmooth.errors import DomainError, PlanError
from pqsmooth.partition import (REGION_NAMES, build_grid_partition, classify_point, classify_points,
                                neighborhood_gap, plan_neighborhoods)

breaks = st.lists(st.floats(0.2, 3.0), min_size=1, max_size=4).map(lambda w: np.concatenate([[0.0], np.cumsum(w)]))


def test_two_by_two_grid_is_the_four_quadrant_model():
    P = build_grid_partition([-1, 0, 1], [-1, 0, 1])
    assert (len(P.cells), len(P.edges), len(P.vertices)) == (4, 4, 1)
    v = P.vertices[0]
    assert v.point == (0.0, 0.0)
    rects = [P.cells[c].rect for c in v.cells]
    assert rects == [(0, 1, 0, 1), (-1, 0, 0, 1), (-1, 0, -1, 0), (0, 1, -1, 0)]


def test_single_cell_grid():
    P = build_grid_partition([0, 1], [0, 1])
    assert (len(P.cells), len(P.edges), len(P.vertices)) == (1, 0, 0)


def test_three_by_one_strip():
    P = build_grid_partition([0, 1, 2, 3], [0, 1])
    assert (len(P.cells), len(P.edges), len(P.vertices)) == (3, 2, 0)


@pytest.mark.parametrize("bad", [[0, 0, 1], [1, 0], [0], [0, np.nan]])
def test_bad_breaks_rejected(bad):
    with pytest.raises(ValueError):
        build_grid_partition(bad, [0, 1])


@given(breaks, breaks)
def test_cells_tile_the_domain(xb, yb):
    P = build_grid_partition(xb, yb)
    assert abs(sum(c.area for c in P.cells) - P.area) <= 1e-12 * P.area
    nx, ny = P.nx, P.ny
    assert len(P.edges) == (nx - 1) * ny + nx * (ny - 1)
    assert len(P.vertices) == (nx - 1) * (ny - 1)


@given(breaks, breaks)
def test_adjacency_is_conforming(xb, yb):
    P = build_grid_partition(xb, yb)
    for e in P.edges:
        m, p = P.cells[e.minus].rect, P.cells[e.plus].rect
        if e.axis == 0:
            assert m[1] == p[0] == e.position and (m[2], m[3]) == (p[2], p[3]) == e.span
        else:
            assert m[3] == p[2] == e.position and (m[0], m[1]) == (p[0], p[1]) == e.span
    for v in P.vertices:
        x, y = v.point
        signs = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
        for c, (sx, sy) in zip(v.cells, signs):
            r = P.cells[c].rect
            centre = np.array([(r[0] + r[1]) / 2, (r[2] + r[3]) / 2])
            assert np.sign(centre[0] - x) == sx and np.sign(centre[1] - y) == sy
        for e in v.edges:
            assert v.id in P.edges[e].end_vertices


def test_plan_on_two_by_two():
    P = build_grid_partition([-1, 0, 1], [-1, 0, 1])
    plan = plan_neighborhoods(P, 0.5)
    assert plan.vertex_radius[0] == 0.125
    for e in P.edges:
        rect = plan.tube_rect(e)
        dx = max(rect[0], -rect[1], 0)
        dy = max(rect[2], -rect[3], 0)
        assert np.hypot(dx, dy) > 0.125
    assert plan.min_gap > 1e-9


def test_plan_single_cell_is_empty():
    plan = plan_neighborhoods(build_grid_partition([0, 1], [0, 1]), 0.5)
    assert len(plan.vertex_radius) == 0 and len(plan.edge_halfwidth) == 0


def test_plan_three_by_one():
    P = build_grid_partition([0, 1, 2, 3], [0, 1])
    plan = plan_neighborhoods(P, 0.5)
    assert len(plan.vertex_radius) == 0 and len(plan.edge_halfwidth) == 2
    assert neighborhood_gap(P, plan) > 0


def test_plan_rejects_bad_shrink():
    with pytest.raises(ValueError):
        plan_neighborhoods(build_grid_partition([0, 1, 2], [0, 1]), 1.0)


def test_plan_handles_a_thin_row_near_full_shrink():
    P = build_grid_partition([0, 1, 2], [0, 1, 1.001, 2])
    plan = plan_neighborhoods(P, 0.99)
    assert plan.min_gap > 1e-9
    assert np.all(plan.edge_sub[:, 1] > plan.edge_sub[:, 0])


@given(breaks, breaks, st.floats(0.05, 0.95))
def test_planned_sets_are_disjoint_and_local(xb, yb, shrink):
    P = build_grid_partition(xb, yb)
    plan = plan_neighborhoods(P, shrink)
    assert neighborhood_gap(P, plan) > 1e-9
    for v in P.vertices:
        r = plan.vertex_radius[v.id]
        for c in P.cells:
            x0, x1, y0, y1 = c.rect
            d = np.hypot(max(x0 - v.point[0], v.point[0] - x1, 0), max(y0 - v.point[1], v.point[1] - y1, 0))
            assert (d < r) == (c.id in v.cells)
    for e in P.edges:
        t = plan.tube_rect(e)
        for c in P.cells:
            x0, x1, y0, y1 = c.rect
            overlap = min(t[1], x1) > max(t[0], x0) and min(t[3], y1) > max(t[2], y0)
            assert overlap == (c.id in (e.minus, e.plus))


def _two_by_two():
    P = build_grid_partition([-1, 0, 1], [-1, 0, 1])
    return P, plan_neighborhoods(P, 0.5)


def test_classify_examples():
    P, plan = _two_by_two()
    ev, ee = [0.1], [0.02] * 4
    assert classify_point(P, plan, [0.03, 0], ev, ee) == ("vertex-core", 0)
    assert classify_point(P, plan, [0.07, 0], ev, ee) == ("vertex-annulus", 0)
    tag, eid = classify_point(P, plan, [0.5, 0.001], ev, ee)
    edge = P.edges[eid]
    assert tag == "edge-strip" and edge.axis == 1 and edge.span == (0.0, 1.0)
    assert classify_point(P, plan, [0.5, 0.5], ev, ee)[0] == "cell-bulk"
    assert classify_point(P, plan, [1.0, 0.5], ev, ee)[0] == "boundary"


def test_classify_outside_domain():
    P, plan = _two_by_two()
    with pytest.raises(DomainError):
        classify_point(P, plan, [1.5, 0], [0.1], [0.02] * 4)


def test_classify_vertex_beats_strip():
    P, plan = _two_by_two()
    # inside both the vertex disk and the strip band of an edge line
    assert classify_point(P, plan, [0.0, 0.09], [0.1], [0.05] * 4)[0] == "vertex-annulus"


def test_classify_is_a_stable_partition():
    P, plan = _two_by_two()
    ev, ee = np.array([0.1]), np.array([0.03, 0.02, 0.025, 0.01])
    X = np.random.default_rng(0).uniform(-1, 1, (100_000, 2))
    tags, ids = classify_points(P, plan, X, ev, ee)
    assert tags.shape == (len(X),) and np.all((tags >= 0) & (tags < len(REGION_NAMES)))
    # distance to every region boundary, to keep perturbations off the boundaries
    r = np.hypot(X[:, 0], X[:, 1])
    d = np.minimum(np.abs(r - 0.05), np.abs(r - 0.1))
    for e in P.edges:
        normal = X[:, 0] - e.position if e.axis == 0 else X[:, 1] - e.position
        d = np.minimum(d, np.abs(np.abs(normal) - ee[e.id]))
        t = plan.tube_rect(e)
        d = np.minimum(d, np.min(np.abs(X[:, :, None] - np.array([[t[0], t[1]], [t[2], t[3]]])), axis=(1, 2)))
    keep = d > 1e-9
    Xp = X[keep] + np.random.default_rng(1).uniform(-1e-12, 1e-12, (int(keep.sum()), 2))
    tags2, ids2 = classify_points(P, plan, Xp, ev, ee)
    assert np.array_equal(tags2, tags[keep]) and np.array_equal(ids2, ids[keep])
