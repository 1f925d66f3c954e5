"""Tensor-product rectangular partitions, their interior features, and blend neighbourhoods.

Only interior edges (shared by two cells) and interior vertices (four-quadrant
crossings) are recorded as features; boundary edges and vertices of the
domain are never smoothed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError, PlanError
from .quadmap import AffineFrame, Rect

VERTEX_CORE, VERTEX_ANNULUS, EDGE_STRIP, CELL_BULK, BOUNDARY = range(5)
REGION_NAMES = ("vertex-core", "vertex-annulus", "edge-strip", "cell-bulk", "boundary")

_ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class Cell:
    id: int
    i: int
    j: int
    rect: Rect

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.rect
        return (x1 - x0) * (y1 - y0)

    @property
    def corners(self) -> np.ndarray:
        x0, x1, y0, y1 = self.rect
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


@dataclass(frozen=True)
class Edge:
    """Open interior segment on the line ``x_{axis} = position``.

    ``minus``/``plus`` are the cells on the negative/positive side of the
    interface coordinate. ``span`` is the range of the along-edge physical
    coordinate; ``end_vertices`` the interior vertex ids at its low/high end
    (``None`` at the domain boundary).
    """

    id: int
    axis: int
    position: float
    span: Tuple[float, float]
    minus: int
    plus: int
    end_vertices: Tuple[Optional[int], Optional[int]]

    @property
    def length(self) -> float:
        return self.span[1] - self.span[0]

    @property
    def midpoint(self) -> np.ndarray:
        mid = 0.5 * (self.span[0] + self.span[1])
        return np.array([self.position, mid]) if self.axis == 0 else np.array([mid, self.position])

    @property
    def frame(self) -> AffineFrame:
        """Model frame: interface ``{y1 = 0}``, minus cell at ``y1 < 0``, origin at the midpoint.

        Horizontal edges use a 90 degree rotation so a single model applies.
        """
        return AffineFrame(self.midpoint, np.eye(2) if self.axis == 0 else _ROT90)


@dataclass(frozen=True)
class Vertex:
    """Interior vertex; ``cells`` in model quadrant order Q1..Q4 (NE, NW, SW, SE)
    and ``edges`` in the order east, north, west, south."""

    id: int
    point: Tuple[float, float]
    cells: Tuple[int, int, int, int]
    edges: Tuple[int, int, int, int]

    @property
    def frame(self) -> AffineFrame:
        return AffineFrame.translation(self.point)


@dataclass(frozen=True, eq=False)
class Partition:
    x_breaks: np.ndarray
    y_breaks: np.ndarray
    cells: List[Cell]
    edges: List[Edge]
    vertices: List[Vertex]

    @property
    def nx(self) -> int:
        return len(self.x_breaks) - 1

    @property
    def ny(self) -> int:
        return len(self.y_breaks) - 1

    @property
    def bounds(self) -> Rect:
        return (float(self.x_breaks[0]), float(self.x_breaks[-1]),
                float(self.y_breaks[0]), float(self.y_breaks[-1]))

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    def cell_id(self, i: int, j: int) -> int:
        return j * self.nx + i

    def contains(self, X, tol: float = 0.0) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        x0, x1, y0, y1 = self.bounds
        return ((X[..., 0] >= x0 - tol) & (X[..., 0] <= x1 + tol)
                & (X[..., 1] >= y0 - tol) & (X[..., 1] <= y1 + tol))

    def locate(self, X) -> np.ndarray:
        """Cell id of each point; points on an interior grid line go to the upper/right cell."""
        X = np.asarray(X, dtype=float)
        i = np.clip(np.searchsorted(self.x_breaks, X[..., 0], side="right") - 1, 0, self.nx - 1)
        j = np.clip(np.searchsorted(self.y_breaks, X[..., 1], side="right") - 1, 0, self.ny - 1)
        return j * self.nx + i

    def adjacent_pairs(self) -> List[Tuple[int, int]]:
        return [(e.minus, e.plus) for e in self.edges]


def build_grid_partition(x_breaks, y_breaks) -> Partition:
    """Tensor-product partition with full edge/vertex adjacency."""
    xb = np.array(x_breaks, dtype=float)
    yb = np.array(y_breaks, dtype=float)
    for name, b in (("x_breaks", xb), ("y_breaks", yb)):
        if b.ndim != 1 or len(b) < 2:
            raise ValueError(f"{name} needs at least two breaks")
        if not np.all(np.isfinite(b)) or np.any(np.diff(b) <= 0):
            raise ValueError(f"{name} must be finite and strictly increasing: {b.tolist()}")
    xb.setflags(write=False)
    yb.setflags(write=False)
    nx, ny = len(xb) - 1, len(yb) - 1

    cells = [Cell(j * nx + i, i, j, (float(xb[i]), float(xb[i + 1]), float(yb[j]), float(yb[j + 1])))
             for j in range(ny) for i in range(nx)]

    def vid(i, j):  # interior vertex at (xb[i], yb[j])
        if 0 < i < nx and 0 < j < ny:
            return (j - 1) * (nx - 1) + (i - 1)
        return None

    edges: List[Edge] = []
    vert_edge = {}
    for i in range(1, nx):
        for j in range(ny):
            e = Edge(len(edges), 0, float(xb[i]), (float(yb[j]), float(yb[j + 1])),
                     j * nx + i - 1, j * nx + i, (vid(i, j), vid(i, j + 1)))
            vert_edge[("v", i, j)] = e.id
            edges.append(e)
    for j in range(1, ny):
        for i in range(nx):
            e = Edge(len(edges), 1, float(yb[j]), (float(xb[i]), float(xb[i + 1])),
                     (j - 1) * nx + i, j * nx + i, (vid(i, j), vid(i + 1, j)))
            vert_edge[("h", i, j)] = e.id
            edges.append(e)

    vertices = []
    for j in range(1, ny):
        for i in range(1, nx):
            cells_q = (j * nx + i, j * nx + i - 1, (j - 1) * nx + i - 1, (j - 1) * nx + i)
            edges_q = (vert_edge[("h", i, j)], vert_edge[("v", i, j)],
                       vert_edge[("h", i - 1, j)], vert_edge[("v", i, j - 1)])
            vertices.append(Vertex(vid(i, j), (float(xb[i]), float(yb[j])), cells_q, edges_q))
    return Partition(xb, yb, cells, edges, vertices)


# -- neighbourhood plan ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NeighborhoodPlan:
    """Disjoint closed disks at interior vertices and closed tubes around edge subsegments.

    For edge ``e`` the tube is ``{|y1| <= halfwidth[e], sub[e][0] <= y2 <= sub[e][1]}`` in
    the edge's model frame. ``taper[e]`` flags the model-coordinate ends of the
    subsegment that stop short of a vertex disk; there the strip blend is faded
    out along the edge so the smoothed map stays C^1.
    """

    shrink: float
    vertex_radius: np.ndarray
    edge_sub: np.ndarray          # (E, 2) model along-edge interval
    edge_halfwidth: np.ndarray    # (E,)
    edge_taper: np.ndarray        # (E, 2) bool, low/high model end
    min_gap: float
    recipe: str = "shrink-quarter-edge"

    def tube_rect(self, edge: Edge) -> Rect:
        """Physical bounding rectangle of the closed tube of ``edge``."""
        s0, s1 = self.edge_sub[edge.id]
        w = self.edge_halfwidth[edge.id]
        mid = 0.5 * (edge.span[0] + edge.span[1])
        if edge.axis == 0:
            return (edge.position - w, edge.position + w, mid + s0, mid + s1)
        # rotated frame: physical x1 = mid - y2
        return (mid - s1, mid - s0, edge.position - w, edge.position + w)

    def parameters(self) -> dict:
        return {"recipe": self.recipe, "shrink": self.shrink}


def _rect_rect_distance(a: Rect, b: Rect) -> float:
    dx = max(a[0] - b[1], b[0] - a[1], 0.0)
    dy = max(a[2] - b[3], b[2] - a[3], 0.0)
    return float(np.hypot(dx, dy))


def _point_rect_distance(p, r: Rect) -> float:
    dx = max(r[0] - p[0], p[0] - r[1], 0.0)
    dy = max(r[2] - p[1], p[1] - r[3], 0.0)
    return float(np.hypot(dx, dy))


def _model_end(edge: Edge, physical_end: int) -> int:
    """Index (0 = low, 1 = high) of the model along-coordinate end matching a physical end."""
    return physical_end if edge.axis == 0 else 1 - physical_end


def plan_neighborhoods(P: Partition, shrink: float = 0.5) -> NeighborhoodPlan:
    """Choose vertex disks and edge tubes.

    ``r_v = shrink * (shortest incident edge) / 4``; each edge is cut back by
    ``2 r_v`` at an interior-vertex end (leaving a gap ``r_v`` to the disk) and
    runs to the domain boundary otherwise; the tube half-width is
    ``shrink * min(adjacent cell thicknesses, end gaps, subsegment per end ramp) / 2``.
    """
    if not 0.0 < shrink < 1.0:
        raise ValueError(f"shrink must lie in (0, 1), got {shrink!r}")
    radius = np.array([shrink * min(P.edges[e].length for e in v.edges) / 4.0 for v in P.vertices])

    n_e = len(P.edges)
    sub = np.zeros((n_e, 2))
    width = np.zeros(n_e)
    taper = np.zeros((n_e, 2), dtype=bool)
    for e in P.edges:
        half = 0.5 * e.length
        lo, hi = -half, half  # physical along-coordinate relative to the midpoint
        gaps = []
        v_lo, v_hi = e.end_vertices
        if v_lo is not None:
            lo += 2.0 * radius[v_lo]
            gaps.append(radius[v_lo])
        if v_hi is not None:
            hi -= 2.0 * radius[v_hi]
            gaps.append(radius[v_hi])
        cm, cp = P.cells[e.minus].rect, P.cells[e.plus].rect
        thick = [cm[1] - cm[0], cp[1] - cp[0]] if e.axis == 0 else [cm[3] - cm[2], cp[3] - cp[2]]
        # each tapered end needs room for a ramp of length up to w
        n_ramps = int(v_lo is not None) + int(v_hi is not None)
        room = [(hi - lo) / n_ramps] if n_ramps else []
        w = shrink * min(thick + gaps + room) / 2.0
        if not (hi > lo and hi - lo > n_ramps * w):
            raise PlanError(f"edge {e.id} too short to host a tube subsegment after shrinking",
                            edge=e.id)
        if e.axis == 0:
            sub[e.id] = (lo, hi)
            taper[e.id] = (v_lo is not None, v_hi is not None)
        else:
            sub[e.id] = (-hi, -lo)
            taper[e.id] = (v_hi is not None, v_lo is not None)
        width[e.id] = w

    plan = NeighborhoodPlan(float(shrink), radius, sub, width, taper, np.inf)
    gap = neighborhood_gap(P, plan)
    if not gap > 1e-9:
        raise PlanError(f"planned neighbourhoods are not disjoint (min gap {gap:.3e})")
    object.__setattr__(plan, "min_gap", gap)
    return plan


def neighborhood_gap(P: Partition, plan: NeighborhoodPlan) -> float:
    """Smallest Euclidean distance between any two planned closed sets (inf if < 2 sets)."""
    disks = [(np.array(v.point), plan.vertex_radius[v.id]) for v in P.vertices]
    rects = [plan.tube_rect(e) for e in P.edges]
    best = np.inf
    for a in range(len(disks)):
        for b in range(a + 1, len(disks)):
            d = np.linalg.norm(disks[a][0] - disks[b][0]) - disks[a][1] - disks[b][1]
            best = min(best, d)
        for r in rects:
            best = min(best, _point_rect_distance(disks[a][0], r) - disks[a][1])
    for a in range(len(rects)):
        for b in range(a + 1, len(rects)):
            best = min(best, _rect_rect_distance(rects[a], rects[b]))
    return float(best)


# -- point classification ----------------------------------------------------------------


def _nearest_interior_break(breaks: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Index of the nearest interior break (1..n-1) to each t, or -1 if there is none."""
    n = len(breaks) - 1
    if n < 2:
        return np.full(t.shape, -1)
    inner = breaks[1:-1]
    k = np.clip(np.searchsorted(inner, t), 0, len(inner) - 1)
    km = np.clip(k - 1, 0, len(inner) - 1)
    pick = np.where(np.abs(t - inner[km]) < np.abs(t - inner[k]), km, k)
    return pick + 1


def classify_points(P: Partition, plan: NeighborhoodPlan, X, eps_vertex, eps_edge):
    """Vectorised region classification.

    Returns ``(tags, ids)``: the region tag of each point and the owning feature
    (vertex id, edge id, or cell id for bulk/boundary points). Vertex regions
    take precedence over edge strips, which take precedence over cell bulk.
    The core is ``|y| < eps/2``, the annulus ``eps/2 <= |y| < eps``, the strip
    ``|y1| < eps`` within the tube subsegment.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(P.contains(X)):
        bad = X[~P.contains(X)][0]
        raise DomainError(f"point {bad.tolist()} lies outside the domain {P.bounds}")
    eps_v = np.asarray(eps_vertex, dtype=float).reshape(-1)
    eps_e = np.asarray(eps_edge, dtype=float).reshape(-1)
    n = len(X)
    cell = P.locate(X)
    tags = np.full(n, CELL_BULK)
    ids = cell.copy()
    x0, x1, y0, y1 = P.bounds
    on_bd = (X[:, 0] == x0) | (X[:, 0] == x1) | (X[:, 1] == y0) | (X[:, 1] == y1)
    tags[on_bd] = BOUNDARY

    ix = _nearest_interior_break(P.x_breaks, X[:, 0])
    iy = _nearest_interior_break(P.y_breaks, X[:, 1])
    ci = np.clip(np.searchsorted(P.x_breaks, X[:, 0], side="right") - 1, 0, P.nx - 1)
    cj = np.clip(np.searchsorted(P.y_breaks, X[:, 1], side="right") - 1, 0, P.ny - 1)
    n_vert_edges = (P.nx - 1) * P.ny

    # edge strips (vertical lines, then horizontal lines)
    if len(P.edges):
        m = ix >= 1
        if np.any(m):
            eid = np.where(m, (ix - 1) * P.ny + cj, 0)
            _mark_strip(P, plan, X, eid, m, eps_e, tags, ids)
        m = iy >= 1
        if np.any(m):
            eid = np.where(m, n_vert_edges + (iy - 1) * P.nx + ci, 0)
            _mark_strip(P, plan, X, eid, m, eps_e, tags, ids)

    # vertex disks
    if len(P.vertices):
        m = (ix >= 1) & (iy >= 1)
        vid = np.where(m, (iy - 1) * (P.nx - 1) + (ix - 1), 0)
        vx = np.where(m, P.x_breaks[np.maximum(ix, 0)], 0.0)
        vy = np.where(m, P.y_breaks[np.maximum(iy, 0)], 0.0)
        r = np.hypot(X[:, 0] - vx, X[:, 1] - vy)
        ev = eps_v[vid] if len(eps_v) else np.zeros(n)
        core = m & (r < 0.5 * ev)
        ann = m & ~core & (r < ev)
        tags[core], ids[core] = VERTEX_CORE, vid[core]
        tags[ann], ids[ann] = VERTEX_ANNULUS, vid[ann]
    return tags, ids


def _mark_strip(P, plan, X, eid, mask, eps_e, tags, ids):
    edges = P.edges
    axis = np.array([e.axis for e in edges])[eid]
    pos = np.array([e.position for e in edges])[eid]
    mid = np.array([0.5 * (e.span[0] + e.span[1]) for e in edges])[eid]
    normal = np.where(axis == 0, X[:, 0] - pos, X[:, 1] - pos)
    along = np.where(axis == 0, X[:, 1] - mid, -(X[:, 0] - mid))
    s0, s1 = plan.edge_sub[eid, 0], plan.edge_sub[eid, 1]
    hit = mask & (np.abs(normal) < eps_e[eid]) & (along >= s0) & (along <= s1)
    tags[hit] = EDGE_STRIP
    ids[hit] = eid[hit]


def classify_point(P: Partition, plan: NeighborhoodPlan, x, eps_vertex, eps_edge):
    """Region name and owning feature id for a single point."""
    tags, ids = classify_points(P, plan, np.asarray(x, dtype=float).reshape(1, 2), eps_vertex, eps_edge)
    return REGION_NAMES[int(tags[0])], int(ids[0])
