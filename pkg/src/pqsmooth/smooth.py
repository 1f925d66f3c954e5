"""Strip and disk blends, and the smoothed map that assembles them.

Every regional formula is written as a correction ``Delta = g_eps - g`` in the
feature's model frame, so the smoothed jet is the base-cell jet plus the
pushed-forward correction. Corrections vanish identically outside their blend
region, which makes support locality exact.

Strip correction, with ``H`` the side indicator (0 on the minus cell, 1 on the
plus cell) and ``psi`` an along-edge taper that is 1 away from vertex disks::

    Delta(y) = psi(y2) * (eta_eps(y1) - H) * y1**2 * a

Disk correction on quadrant ``i``::

    Delta(y) = -chi_eps(y) * Q_i(y)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .compat import EdgeMismatch, PiecewiseQuadMap, VertexMismatch
from .cutoff import RadialBump, TransitionProfile, chi_jet, eta_jet
from .errors import ContractViolation
from .partition import (BOUNDARY, CELL_BULK, EDGE_STRIP, VERTEX_ANNULUS, VERTEX_CORE,
                        NeighborhoodPlan, classify_points, plan_neighborhoods)
from .quadmap import Jet2, QuadraticMap2, jet2


def _as_points(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def quadrant_of(y) -> np.ndarray:
    """Model quadrant index 0..3 (NE, NW, SW, SE); zero coordinates count as positive."""
    y = _as_points(y)
    east, north = y[..., 0] >= 0, y[..., 1] >= 0
    return np.where(east, np.where(north, 0, 3), np.where(north, 1, 2))


def _times(f, g):
    """Product rule for scalar 2-jets along one variable."""
    return f[0] * g[0], f[1] * g[0] + f[0] * g[1], f[2] * g[0] + 2 * f[1] * g[1] + f[0] * g[2]


def taper_jet(profile: TransitionProfile, s, sub: Tuple[float, float], taper: Tuple[bool, bool],
              ramp: float):
    """Along-edge fade ``psi`` and its first two derivatives.

    At each flagged end the factor rises from 0 to 1 over ``ramp``, using the
    same transition profile as the cross-interface blend.
    """
    s = _as_points(s)
    out = (np.ones_like(s), np.zeros_like(s), np.zeros_like(s))
    s0, s1 = sub
    if taper[0]:
        v, d1, d2 = profile.jet(2.0 * (s - s0) / ramp - 1.0)
        out = _times(out, (v, d1 * 2.0 / ramp, d2 * 4.0 / ramp**2))
    if taper[1]:
        v, d1, d2 = profile.jet(2.0 * (s1 - s) / ramp - 1.0)
        out = _times(out, (v, -d1 * 2.0 / ramp, d2 * 4.0 / ramp**2))
    return out


def strip_delta_jet(a, profile: TransitionProfile, eps: float, y, plus_side,
                    sub: Optional[Tuple[float, float]] = None,
                    taper: Tuple[bool, bool] = (False, False)) -> Jet2:
    """Jet of the strip correction in model coordinates (zero for ``|y1| >= eps``)."""
    a = np.asarray(a, dtype=float)
    y = _as_points(y)
    y1, y2 = y[..., 0], y[..., 1]
    H = np.asarray(plus_side, dtype=float)
    e0, e1, e2 = eta_jet(profile, y1, eps)
    f = e0 - H
    F = f * y1 * y1
    F1 = e1 * y1 * y1 + 2.0 * y1 * f
    F2 = e2 * y1 * y1 + 4.0 * y1 * e1 + 2.0 * f
    if any(taper):
        p0, p1, p2 = taper_jet(profile, y2, sub, taper, eps)
    else:
        p0, p1, p2 = np.ones_like(y1), np.zeros_like(y1), np.zeros_like(y1)
    val = (p0 * F)[..., None] * a
    jac = np.stack([(p0 * F1)[..., None] * a, (p1 * F)[..., None] * a], axis=-1)
    h00, h01, h11 = p0 * F2, p1 * F1, p2 * F
    blk = np.stack([np.stack([h00, h01], -1), np.stack([h01, h11], -1)], -2)
    hess = a[:, None, None] * blk[..., None, :, :]
    return Jet2(val, jac, hess)


def _quadrant_jets(Q: Sequence[QuadraticMap2], y, quadrant) -> Jet2:
    out = Jet2.zeros(y.shape[:-1])
    for i in range(4):
        sel = quadrant == i
        if np.any(sel):
            j = Q[i].jets(y[sel])
            out.value[sel], out.jacobian[sel], out.hessian[sel] = j.value, j.jacobian, j.hessian
    return out


def vertex_delta_jet(Q: Sequence[QuadraticMap2], bump: RadialBump, eps: float, y,
                     quadrant=None) -> Jet2:
    """Jet of the disk correction ``-chi_eps * Q_i`` in model coordinates."""
    y = _as_points(y)
    quadrant = quadrant_of(y) if quadrant is None else np.broadcast_to(quadrant, y.shape[:-1])
    q = _quadrant_jets(Q, y, quadrant)
    c, gc, hc = chi_jet(bump, y, eps)
    val = -c[..., None] * q.value
    jac = -c[..., None, None] * q.jacobian - q.value[..., :, None] * gc[..., None, :]
    hess = (-c[..., None, None, None] * q.hessian
            - np.einsum("...i,...kj->...kij", gc, q.jacobian)
            - np.einsum("...ki,...j->...kij", q.jacobian, gc)
            - q.value[..., :, None, None] * hc[..., None, :, :])
    return Jet2(val, jac, hess)


def flat_smooth_jet(em: EdgeMismatch, Pminus: Optional[QuadraticMap2], profile: TransitionProfile,
                    eps: float, x) -> Jet2:
    """Jet of ``P-(x) + eta_eps(x1) x1**2 a`` at model points inside the open strip."""
    x = _as_points(x)
    if np.any(np.abs(x[..., 0]) >= eps):
        raise ContractViolation(f"strip formula evaluated at |x1| >= eps = {eps}")
    P = em.minus if Pminus is None else Pminus
    a = em.a
    base = jet2(P, x)
    x1 = x[..., 0]
    e0, e1, e2 = eta_jet(profile, x1, eps)
    R = (e0 * x1 * x1)[..., None] * a
    col = (2.0 * x1 * e0 + x1 * x1 * e1)[..., None] * a
    jac = base.jacobian.copy()
    jac[..., :, 0] += col
    hess = base.hessian.copy()
    hess[..., :, 0, 0] += (2.0 * e0 + 4.0 * x1 * e1 + x1 * x1 * e2)[..., None] * a
    return Jet2(base.value + R, jac, hess)


def vertex_smooth_jet(vm: VertexMismatch, bump: RadialBump, eps: float, x, quadrant=None) -> Jet2:
    """Jet of ``P*(x) + (1 - chi_eps(x)) Q_i(x)`` at model points inside the open disk.

    ``quadrant`` forces the one-sided formula; by default it follows the
    coordinate signs. On the closed half disk the result is the jet of ``P*``.
    """
    x = _as_points(x)
    r = np.hypot(x[..., 0], x[..., 1])
    if np.any(r >= eps):
        raise ContractViolation(f"disk formula evaluated at |x| >= eps = {eps}")
    quadrant = quadrant_of(x) if quadrant is None else np.broadcast_to(quadrant, x.shape[:-1])
    star = jet2(vm.star, x)
    q = _quadrant_jets(vm.Q, x, quadrant)
    c, gc, hc = chi_jet(bump, x, eps)
    w = 1.0 - c
    val = star.value + w[..., None] * q.value
    jac = star.jacobian + w[..., None, None] * q.jacobian - q.value[..., :, None] * gc[..., None, :]
    hess = (star.hessian + w[..., None, None, None] * q.hessian
            - np.einsum("...i,...kj->...kij", gc, q.jacobian)
            - np.einsum("...ki,...j->...kij", q.jacobian, gc)
            - q.value[..., :, None, None] * hc[..., None, :, :])
    core = r <= 0.5 * eps
    return Jet2(np.where(core[..., None], star.value, val),
                np.where(core[..., None, None], star.jacobian, jac),
                np.where(core[..., None, None, None], star.hessian, hess))


def strip_hessian_bound(em: EdgeMismatch, profile: TransitionProfile, tapered: bool = False) -> float:
    """Uniform bound on ``|D^2 g_eps|_F`` over a strip, independent of eps.

    Untapered: ``|D^2 P-|_F + 2|a|(1 + 2 C1 + C2)``. With an end taper of
    ramp length eps the correction is written against the piece of the
    evaluated side, so the larger of the two piece Hessians is used.
    """
    _, C1, C2 = profile.C
    na = float(np.linalg.norm(em.a))
    base = float(np.linalg.norm(em.minus.hessian))
    if not tapered:
        return base + 2.0 * na * (1.0 + 2.0 * C1 + C2)
    base = max(base, float(np.linalg.norm(em.plus.hessian)))
    cross = 2.0 * C1 * (2.0 + C1)
    return base + na * float(np.sqrt((2.0 + 4.0 * C1 + C2) ** 2 + 2.0 * cross**2 + (4.0 * C2) ** 2))


def vertex_hessian_bound(vm: VertexMismatch, bump: RadialBump) -> float:
    """Uniform bound on ``|D^2 g_eps|_F`` over a disk: ``|D^2 P*| + C (1 + 2 B1 + B2/2)``."""
    _, B1, B2 = bump.C
    return float(np.linalg.norm(vm.star.hessian)) + vm.C * (1.0 + 2.0 * B1 + 0.5 * B2)


# -- assembled map -----------------------------------------------------------------------


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SmoothedMap:
    """Base map plus strip and disk blends; ``eps == 0`` leaves a feature unsmoothed."""

    base: PiecewiseQuadMap
    plan: NeighborhoodPlan
    eps_edge: np.ndarray
    eps_vertex: np.ndarray
    profile: TransitionProfile
    bump: RadialBump

    def __post_init__(self):
        P = self.base.partition
        ee, ev = _readonly(self.eps_edge), _readonly(self.eps_vertex)
        if ee.shape != (len(P.edges),) or ev.shape != (len(P.vertices),):
            raise ValueError("need one eps per interior edge and per interior vertex")
        if np.any(ee < 0) or np.any(ee >= self.plan.edge_halfwidth):
            raise ValueError("edge eps must lie in [0, planned half-width)")
        if np.any(ev < 0) or np.any(ev >= self.plan.vertex_radius):
            raise ValueError("vertex eps must lie in [0, planned radius)")
        object.__setattr__(self, "eps_edge", ee)
        object.__setattr__(self, "eps_vertex", ev)

    @classmethod
    def create(cls, base: PiecewiseQuadMap, eps_edge=None, eps_vertex=None,
               profile: Union[str, TransitionProfile] = "flat-exponential",
               plan: Optional[NeighborhoodPlan] = None, shrink: float = 0.5) -> "SmoothedMap":
        P = base.partition
        plan = plan_neighborhoods(P, shrink) if plan is None else plan
        profile = TransitionProfile(profile) if isinstance(profile, str) else profile
        ee = np.zeros(len(P.edges)) if eps_edge is None else np.broadcast_to(eps_edge, (len(P.edges),))
        ev = (np.zeros(len(P.vertices)) if eps_vertex is None
              else np.broadcast_to(eps_vertex, (len(P.vertices),)))
        return cls(base, plan, ee, ev, profile, RadialBump(profile))

    def with_eps(self, eps_edge=None, eps_vertex=None) -> "SmoothedMap":
        return SmoothedMap(self.base, self.plan,
                           self.eps_edge if eps_edge is None else eps_edge,
                           self.eps_vertex if eps_vertex is None else eps_vertex,
                           self.profile, self.bump)

    @property
    def partition(self):
        return self.base.partition

    def classify(self, X):
        return classify_points(self.partition, self.plan, X, self.eps_vertex, self.eps_edge)

    # model-frame corrections for one feature, used by evaluation and by quadrature
    def edge_delta(self, e: int, y, plus_side) -> Jet2:
        eps = self.eps_edge[e]
        if eps == 0:
            return Jet2.zeros(np.shape(y)[:-1])
        return strip_delta_jet(self.base.edge_mismatch[e].a, self.profile, eps, y, plus_side,
                               tuple(self.plan.edge_sub[e]), tuple(self.plan.edge_taper[e]))

    def vertex_delta(self, v: int, y, quadrant=None) -> Jet2:
        eps = self.eps_vertex[v]
        if eps == 0:
            return Jet2.zeros(np.shape(y)[:-1])
        return vertex_delta_jet(self.base.vertex_mismatch[v].Q, self.bump, eps, y, quadrant)

    def _corrections(self, X, cells, tags, ids):
        """Physical correction jets of the blend points, grouped by feature."""
        P = self.partition
        for e in np.unique(ids[tags == EDGE_STRIP]):
            sel = (tags == EDGE_STRIP) & (ids == e)
            edge = P.edges[e]
            d = self.edge_delta(e, edge.frame.inverse(X[sel]), cells[sel] == edge.plus)
            yield sel, d.pushforward(edge.frame)
        ring = (tags == VERTEX_ANNULUS) | (tags == VERTEX_CORE)
        for v in np.unique(ids[ring]):
            sel = ring & (ids == v)
            vert = P.vertices[v]
            y = X[sel] - np.array(vert.point)
            quad = quadrant_of(y)
            for i, c in enumerate(vert.cells):
                quad[cells[sel] == c] = i
            d = self.vertex_delta(v, y, quad)
            yield sel, d  # translation frame: no pushforward needed

    def _prepare(self, X, cells):
        X = np.atleast_2d(_as_points(X))
        tags, ids = self.classify(X)
        cells = self.partition.locate(X) if cells is None else np.broadcast_to(cells, X.shape[:-1])
        return X, np.asarray(cells), tags, ids

    def delta_jet(self, X, cells=None) -> Jet2:
        """Jet of ``g_eps - g`` (evaluated on the side of ``cells`` if given)."""
        X, cells, tags, ids = self._prepare(X, cells)
        out = Jet2.zeros(X.shape[:-1])
        for sel, d in self._corrections(X, cells, tags, ids):
            out.value[sel], out.jacobian[sel], out.hessian[sel] = d.value, d.jacobian, d.hessian
        return out

    def jet(self, X, cells=None) -> Jet2:
        """Value, Jacobian and Hessian of the smoothed map at physical points."""
        X, cells, tags, ids = self._prepare(X, cells)
        out = self.base.jets(X, cells)
        for sel, d in self._corrections(X, cells, tags, ids):
            out.value[sel] += d.value
            out.jacobian[sel] += d.jacobian
            out.hessian[sel] += d.hessian
        core = tags == VERTEX_CORE
        for v in np.unique(ids[core]):
            sel = core & (ids == v)
            j = self.base.pieces[self.partition.vertices[v].cells[0]].jets(X[sel])
            out.value[sel], out.jacobian[sel], out.hessian[sel] = j.value, j.jacobian, j.hessian
        return out

    def value(self, X) -> np.ndarray:
        return self.jet(X).value

    __call__ = value

    # -- feature bookkeeping -------------------------------------------------------------

    def active_features(self):
        """``(kind, id, eps)`` of every smoothed feature, vertices first."""
        out = [("vertex", v, float(e)) for v, e in enumerate(self.eps_vertex) if e > 0]
        return out + [("edge", e, float(w)) for e, w in enumerate(self.eps_edge) if w > 0]

    def support_rect(self, kind: str, fid: int):
        """Physical bounding box of a feature's blend region."""
        P = self.partition
        if kind == "vertex":
            (px, py), r = P.vertices[fid].point, self.eps_vertex[fid]
            return (px - r, px + r, py - r, py + r)
        edge, eps = P.edges[fid], self.eps_edge[fid]
        s0, s1 = self.plan.edge_sub[fid]
        mid = 0.5 * (edge.span[0] + edge.span[1])
        if edge.axis == 0:
            return (edge.position - eps, edge.position + eps, mid + s0, mid + s1)
        return (mid - s1, mid - s0, edge.position - eps, edge.position + eps)

    def regularity(self) -> dict:
        """Interface length by smoothness class.

        Strip interiors away from tapers become as smooth as the profile
        (``glue_order`` derivatives); so do vertex cores. Tapers, annulus axes
        and unsmoothed interface stay merely C^1.
        """
        P = self.partition
        total = sum(e.length for e in P.edges)
        smooth = 0.0
        for e, eps in enumerate(self.eps_edge):
            if eps > 0:
                s0, s1 = self.plan.edge_sub[e]
                smooth += (s1 - s0) - eps * int(np.sum(self.plan.edge_taper[e]))
        smooth += sum(2.0 * eps for eps in self.eps_vertex if eps > 0)
        order = self.profile.glue_order
        return {"interface_length": float(total), "smoothed_length": float(smooth),
                "c1_only_length": float(total - smooth),
                "smoothed_class": "C-infinity" if np.isinf(order) else f"C{int(order)}"}


__all__ = ["SmoothedMap", "flat_smooth_jet", "vertex_smooth_jet", "strip_delta_jet",
           "vertex_delta_jet", "taper_jet", "quadrant_of", "strip_hessian_bound",
           "vertex_hessian_bound", "CELL_BULK", "BOUNDARY"]
