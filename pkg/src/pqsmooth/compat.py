"""Compatibility validation of piecewise quadratic maps and exact mismatch extraction.

Across a C^1 interface ``{x1 = 0}`` two quadratic pieces differ by exactly
``x1**2 * a``; at a four-quadrant vertex every piece agrees with the NE piece
to first order. Both facts are coefficient identities, checked here up to a
relative tolerance that only absorbs serialisation rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import C0Violation, C1Violation, CompatibilityError, JacobianFloorError, VertexJetError
from .partition import Partition
from .quadmap import (COEFF_NAMES, AffineFrame, Jet2, QuadraticMap2, det_jacobian_poly,
                      min_quadratic_on_rect, pullback)

COMPAT_RTOL = 1e-10

_ALPHA, _BETA, _GAMMA, _DELTA, _MU, _NU = range(6)
_ROT90 = AffineFrame(np.zeros(2), [[0.0, -1.0], [1.0, 0.0]])


def _offending(diff: np.ndarray, idx: Sequence[int], tol: float) -> dict:
    return {f"{COEFF_NAMES[i]}[{k}]": float(diff[k, i])
            for k in range(2) for i in idx if abs(diff[k, i]) > tol}


@dataclass(frozen=True, eq=False)
class EdgeMismatch:
    """Mismatch across one interface; ``minus`` is the minus piece in model coordinates."""

    edge: Optional[int]
    a: np.ndarray
    frame: AffineFrame
    minus: QuadraticMap2
    residual: float = 0.0

    @property
    def plus(self) -> QuadraticMap2:
        return self.minus + QuadraticMap2.squared_coordinate(0, self.a)


@dataclass(frozen=True, eq=False)
class VertexMismatch:
    """Four-quadrant mismatch in the vertex model frame.

    ``star`` is the Q1 piece and ``Q[i] = P_{i+1} - star``. ``C`` is the
    largest Frobenius norm of the ``Q`` Hessians, so that
    ``|Q(x)| <= C/2 |x|^2``, ``|DQ(x)| <= C |x|`` and ``|D^2 Q| <= C``.
    """

    vertex: Optional[int]
    frame: AffineFrame
    star: QuadraticMap2
    Q: Tuple[QuadraticMap2, QuadraticMap2, QuadraticMap2, QuadraticMap2]
    C: float

    @property
    def a2(self) -> np.ndarray:
        return self.Q[1].coef[:, _ALPHA].copy()

    @property
    def a4(self) -> np.ndarray:
        return self.Q[3].coef[:, _GAMMA].copy()


def check_c1_edge(Pminus: QuadraticMap2, Pplus: QuadraticMap2, frame: AffineFrame,
                  edge: Optional[int] = None) -> EdgeMismatch:
    """Verify C^0/C^1 gluing across the model interface ``{y1 = 0}`` of ``frame``.

    Raises :class:`C0Violation` if the difference has nonzero gamma/mu/nu, and
    :class:`C1Violation` if (given C^0) beta/delta are nonzero.
    """
    qm, qp = pullback(Pminus, frame), pullback(Pplus, frame)
    diff = qp.coef - qm.coef
    scale = max(float(np.abs(qm.coef).max()), float(np.abs(qp.coef).max()))
    tol = COMPAT_RTOL * scale
    where = "interface" if edge is None else f"edge {edge}"
    bad = _offending(diff, (_GAMMA, _MU, _NU), tol)
    if bad:
        names = ", ".join(f"{k}={v:.3e}" for k, v in bad.items())
        raise C0Violation(f"C0 violation at {where}: {names}", feature=edge, coefficients=bad)
    bad = _offending(diff, (_BETA, _DELTA), tol)
    if bad:
        names = ", ".join(f"{k}={v:.3e}" for k, v in bad.items())
        raise C1Violation(f"C1 violation at {where}: {names}", feature=edge, coefficients=bad)
    rest = np.abs(diff[:, [_BETA, _GAMMA, _DELTA, _MU, _NU]]).max()
    return EdgeMismatch(edge, diff[:, _ALPHA].copy(), frame, qm, float(rest / max(scale, 1e-300)))


def vertex_mismatch(pieces: Sequence[QuadraticMap2], frame: AffineFrame,
                    vertex: Optional[int] = None) -> VertexMismatch:
    """Mismatches ``Q_i = P_i - P_1`` at a four-quadrant vertex (pieces in Q1..Q4 order)."""
    if len(pieces) != 4:
        raise ValueError("a vertex needs exactly four pieces")
    model = [pullback(p, frame) for p in pieces]
    ident = AffineFrame.identity()
    # half-edges: (minus, plus, interface frame), in model coordinates
    for minus, plus, f in ((1, 0, ident), (2, 1, _ROT90), (2, 3, ident), (3, 0, _ROT90)):
        try:
            check_c1_edge(model[minus], model[plus], f)
        except CompatibilityError as exc:
            where = f"vertex {vertex}" if vertex is not None else "vertex"
            raise type(exc)(f"{where}, half-edge Q{minus + 1}|Q{plus + 1}: {exc}",
                            feature=vertex, coefficients=exc.coefficients) from exc
    star = model[0]
    Q = tuple(p - star for p in model)
    scale = max(float(np.abs(p.coef).max()) for p in model)
    for i, q in enumerate(Q):
        bad = _offending(q.coef, (_DELTA, _MU, _NU), COMPAT_RTOL * scale)
        if bad:
            raise VertexJetError(f"mismatch Q{i + 1} does not vanish to first order at the vertex",
                                 feature=vertex, coefficients=bad)
    clean = []
    for q in Q:
        c = q.coef.copy()
        c[:, [_DELTA, _MU, _NU]] = 0.0
        clean.append(QuadraticMap2(c))
    C = max(float(np.linalg.norm(q.hessian)) for q in clean)
    return VertexMismatch(vertex, frame, star, tuple(clean), C)


# -- whole-map validation ----------------------------------------------------------------


@dataclass(frozen=True)
class CellFloor:
    cell: int
    value: float
    point: Tuple[float, float]


def cell_jacobian_floors(partition: Partition, pieces: Sequence[QuadraticMap2]) -> List[CellFloor]:
    out = []
    for c in partition.cells:
        v, p = min_quadratic_on_rect(det_jacobian_poly(pieces[c.id]), c.rect)
        out.append(CellFloor(c.id, float(v), (float(p[0]), float(p[1]))))
    return out


@dataclass
class ValidationResult:
    """Outcome of checking every hypothesis; ``issues`` lists every failed check."""

    edges: dict = field(default_factory=dict)      # edge id -> EdgeMismatch | CompatibilityError
    vertices: dict = field(default_factory=dict)   # vertex id -> VertexMismatch | CompatibilityError
    floors: List[CellFloor] = field(default_factory=list)
    issues: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    @property
    def lam(self) -> float:
        return min(f.value for f in self.floors)


def validate_pieces(partition: Partition, pieces: Sequence[QuadraticMap2]) -> ValidationResult:
    if len(pieces) != len(partition.cells):
        raise ValueError(f"{len(pieces)} pieces for {len(partition.cells)} cells")
    res = ValidationResult()
    for e in partition.edges:
        try:
            res.edges[e.id] = check_c1_edge(pieces[e.minus], pieces[e.plus], e.frame, e.id)
        except CompatibilityError as exc:
            res.edges[e.id] = exc
            res.issues.append(str(exc))
    for v in partition.vertices:
        try:
            res.vertices[v.id] = vertex_mismatch([pieces[c] for c in v.cells], v.frame, v.id)
        except CompatibilityError as exc:
            res.vertices[v.id] = exc
            if not any(isinstance(res.edges.get(e), CompatibilityError) for e in v.edges):
                res.issues.append(str(exc))
    res.floors = cell_jacobian_floors(partition, pieces)
    for f in res.floors:
        if not f.value > 0:
            res.issues.append(f"nonpositive Jacobian floor {f.value:.6g} in cell {f.cell} "
                              f"at {list(f.point)}")
    return res


@dataclass(frozen=True, eq=False)
class PiecewiseQuadMap:
    """A validated C^1 piecewise quadratic map with Jacobian floor ``lam`` and asserted ``m``."""

    partition: Partition
    pieces: Tuple[QuadraticMap2, ...]
    lam: float
    m: float
    m_provenance: str
    floors: Tuple[CellFloor, ...]
    edge_mismatch: Tuple[EdgeMismatch, ...]
    vertex_mismatch: Tuple[VertexMismatch, ...]

    @classmethod
    def build(cls, partition: Partition, pieces: Sequence[QuadraticMap2], m: Optional[float] = None,
              m_provenance: str = "user-asserted") -> "PiecewiseQuadMap":
        """Validate and certify; raises the first violated hypothesis.

        With ``m=None`` the asserted constant is half the smallest sampled
        singular value of Dg (provenance ``sample-estimated``).
        """
        pieces = tuple(pieces)
        res = validate_pieces(partition, pieces)
        for e in partition.edges:
            if isinstance(res.edges[e.id], CompatibilityError):
                raise res.edges[e.id]
        for v in partition.vertices:
            if isinstance(res.vertices[v.id], CompatibilityError):
                raise res.vertices[v.id]
        worst = min(res.floors, key=lambda f: f.value)
        if not worst.value > 0:
            raise JacobianFloorError(
                f"det Dg has nonpositive minimum {worst.value:.6g} in cell {worst.cell} "
                f"at {list(worst.point)}", cell=worst.cell, point=worst.point, value=worst.value)
        if m is None:
            m = 0.5 * local_singular_floor(partition, pieces)
            m_provenance = "sample-estimated"
        if not m > 0:
            raise ValueError(f"bi-Lipschitz constant m must be positive, got {m!r}")
        return cls(partition, pieces, worst.value, float(m), m_provenance, tuple(res.floors),
                   tuple(res.edges[e.id] for e in partition.edges),
                   tuple(res.vertices[v.id] for v in partition.vertices))

    def value(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        cells = self.partition.locate(X)
        out = np.empty(X.shape)
        for c in np.unique(cells):
            sel = cells == c
            out[sel] = self.pieces[c].value(X[sel])
        return out

    __call__ = value

    def jets(self, X, cells=None) -> Jet2:
        X = np.asarray(X, dtype=float)
        cells = self.partition.locate(X) if cells is None else np.broadcast_to(cells, X.shape[:-1])
        out = Jet2.zeros(X.shape[:-1])
        for c in np.unique(cells):
            sel = cells == c
            j = self.pieces[c].jets(X[sel])
            out.value[sel], out.jacobian[sel], out.hessian[sel] = j.value, j.jacobian, j.hessian
        return out


def certify_jacobian_floor(g) -> float:
    """Exact minimum of ``det Dg`` over the closed cells; raises if it is not positive.

    Accepts a :class:`PiecewiseQuadMap` or a ``(partition, pieces)`` pair.
    """
    partition, pieces = (g.partition, g.pieces) if isinstance(g, PiecewiseQuadMap) else g
    floors = cell_jacobian_floors(partition, pieces)
    worst = min(floors, key=lambda f: f.value)
    if not worst.value > 0:
        raise JacobianFloorError(
            f"det Dg has nonpositive minimum {worst.value:.6g} in cell {worst.cell} "
            f"at {list(worst.point)}", cell=worst.cell, point=worst.point, value=worst.value)
    return worst.value


def _cell_sample_points(rect, n: int) -> np.ndarray:
    x0, x1, y0, y1 = rect
    u, v = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
    return np.stack([u.ravel(), v.ravel()], axis=-1)


def local_singular_floor(partition: Partition, pieces: Sequence[QuadraticMap2], n: int = 21) -> float:
    """Smallest singular value of Dg over an ``n x n`` grid (corners included) of every cell."""
    best = np.inf
    for c in partition.cells:
        J = pieces[c.id].jacobian(_cell_sample_points(c.rect, n))
        best = min(best, float(np.linalg.svd(J, compute_uv=False)[:, -1].min()))
    return best


@dataclass(frozen=True)
class BilipschitzEstimate:
    """Sampled (hence non-certified, upper) estimates of the bi-Lipschitz lower constant."""

    chord_min: float
    local_min: float
    n_pairs: int
    certified: bool = False

    @property
    def estimate(self) -> float:
        return min(self.chord_min, self.local_min)


def estimate_bilipschitz(g: PiecewiseQuadMap, n_pairs: int = 10_000, seed: int = 0) -> BilipschitzEstimate:
    P = g.partition
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = P.bounds
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    X = lo + (hi - lo) * rng.random((n_pairs, 2))
    Y = lo + (hi - lo) * rng.random((n_pairs, 2))
    nodes = np.array([[x, y] for y in P.y_breaks for x in P.x_breaks])
    iu, ju = np.triu_indices(len(nodes), k=1)
    X = np.concatenate([X, nodes[iu]])
    Y = np.concatenate([Y, nodes[ju]])
    dist = np.linalg.norm(X - Y, axis=-1)
    keep = dist > 0
    ratio = np.linalg.norm(g.value(X[keep]) - g.value(Y[keep]), axis=-1) / dist[keep]
    return BilipschitzEstimate(float(ratio.min()), local_singular_floor(P, g.pieces), int(keep.sum()))
