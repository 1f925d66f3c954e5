"""Error norms, Jacobian floors, injectivity checks and rate fits for smoothed maps.

All per-feature work happens in the feature's model frame. Frames are
orthogonal, so Frobenius norms of pushed-forward derivatives equal their
model-frame counterparts and model-frame areas equal physical areas.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .compat import PiecewiseQuadMap, local_singular_floor
from .errors import HypothesisViolation
from .optimize import batched_nelder_mead
from .partition import plan_neighborhoods
from .quadrature import QuadResult, integrate_rects, polar_integrand
from .smooth import SmoothedMap

QUAD_RTOL = 1e-6
QUAD_MAX_LEVEL = 12
SUP_GRID = 100            # per axis, i.e. 10^4 samples per feature
SEPARATION_SLACK = 1e-12
MIN_PAIR_DISTANCE = 1e-9
COLLISION_STARTS = 100
COLLISION_GRID_CAP = 48   # base points per axis and region
_HALF_PI = 0.5 * np.pi


# -- per-feature geometry ----------------------------------------------------------------


def _edge_rects(S: SmoothedMap, e: int) -> List[Tuple[float, float, float, float]]:
    eps = S.eps_edge[e]
    s0, s1 = S.plan.edge_sub[e]
    lo_taper, hi_taper = S.plan.edge_taper[e]
    ys = [s0] + ([s0 + eps] if lo_taper else []) + ([s1 - eps] if hi_taper else []) + [s1]
    return [(a, b, c, d) for a, b in ((-eps, 0.0), (0.0, eps)) for c, d in zip(ys[:-1], ys[1:])]


def _vertex_rects(S: SmoothedMap, v: int) -> List[Tuple[float, float, float, float]]:
    eps = S.eps_vertex[v]
    return [(r0, r1, k * _HALF_PI, (k + 1) * _HALF_PI)
            for r0, r1 in ((0.0, 0.5 * eps), (0.5 * eps, eps)) for k in range(4)]


def _delta_norms(jet) -> np.ndarray:
    return np.stack([np.linalg.norm(jet.value, axis=-1),
                     np.linalg.norm(jet.jacobian, axis=(-2, -1)),
                     np.sqrt(np.sum(jet.hessian**2, axis=(-3, -2, -1)))], axis=-1)


def _model_delta(S: SmoothedMap, kind: str, fid: int) -> Callable:
    if kind == "edge":
        return lambda y: S.edge_delta(fid, y, y[..., 0] >= 0)
    return lambda y: S.vertex_delta(fid, y)


def _sample_grid(S: SmoothedMap, kind: str, fid: int, n: int = SUP_GRID):
    """Model-frame sample grid of a blend region and its covering radius."""
    if kind == "edge":
        eps = S.eps_edge[fid]
        s0, s1 = S.plan.edge_sub[fid]
        u, w = np.linspace(-eps, eps, n), np.linspace(s0, s1, n)
        Y = np.stack(np.meshgrid(u, w, indexing="ij"), axis=-1).reshape(-1, 2)
        spacing = 0.5 * np.hypot(u[1] - u[0], w[1] - w[0])
        return Y, spacing
    eps = S.eps_vertex[fid]
    r = np.linspace(0.0, eps, n)
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    R, T = np.meshgrid(r, th, indexing="ij")
    Y = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    spacing = 0.5 * np.hypot(r[1] - r[0], eps * (th[1] - th[0]))
    return Y, spacing


def _to_physical(S: SmoothedMap, kind: str, fid: int, Y: np.ndarray) -> np.ndarray:
    P = S.partition
    if kind == "edge":
        return P.edges[fid].frame(Y)
    return Y + np.array(P.vertices[fid].point)


# -- per-feature errors ------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureError:
    kind: str
    id: int
    eps: float
    w21_parts: Tuple[float, float, float]
    sup_value_bound: float
    sup_value_sampled: float
    sup_grad_sampled: float
    quad_levels: int
    quad_error: float
    quad_cap_hit: bool

    @property
    def w21(self) -> float:
        return float(sum(self.w21_parts))

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.id}"


def feature_w21(S: SmoothedMap, kind: str, fid: int, rtol: float = QUAD_RTOL,
                max_level: int = QUAD_MAX_LEVEL) -> QuadResult:
    """Integral of (|Delta|, |D Delta|_F, |D^2 Delta|_F) over one blend region."""
    delta = _model_delta(S, kind, fid)
    f = lambda y: _delta_norms(delta(y))
    if kind == "edge":
        return integrate_rects(f, _edge_rects(S, fid), rtol, max_level)
    return integrate_rects(polar_integrand(f), _vertex_rects(S, fid), rtol, max_level)


def sup_value_bound(S: SmoothedMap, kind: str, fid: int) -> float:
    """Closed-form bound on sup |g_eps - g| over one blend region."""
    if kind == "edge":
        return float(S.eps_edge[fid] ** 2 * np.linalg.norm(S.base.edge_mismatch[fid].a))
    return float(0.5 * S.base.vertex_mismatch[fid].C * S.eps_vertex[fid] ** 2)


def measure_feature(S: SmoothedMap, kind: str, fid: int) -> FeatureError:
    eps = float(S.eps_edge[fid] if kind == "edge" else S.eps_vertex[fid])
    if eps == 0:
        return FeatureError(kind, fid, 0.0, (0.0, 0.0, 0.0), 0.0, 0.0, 0.0, 0, 0.0, False)
    q = feature_w21(S, kind, fid)
    Y, _ = _sample_grid(S, kind, fid)
    norms = _delta_norms(_model_delta(S, kind, fid)(Y))
    return FeatureError(kind, fid, eps, tuple(float(v) for v in q.value), sup_value_bound(S, kind, fid),
                        float(norms[:, 0].max()), float(norms[:, 1].max()), q.levels,
                        q.error_estimate, q.cap_hit)


def measure_all(S: SmoothedMap) -> List[FeatureError]:
    return [measure_feature(S, kind, fid) for kind, fid, _ in S.active_features()]


@dataclass(frozen=True)
class W21Result:
    total: float
    parts: Tuple[float, float, float]
    features: List[FeatureError]
    quad_levels: int
    quad_error: float
    cap_hit: bool


def w21_error(S: SmoothedMap, features: Optional[List[FeatureError]] = None) -> W21Result:
    """``||g_eps - g||_{W^{2,1}}`` split into value, Jacobian and Hessian parts."""
    feats = measure_all(S) if features is None else features
    parts = tuple(float(sum(f.w21_parts[k] for f in feats)) for k in range(3))
    return W21Result(float(sum(parts)), parts, feats,
                     max((f.quad_levels for f in feats), default=0),
                     float(sum(f.quad_error for f in feats)), any(f.quad_cap_hit for f in feats))


@dataclass(frozen=True)
class SupErrors:
    eps_hat: float           # certified bound on sup |g_eps - g|
    value_sampled: float
    grad_sampled: float
    features: List[FeatureError]


def sup_errors(S: SmoothedMap, features: Optional[List[FeatureError]] = None) -> SupErrors:
    """Supports are disjoint, so global sups are maxima over features."""
    feats = measure_all(S) if features is None else features
    mx = lambda attr: float(max((getattr(f, attr) for f in feats), default=0.0))
    return SupErrors(mx("sup_value_bound"), mx("sup_value_sampled"), mx("sup_grad_sampled"), feats)


# -- Jacobian floor ----------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureFloor:
    kind: str
    id: int
    sampled_min: float
    lipschitz: float
    spacing: float

    @property
    def floor(self) -> float:
        return self.sampled_min - self.lipschitz * self.spacing


@dataclass(frozen=True)
class JacobianFloorResult:
    floor: float
    lam: float
    bulk_floor: float
    features: List[FeatureFloor]

    @property
    def ok(self) -> bool:
        return self.floor >= 0.5 * self.lam


def det_and_gradient(jet):
    """``det J`` and its gradient ``d_j det = sum adj(J)_{ik} H_{kij}``."""
    J, H = jet.jacobian, jet.hessian
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    adj = np.stack([np.stack([J[..., 1, 1], -J[..., 0, 1]], -1),
                    np.stack([-J[..., 1, 0], J[..., 0, 0]], -1)], -2)
    grad = np.einsum("...ik,...kij->...j", adj, H)
    return det, grad


def feature_jacobian_floor(S: SmoothedMap, kind: str, fid: int, n: int = SUP_GRID) -> FeatureFloor:
    Y, spacing = _sample_grid(S, kind, fid, n)
    X = np.clip(_to_physical(S, kind, fid, Y), *_clip_bounds(S))
    det, grad = det_and_gradient(S.jet(X))
    return FeatureFloor(kind, fid, float(det.min()), float(np.linalg.norm(grad, axis=-1).max()), spacing)


def _clip_bounds(S: SmoothedMap):
    x0, x1, y0, y1 = S.partition.bounds
    return np.array([x0, y0]), np.array([x1, y1])


def jacobian_floor(S: SmoothedMap, n: int = SUP_GRID) -> JacobianFloorResult:
    """Exact floor on bulk cells; sampled floor minus a Lipschitz margin on blend regions."""
    lam = S.base.lam
    feats = [feature_jacobian_floor(S, kind, fid, n) for kind, fid, _ in S.active_features()]
    floor = min([lam] + [f.floor for f in feats])
    return JacobianFloorResult(float(floor), float(lam), float(lam), feats)


# -- injectivity -------------------------------------------------------------------------


def collision_radius(eps_hat: float, m: float) -> float:
    """Largest separation of two points a perturbation of sup-size ``eps_hat`` can merge."""
    if not m > 0:
        raise ValueError(f"m must be positive, got {m!r}")
    return 2.0 * eps_hat / m


@dataclass(frozen=True)
class SeparationCheck:
    n_pairs: int
    min_slack: float
    worst_pair: Tuple[Tuple[float, float], Tuple[float, float]]


def separation_check(h: Callable, bounds, m: float, eps_hat: float, n_pairs: int = 100_000,
                     seed: int = 0, local_scale: Optional[float] = None) -> SeparationCheck:
    """Assert ``|h(x) - h(y)| >= m|x - y| - 2 eps_hat`` on sampled pairs.

    Half the pairs are uniform over the domain, half are close pairs at
    distances up to ``local_scale``.
    """
    x0, x1, y0, y1 = bounds
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    rng = np.random.default_rng(seed)
    half = n_pairs // 2
    X = lo + (hi - lo) * rng.random((n_pairs, 2))
    Y = lo + (hi - lo) * rng.random((n_pairs, 2))
    scale = local_scale if local_scale is not None else 0.05 * float(np.min(hi - lo))
    step = rng.normal(size=(n_pairs - half, 2))
    step *= (scale * rng.random(n_pairs - half) / np.linalg.norm(step, axis=1))[:, None]
    Y[half:] = np.clip(X[half:] + step, lo, hi)
    gap = np.linalg.norm(h(X) - h(Y), axis=-1)
    slack = gap - (m * np.linalg.norm(X - Y, axis=-1) - 2.0 * eps_hat)
    k = int(np.argmin(slack))
    worst = (tuple(map(float, X[k])), tuple(map(float, Y[k])))
    if slack[k] < -SEPARATION_SLACK:
        raise HypothesisViolation(
            f"separation inequality fails by {-slack[k]:.3e} at x={list(worst[0])}, y={list(worst[1])}: "
            f"the asserted m={m} is not a valid lower bi-Lipschitz constant", witness=worst)
    return SeparationCheck(n_pairs, float(slack[k]), worst)


@dataclass(frozen=True)
class CollisionSearch:
    passed: bool
    min_ratio: float
    threshold: float
    witness: Optional[Tuple[Tuple[float, float], Tuple[float, float]]]
    witness_gap: Optional[float]
    n_pairs: int
    grid_spacing: float
    coarsened: bool


def _offset_lattice(rho: float) -> np.ndarray:
    k = np.arange(-4, 5)
    I, J = np.meshgrid(k, k, indexing="ij")
    L = np.stack([I.ravel(), J.ravel()], axis=-1).astype(float)
    r = np.linalg.norm(L, axis=1)
    return L[(r > 0) & (r <= 4.0)] * (rho / 4.0)


def collision_search(h: Callable, bounds, regions: Sequence, rho: float, m: float,
                     n_starts: int = COLLISION_STARTS, grid_cap: int = COLLISION_GRID_CAP) -> CollisionSearch:
    """Look for ``x != y`` with ``|x - y| <= rho`` and ``|h(x) - h(y)| < (m/2)|x - y|``.

    Base points cover each region (expanded by ``rho``) at spacing ``rho/4``,
    capped at ``grid_cap`` per axis (then flagged ``coarsened``); partners sit
    on the ``rho/4`` lattice within radius ``rho``. The lowest-ratio pairs seed
    Nelder-Mead on the ratio ``|h(x + d) - h(x)| / |d|``.
    """
    threshold = 0.5 * m
    if rho <= 0 or not len(regions):
        return CollisionSearch(True, np.inf, threshold, None, None, 0, 0.0, False)
    x0, x1, y0, y1 = bounds
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    offsets = _offset_lattice(rho)
    coarsened = False
    spacing = 0.0
    cand_x, cand_d, cand_r = [], [], []
    for (a0, a1, b0, b1) in regions:
        a0, a1 = max(a0 - rho, x0), min(a1 + rho, x1)
        b0, b1 = max(b0 - rho, y0), min(b1 + rho, y1)
        nx = int(np.ceil((a1 - a0) / (0.25 * rho))) + 1
        ny = int(np.ceil((b1 - b0) / (0.25 * rho))) + 1
        if max(nx, ny) > grid_cap:
            coarsened = True
        nx, ny = min(nx, grid_cap), min(ny, grid_cap)
        spacing = max(spacing, (a1 - a0) / max(nx - 1, 1), (b1 - b0) / max(ny - 1, 1))
        G = np.stack(np.meshgrid(np.linspace(a0, a1, nx), np.linspace(b0, b1, ny), indexing="ij"),
                     axis=-1).reshape(-1, 2)
        hx = h(G)
        for d in offsets:
            Y = G + d
            ok = np.all((Y >= lo) & (Y <= hi), axis=1)
            if not np.any(ok):
                continue
            r = np.linalg.norm(h(Y[ok]) - hx[ok], axis=-1) / np.linalg.norm(d)
            cand_x.append(G[ok])
            cand_d.append(np.broadcast_to(d, (int(ok.sum()), 2)))
            cand_r.append(r)
    if not cand_r:
        return CollisionSearch(True, np.inf, threshold, None, None, 0, spacing, coarsened)
    CX, CD, CR = np.concatenate(cand_x), np.concatenate(cand_d), np.concatenate(cand_r)
    n_pairs = len(CR)
    order = np.argsort(CR, kind="stable")[:n_starts]

    def ratio(Z):
        x, d = Z[:, :2], Z[:, 2:]
        nd = np.hypot(d[:, 0], d[:, 1])
        y = x + d
        ok = ((nd >= MIN_PAIR_DISTANCE) & (nd <= rho) & np.all((x >= lo) & (x <= hi), axis=1)
              & np.all((y >= lo) & (y <= hi), axis=1))
        out = np.full(len(Z), 1e300)
        if np.any(ok):
            hv = h(np.concatenate([x[ok], y[ok]]))
            k = int(ok.sum())
            out[ok] = np.linalg.norm(hv[k:] - hv[:k], axis=-1) / nd[ok]
        return out

    starts = np.concatenate([CX[order], CD[order]], axis=1)
    res = batched_nelder_mead(ratio, starts, 0.125 * rho, maxiter=200,
                              xatol=1e-12 * max(1.0, rho), fatol=1e-14)
    k = int(np.argmin(res.fun))
    best = (float(CR[order[0]]), CX[order[0]], CD[order[0]])
    if res.fun[k] < best[0]:
        best = (float(res.fun[k]), res.x[k, :2].copy(), res.x[k, 2:].copy())
    r, x, d = best
    y = x + d
    gap = float(np.linalg.norm(np.diff(h(np.stack([x, y])), axis=0)))
    passed = r >= threshold
    witness = None if passed else (tuple(map(float, x)), tuple(map(float, y)))
    return CollisionSearch(bool(passed), r, threshold, witness, None if passed else gap, n_pairs,
                           float(spacing), coarsened)


@dataclass(frozen=True)
class InjectivityCertificate:
    m: float
    eps_hat: float
    collision_radius: float
    separation: SeparationCheck
    search: CollisionSearch

    @property
    def passed(self) -> bool:
        return self.search.passed


def certify_injectivity(h: Callable, bounds, regions: Sequence, m: float, eps_hat: float,
                        n_pairs: int = 100_000, seed: int = 0) -> InjectivityCertificate:
    """Separation assertion plus collision search for a perturbation ``h`` of a map with constant ``m``.

    Outside ``regions`` the perturbation must vanish, so every collision has a
    point in some region and a partner within the collision radius.
    """
    rho = collision_radius(eps_hat, m)
    sep = separation_check(h, bounds, m, eps_hat, n_pairs, seed, local_scale=max(rho, 1e-3))
    search = collision_search(h, bounds, regions, rho, m)
    return InjectivityCertificate(m, eps_hat, rho, sep, search)


def injectivity_certificate(S: SmoothedMap, m: Optional[float] = None, eps_hat: Optional[float] = None,
                            n_pairs: int = 100_000, seed: int = 0) -> InjectivityCertificate:
    m = S.base.m if m is None else m
    if eps_hat is None:
        eps_hat = max((sup_value_bound(S, k, i) for k, i, _ in S.active_features()), default=0.0)
    regions = [S.support_rect(k, i) for k, i, _ in S.active_features()]
    return certify_injectivity(S.value, S.partition.bounds, regions, m, eps_hat, n_pairs, seed)


# -- full report -------------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationReport:
    w21_error: float
    w21_parts: Tuple[float, float, float]
    sup_grad_error: float
    sup_value_error: float
    sup_value_sampled: float
    jacobian_floor: float
    lam: float
    jacobian_ok: bool
    m: float
    m_provenance: str
    m_estimate: float
    collision_radius: float
    separation: SeparationCheck
    collision_search: CollisionSearch
    features: List[FeatureError]
    feature_floors: List[FeatureFloor]
    quad_levels: int
    quad_error: float
    quad_cap_hit: bool
    regularity: Dict[str, object] = field(default_factory=dict)

    @property
    def injective_ok(self) -> bool:
        return self.collision_search.passed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = [dict(asdict(f), label=f.label, w21=f.w21) for f in self.features]
        d["feature_floors"] = [dict(asdict(f), floor=f.floor) for f in self.feature_floors]
        d["m_estimate_label"] = "non-certified"
        return d


def verify_smoothed(S: SmoothedMap, m: Optional[float] = None, n_pairs: int = 100_000,
                    seed: int = 0) -> VerificationReport:
    feats = measure_all(S)
    w = w21_error(S, feats)
    sups = sup_errors(S, feats)
    jf = jacobian_floor(S)
    cert = injectivity_certificate(S, m, sups.eps_hat, n_pairs, seed)
    m_est = 0.5 * local_singular_floor(S.partition, S.base.pieces)
    return VerificationReport(w.total, w.parts, sups.grad_sampled, sups.eps_hat, sups.value_sampled,
                              jf.floor, jf.lam, jf.ok, cert.m, S.base.m_provenance, m_est,
                              cert.collision_radius, cert.separation, cert.search, feats, jf.features,
                              w.quad_levels, w.quad_error, w.cap_hit, S.regularity())


# -- rates -------------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    eps: Tuple[float, ...]
    errors: Tuple[float, ...]
    slope: float
    intercept: float
    residual: float

    def __post_init__(self):
        if len(self.eps) < 4:
            raise ValueError("a rate fit needs at least 4 samples")


def fit_rate(eps: Sequence[float], errors: Sequence[float]) -> Optional[RateFit]:
    """Least-squares line through ``(log eps, log error)``; None if the errors are all zero."""
    e, r = np.asarray(eps, dtype=float), np.asarray(errors, dtype=float)
    if len(e) < 4:
        raise ValueError("a rate fit needs at least 4 samples")
    if np.all(r == 0):
        return None
    if np.any(r <= 0):
        raise ValueError("errors must be all positive or all zero for a log-log fit")
    (slope, intercept), res, *_ = np.polyfit(np.log(e), np.log(r), 1, full=True)
    rms = float(np.sqrt(res[0] / len(e))) if len(res) else 0.0
    return RateFit(tuple(map(float, e)), tuple(map(float, r)), float(slope), float(intercept), rms)


CONVERGENCE_METRICS = ("w21_total", "w21_hess", "sup_grad", "sup_val")


@dataclass(frozen=True)
class ConvergenceStudy:
    feature: Tuple[str, int]
    rows: List[Dict[str, float]]
    fits: Dict[str, Optional[RateFit]]
    identically_zero: bool


def convergence_study(g: PiecewiseQuadMap, feature: Tuple[str, int], eps_list: Sequence[float],
                      profile="flat-exponential", shrink: float = 0.5) -> ConvergenceStudy:
    """Errors of one feature smoothed alone at each eps, with log-log fits.

    ``sup_val`` is the sampled sup of ``|g_eps - g|``.
    """
    kind, fid = feature
    eps = [float(x) for x in eps_list]
    if len(eps) < 4:
        raise ValueError("need at least 4 eps values")
    ratios = np.array(eps[:-1]) / np.array(eps[1:])
    if not np.allclose(ratios, 2.0, rtol=1e-12, atol=0.0):
        raise ValueError(f"eps list must be dyadic (each value half the previous): {eps}")
    plan = plan_neighborhoods(g.partition, shrink)
    S0 = SmoothedMap.create(g, profile=profile, plan=plan)
    width = plan.edge_halfwidth[fid] if kind == "edge" else plan.vertex_radius[fid]
    if kind not in ("edge", "vertex"):
        raise ValueError(f"feature kind must be 'edge' or 'vertex', got {kind!r}")
    if not max(eps) < width:
        raise ValueError(f"eps values must stay below the planned width {width:.6g} of {kind}:{fid}")
    rows = []
    for e in eps:
        ee, ev = np.zeros(len(S0.eps_edge)), np.zeros(len(S0.eps_vertex))
        (ee if kind == "edge" else ev)[fid] = e
        f = measure_feature(S0.with_eps(ee, ev), kind, fid)
        rows.append({"eps": e, "w21_total": f.w21, "w21_hess": f.w21_parts[2],
                     "sup_grad": f.sup_grad_sampled, "sup_val": f.sup_value_sampled})
    fits = {k: fit_rate(eps, [r[k] for r in rows]) for k in CONVERGENCE_METRICS}
    zero = all(v is None for v in fits.values())
    return ConvergenceStudy((kind, fid), rows, fits, zero)
