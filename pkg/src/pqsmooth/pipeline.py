"""Global smoothing: per-feature eps selection under an error budget, then verification."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .compat import PiecewiseQuadMap
from .cutoff import TransitionProfile
from .errors import BudgetUnreachable, SmoothingFailure
from .partition import plan_neighborhoods
from .smooth import SmoothedMap
from .verify import VerificationReport, fit_rate, measure_feature, verify_smoothed

MAX_REFINE = 20
MAX_GLOBAL_HALVINGS = 5
THREADS_ENV = "PQSMOOTH_THREADS"


def thread_count(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None


def _ordered_map(fn: Callable, items: Sequence, threads: int) -> list:
    """``[fn(x) for x in items]``, optionally threaded; output order never depends on scheduling."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class FeatureBudget:
    kind: str
    id: int
    w21_budget: float
    grad_budget: float
    eps: float
    w21: float
    sup_grad: float
    trials: List[Tuple[float, float, float]]   # (eps, w21, sup_grad) per dyadic trial
    trial_slope: Optional[float] = None         # log-log slope of w21 over the trials

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.id}"


@dataclass(frozen=True)
class EpsilonBudget:
    delta: float
    features: List[FeatureBudget]
    global_halvings: int = 0
    final_w21: List[float] = field(default_factory=list)
    final_sup_grad: List[float] = field(default_factory=list)

    @property
    def total_w21(self) -> float:
        return float(sum(self.final_w21 or [f.w21 for f in self.features]))

    @property
    def total_sup_grad(self) -> float:
        return float(sum(self.final_sup_grad or [f.sup_grad for f in self.features]))

    @property
    def met(self) -> bool:
        return self.total_w21 <= self.delta and self.total_sup_grad <= self.delta

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = [dict(asdict(f), label=f.label) for f in self.features]
        d.update(total_w21=self.total_w21, total_sup_grad=self.total_sup_grad, met=self.met)
        return d


def _single(S0: SmoothedMap, kind: str, fid: int, eps: float) -> SmoothedMap:
    ee, ev = np.zeros(len(S0.eps_edge)), np.zeros(len(S0.eps_vertex))
    (ee if kind == "edge" else ev)[fid] = eps
    return S0.with_eps(ee, ev)


def _choose_eps(S0: SmoothedMap, kind: str, fid: int, start: float, budget: float,
                max_refine: int) -> FeatureBudget:
    """Dyadic trials ``start * 2**-j`` until both per-feature errors fit the budget."""
    trials = []
    for j in range(1, max_refine + 1):
        eps = start * 2.0**-j
        f = measure_feature(_single(S0, kind, fid, eps), kind, fid)
        trials.append((eps, f.w21, f.sup_grad_sampled))
        if f.w21 <= budget and f.sup_grad_sampled <= budget:
            slope = None
            if len(trials) >= 4 and all(t[1] > 0 for t in trials):
                slope = fit_rate([t[0] for t in trials], [t[1] for t in trials]).slope
            return FeatureBudget(kind, fid, budget, budget, eps, f.w21, f.sup_grad_sampled, trials, slope)
    raise BudgetUnreachable(
        f"budget unreachable: {kind}:{fid} still exceeds its budget {budget:.3e} at eps = {trials[-1][0]:.3e} "
        f"after {max_refine} dyadic refinements (w21 = {trials[-1][1]:.3e}, "
        f"sup grad = {trials[-1][2]:.3e})",
        diagnostics={"feature": f"{kind}:{fid}", "budget": budget, "trials": trials})


def global_smooth(g: PiecewiseQuadMap, delta: float,
                  profile: Union[str, TransitionProfile] = "flat-exponential", shrink: float = 0.5,
                  max_refine: int = MAX_REFINE, max_global: int = MAX_GLOBAL_HALVINGS,
                  threads: Optional[int] = None, seed: int = 0,
                  n_pairs: int = 100_000) -> Tuple[SmoothedMap, EpsilonBudget, VerificationReport]:
    """Smooth every interior vertex, then every interior edge, within ``delta``.

    Half the budget goes to vertices and half to edges, split evenly within
    each stage, for both the W^{2,1} error and the sup of the gradient error.
    The result is then verified (Jacobian floor at least lam/2 and an
    injectivity search); on failure every eps is halved, at most
    ``max_global`` times.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    threads = thread_count(threads)
    plan = plan_neighborhoods(g.partition, shrink)
    S0 = SmoothedMap.create(g, profile=profile, plan=plan)
    P = g.partition

    def stage(kind, ids, widths):
        if not ids:
            return []
        budget = 0.5 * delta / len(ids)

        run = lambda fid: _choose_eps(S0, kind, fid, float(widths[fid]), budget, max_refine)
        return _ordered_map(run, ids, threads)

    vertex_budgets = stage("vertex", [v.id for v in P.vertices], plan.vertex_radius)
    edge_budgets = stage("edge", [e.id for e in P.edges], plan.edge_halfwidth)
    eps_v = np.array([b.eps for b in vertex_budgets]) if vertex_budgets else np.zeros(0)
    eps_e = np.array([b.eps for b in edge_budgets]) if edge_budgets else np.zeros(0)

    history = []
    for k in range(max_global + 1):
        S = S0.with_eps(eps_e * 2.0**-k, eps_v * 2.0**-k)
        report = verify_smoothed(S, n_pairs=n_pairs, seed=seed)
        history.append({"halvings": k, "jacobian_floor": report.jacobian_floor,
                        "injective": report.injective_ok})
        if report.jacobian_ok and report.injective_ok:
            budget = EpsilonBudget(float(delta), vertex_budgets + edge_budgets, k,
                                   [f.w21 for f in report.features],
                                   [f.sup_grad_sampled for f in report.features])
            return S, budget, report
    raise SmoothingFailure(
        f"verification still fails after {max_global} global halvings of eps "
        f"(Jacobian floor {report.jacobian_floor:.6g} vs lam/2 = {0.5 * report.lam:.6g}, "
        f"injectivity search {'passed' if report.injective_ok else 'found a collision'})",
        diagnostics={"history": history})
