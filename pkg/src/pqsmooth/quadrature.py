"""Adaptive tensor Gauss-Legendre quadrature over unions of rectangles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class QuadResult:
    value: np.ndarray        # one entry per integrand component
    error_estimate: float    # sum of |refined - coarse| over accepted leaves
    levels: int              # deepest subdivision level used
    n_leaves: int
    n_evals: int
    cap_hit: bool


def _halves(R: np.ndarray, axis: int):
    x0, x1, y0, y1 = R.T
    if axis == 0:
        xm = 0.5 * (x0 + x1)
        return np.stack([x0, xm, y0, y1], axis=1), np.stack([xm, x1, y0, y1], axis=1)
    ym = 0.5 * (y0 + y1)
    return np.stack([x0, x1, y0, ym], axis=1), np.stack([x0, x1, ym, y1], axis=1)


class GaussRule2D:
    def __init__(self, order: int = 8):
        t, w = np.polynomial.legendre.leggauss(order)
        self.order = order
        self.t = 0.5 * (t + 1.0)
        self.w = 0.5 * w

    def __call__(self, f: Callable, R: np.ndarray) -> np.ndarray:
        """Per-rectangle integrals, shape ``(len(R), k)``."""
        n = self.order
        x0, x1, y0, y1 = (R[:, i, None, None] for i in range(4))
        px = x0 + (x1 - x0) * self.t[None, :, None]
        py = y0 + (y1 - y0) * self.t[None, None, :]
        pts = np.stack(np.broadcast_arrays(px, py), axis=-1).reshape(-1, 2)
        vals = np.asarray(f(pts), dtype=float)
        vals = vals.reshape(len(R), n * n, -1)
        w = (self.w[:, None] * self.w[None, :]).reshape(-1)
        area = ((R[:, 1] - R[:, 0]) * (R[:, 3] - R[:, 2]))[:, None]
        return area * np.einsum("q,mqk->mk", w, vals)


def integrate_rects(f: Callable, rects, rtol: float = 1e-6, max_level: int = 12,
                    order: int = 8, atol: float = 0.0) -> QuadResult:
    """Integrate a (possibly vector-valued) ``f`` over disjoint rectangles.

    Each rectangle is compared against its two bisections (along x and along
    y). It is accepted once both differ from the parent by at most its area
    share of ``max(rtol * |I|, atol)``, ``|I|`` being the running total summed
    over components; otherwise it is split along the direction that changed
    more, so kinks parallel to an axis cost O(levels) rectangles. Refinement
    also stops once the summed estimate over all leaves meets the tolerance.
    """
    rule = GaussRule2D(order)
    R = np.asarray(rects, dtype=float).reshape(-1, 4)
    R = R[(R[:, 1] > R[:, 0]) & (R[:, 3] > R[:, 2])]
    if len(R) == 0:
        return QuadResult(np.zeros(1), 0.0, 0, 0, 0, False)
    total_area = float(np.sum((R[:, 1] - R[:, 0]) * (R[:, 3] - R[:, 2])))
    Ip = rule(f, R)
    n_evals = len(R) * order * order
    accepted = np.zeros(Ip.shape[1])
    err = 0.0
    level = 0
    n_leaves = 0
    cap_hit = False
    while len(R):
        m = len(R)
        kids = [_halves(R, 0), _halves(R, 1)]
        C = np.concatenate([kids[0][0], kids[0][1], kids[1][0], kids[1][1]])
        Ic = rule(f, C)
        n_evals += len(C) * order * order
        Ix = Ic[:m] + Ic[m:2 * m]
        Iy = Ic[2 * m:3 * m] + Ic[3 * m:]
        dx = np.abs(Ix - Ip).sum(axis=1)
        dy = np.abs(Iy - Ip).sum(axis=1)
        level += 1
        best = 0.5 * (Ix + Iy)
        current = np.abs(accepted + best.sum(axis=0)).sum()
        area = (R[:, 1] - R[:, 0]) * (R[:, 3] - R[:, 2])
        tol = max(rtol * current, atol) * area / total_area
        diff = np.maximum(dx, dy)
        ok = diff <= tol
        # isolated kinks converge in total long before their area share does
        if err + diff.sum() <= max(rtol * current, atol):
            ok[:] = True
        if level >= max_level:
            cap_hit = bool(np.any(~ok))
            ok[:] = True
        accepted += best[ok].sum(axis=0)
        err += float(diff[ok].sum())
        n_leaves += int(ok.sum())
        along_x = dx >= dy
        sx = np.flatnonzero(~ok & along_x)
        sy = np.flatnonzero(~ok & ~along_x)
        R = np.concatenate([kids[0][0][sx], kids[0][1][sx], kids[1][0][sy], kids[1][1][sy]])
        Ip = np.concatenate([Ic[sx], Ic[m + sx], Ic[2 * m + sy], Ic[3 * m + sy]])
    return QuadResult(accepted, err, level, n_leaves, n_evals, cap_hit)


def polar_integrand(f: Callable, center=(0.0, 0.0)) -> Callable:
    """Wrap ``f(x)`` as an integrand over ``(r, theta)`` rectangles (includes the factor r)."""
    c = np.asarray(center, dtype=float)

    def g(rt):
        r, th = rt[:, 0], rt[:, 1]
        x = c + np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        v = np.asarray(f(x), dtype=float)
        return v * (r[:, None] if v.ndim == 2 else r)

    return g
