"""Nelder-Mead run on many starting simplices at once.

scipy's implementation handles one start per call; the collision search needs
a hundred starts on an objective whose cost is dominated by per-call
overhead, so every step here evaluates all simplices in one vectorised call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# standard coefficients: reflection, expansion, contraction, shrink
_RHO, _CHI, _GAMMA, _SIGMA = 1.0, 2.0, 0.5, 0.5


@dataclass(frozen=True)
class BatchResult:
    x: np.ndarray       # (K, n) best vertex of each simplex
    fun: np.ndarray     # (K,)
    nit: int
    nfev: int


def batched_nelder_mead(f: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, step,
                        maxiter: int = 200, xatol: float = 1e-12, fatol: float = 1e-14) -> BatchResult:
    """Minimise ``f`` (rows in, values out) from each row of ``x0``.

    The initial simplex of start k is ``x0[k]`` plus ``step[k]`` along each
    coordinate axis. Simplices stop moving once both their vertex spread and
    their value spread fall below the tolerances.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    K, n = x0.shape
    step = np.broadcast_to(np.asarray(step, dtype=float), (K,))
    S = np.repeat(x0[:, None, :], n + 1, axis=1)
    S[:, 1:, :] += step[:, None, None] * np.eye(n)[None]
    F = f(S.reshape(-1, n)).reshape(K, n + 1)
    nfev = K * (n + 1)
    idx = np.arange(K)
    it = 0
    for it in range(1, maxiter + 1):
        order = np.argsort(F, axis=1, kind="stable")
        S = np.take_along_axis(S, order[:, :, None], axis=1)
        F = np.take_along_axis(F, order, axis=1)
        spread_x = np.max(np.abs(S[:, 1:] - S[:, :1]), axis=(1, 2))
        spread_f = np.max(np.abs(F[:, 1:] - F[:, :1]), axis=1)
        live = ~((spread_x <= xatol) & (spread_f <= fatol))
        if not np.any(live):
            break
        L = idx[live]
        c = S[L, :-1].mean(axis=1)
        worst, fw = S[L, -1], F[L, -1]
        xr = c + _RHO * (c - worst)
        xe = c + _CHI * (xr - c)
        fr, fe = np.split(f(np.concatenate([xr, xe])), 2)
        nfev += 2 * len(L)
        best_f, second_worst = F[L, 0], F[L, -2]

        new_x, new_f = worst.copy(), fw.copy()
        expand = (fr < best_f) & (fe < fr)
        reflect = ((fr < best_f) & ~expand) | ((fr >= best_f) & (fr < second_worst))
        new_x[expand], new_f[expand] = xe[expand], fe[expand]
        new_x[reflect], new_f[reflect] = xr[reflect], fr[reflect]

        contract = ~(expand | reflect)
        shrink = np.zeros(len(L), dtype=bool)
        if np.any(contract):
            outside = fr < fw
            xc = np.where(outside[:, None], c + _GAMMA * (xr - c), c + _GAMMA * (worst - c))
            C = np.flatnonzero(contract)
            fc = f(xc[C])
            nfev += len(C)
            ok = fc <= np.where(outside[C], fr[C], fw[C])
            new_x[C[ok]], new_f[C[ok]] = xc[C[ok]], fc[ok]
            shrink[C[~ok]] = True

        S[L, -1], F[L, -1] = new_x, new_f
        if np.any(shrink):
            R = L[shrink]
            S[R, 1:] = S[R, :1] + _SIGMA * (S[R, 1:] - S[R, :1])
            F[R, 1:] = f(S[R, 1:].reshape(-1, n)).reshape(len(R), n)
            nfev += len(R) * n
    k = np.argmin(F, axis=1)
    return BatchResult(S[idx, k], F[idx, k], it, nfev)
