"""Transition profiles and radial bumps with closed-form derivatives up to order two.

``eta`` rises from 0 on ``t <= -1`` to 1 on ``t >= 1``; ``chi(x) = 1 - eta(4|x| - 3)``
is 1 on the closed half ball and 0 outside the unit ball. Scaled versions
``eta(t/eps)`` and ``chi(x/eps)`` are what the blends use; outside the
transition zones every value returned is an exact plateau constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

PROFILE_KINDS = ("flat-exponential", "quintic")
SUP_SAMPLES = 100_000


def _flat_exp_jet(t: np.ndarray):
    # eta = s(u) / (s(u) + s(1-u)), s(u) = exp(-1/u), u = (1+t)/2, rewritten as a logistic
    # of phi(t) = 2/(1-t) - 2/(1+t) for numerical stability near t = +-1.
    inside = np.abs(t) < 1
    ti = np.where(inside, t, 0.0)
    a, b = 1.0 - ti, 1.0 + ti
    phi = 2.0 / a - 2.0 / b
    d1 = 2.0 / a**2 + 2.0 / b**2
    d2 = 4.0 / a**3 - 4.0 / b**3
    sig = expit(phi)
    s1 = expit(phi) * expit(-phi)
    s2 = s1 * (1.0 - 2.0 * sig)
    val = np.where(inside, sig, np.where(t >= 1, 1.0, 0.0))
    der1 = np.where(inside, s1 * d1, 0.0)
    der2 = np.where(inside, s2 * d1 * d1 + s1 * d2, 0.0)
    return val, der1, der2


def _quintic_jet(t: np.ndarray):
    inside = np.abs(t) < 1
    u = np.where(inside, 0.5 * (t + 1.0), 0.0)
    val = np.where(inside, u**3 * (10.0 - 15.0 * u + 6.0 * u * u), np.where(t >= 1, 1.0, 0.0))
    der1 = np.where(inside, 15.0 * u * u * (1.0 - u) ** 2, 0.0)
    der2 = np.where(inside, 15.0 * u * (1.0 - u) * (1.0 - 2.0 * u), 0.0)
    return val, der1, der2


def _refined_sup(f, lo: float, hi: float, n: int = SUP_SAMPLES) -> Tuple[float, float]:
    """Sup of ``f`` on ``[lo, hi]``: dense grid, then a bounded local refinement."""
    grid = np.linspace(lo, hi, n)
    vals = f(grid)
    k = int(np.argmax(vals))
    best, arg = float(vals[k]), float(grid[k])
    h = (hi - lo) / (n - 1)
    a, b = max(lo, arg - h), min(hi, arg + h)
    if b > a:
        res = minimize_scalar(lambda s: -float(f(np.array([s]))[0]), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-14})
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    return best, arg


@dataclass(frozen=True)
class TransitionProfile:
    kind: str = "flat-exponential"
    C: Tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        C1, _ = _refined_sup(lambda t: np.abs(self.jet(t)[1]), -1.0, 1.0)
        C2, _ = _refined_sup(lambda t: np.abs(self.jet(t)[2]), -1.0, 1.0)
        object.__setattr__(self, "C", (1.0, C1, C2))

    def jet(self, t):
        """Unscaled ``(eta, eta', eta'')`` at ``t``."""
        t = np.asarray(t, dtype=float)
        return _flat_exp_jet(t) if self.kind == "flat-exponential" else _quintic_jet(t)

    @property
    def glue_order(self) -> Union[int, float]:
        """Order of derivatives that vanish at ``t = +-1``."""
        return np.inf if self.kind == "flat-exponential" else 2


def eta_jet(profile: TransitionProfile, t, eps: float):
    """``(eta_eps(t), eta_eps'(t), eta_eps''(t))`` with ``eta_eps(t) = eta(t/eps)``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    v, d1, d2 = profile.jet(np.asarray(t, dtype=float) / eps)
    return v, d1 / eps, d2 / (eps * eps)


@dataclass(frozen=True)
class RadialBump:
    """``chi(x) = psi(|x|)`` with ``psi(r) = 1 - eta(4r - 3)``."""

    profile: TransitionProfile = field(default_factory=TransitionProfile)
    C: Tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        C1 = 4.0 * self.profile.C[1]

        def hess_norm(r):
            _, p1, p2 = self.radial_jet(r)
            return np.sqrt(p2 * p2 + (p1 / r) ** 2)

        C2, _ = _refined_sup(hess_norm, 0.5, 1.0)
        object.__setattr__(self, "C", (1.0, C1, C2))

    def radial_jet(self, r):
        v, d1, d2 = self.profile.jet(4.0 * np.asarray(r, dtype=float) - 3.0)
        return 1.0 - v, -4.0 * d1, -16.0 * d2


def chi_jet(bump: RadialBump, x, eps: float):
    """``(chi_eps, grad chi_eps, D^2 chi_eps)`` at ``x`` (shape ``(..., 2)``).

    Exact plateaus: value 1 with zero derivatives on ``|x| <= eps/2``, and
    identically zero on ``|x| >= eps``.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    trans = (r > 0.5 * eps) & (r < eps)
    rs = np.where(trans, r, eps)
    v, p1, p2 = bump.radial_jet(rs / eps)
    p1, p2 = p1 / eps, p2 / (eps * eps)
    val = np.where(r <= 0.5 * eps, 1.0, np.where(r >= eps, 0.0, v))
    u = x / rs[..., None]
    grad = np.where(trans[..., None], p1[..., None] * u, 0.0)
    uu = u[..., :, None] * u[..., None, :]
    hess = p2[..., None, None] * uu + (p1 / rs)[..., None, None] * (np.eye(2) - uu)
    hess = np.where(trans[..., None, None], hess, 0.0)
    return val, grad, hess


# -- scaled-bound verification -----------------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    eps: float
    order: int
    sampled_sup: float
    bound: float
    witness: Tuple[float, ...]
    upper_ok: bool
    sharp_ok: bool

    @property
    def ratio(self) -> float:
        return self.sampled_sup / self.bound


@dataclass(frozen=True)
class ScaledBoundsReport:
    kind: str
    constants: Tuple[float, float, float]
    checks: List[BoundCheck]

    @property
    def passed(self) -> bool:
        return all(c.upper_ok and c.sharp_ok for c in self.checks)

    def failures(self) -> List[BoundCheck]:
        return [c for c in self.checks if not (c.upper_ok and c.sharp_ok)]

    def sups(self, order: int) -> List[float]:
        return [c.sampled_sup for c in self.checks if c.order == order]


# Slack on the upper check only absorbs rounding in t/eps; C_m are refined sups.
_UPPER_RTOL = 1e-12


def verify_scaled_bounds(obj: Union[TransitionProfile, RadialBump], eps_list, n_samples: int = 20_001,
                         seed: int = 0) -> ScaledBoundsReport:
    """Check ``sup |D^m f_eps| <= C_m eps^-m`` (and ``>= C_m eps^-m / 2``) for m = 0, 1, 2."""
    checks = []
    rng = np.random.default_rng(seed)
    for eps in eps_list:
        eps = float(eps)
        if isinstance(obj, TransitionProfile):
            pts = np.linspace(-1.25 * eps, 1.25 * eps, n_samples)
            v, d1, d2 = eta_jet(obj, pts, eps)
            mags = (np.abs(v), np.abs(d1), np.abs(d2))
            wit = pts[:, None]
        else:
            r = np.linspace(0.0, 1.25 * eps, n_samples)
            th = rng.uniform(0.0, 2.0 * np.pi, n_samples)
            pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
            v, g, h = chi_jet(obj, pts, eps)
            mags = (np.abs(v), np.linalg.norm(g, axis=-1), np.linalg.norm(h, axis=(-2, -1)))
            wit = pts
        for m in range(3):
            k = int(np.argmax(mags[m]))
            sup = float(mags[m][k])
            bound = obj.C[m] * eps ** (-m)
            checks.append(BoundCheck(eps, m, sup, bound, tuple(map(float, wit[k])),
                                     sup <= bound * (1 + _UPPER_RTOL), sup >= 0.5 * bound))
    kind = obj.kind if isinstance(obj, TransitionProfile) else f"bump/{obj.profile.kind}"
    return ScaledBoundsReport(kind, obj.C, checks)
