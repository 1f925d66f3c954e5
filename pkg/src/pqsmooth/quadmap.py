"""Quadratic polynomial maps of the plane and their exact second-order calculus.

A scalar quadratic is stored as the coefficient row ``(alpha, beta, gamma, delta, mu, nu)``
of ``alpha*x1**2 + beta*x1*x2 + gamma*x2**2 + delta*x1 + mu*x2 + nu``. A
:class:`QuadraticMap2` stacks two such rows, one per output component.

Hessians follow the convention ``hessian[..., k, i, j] = d^2 g_k / dx_i dx_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

COEFF_NAMES = ("alpha", "beta", "gamma", "delta", "mu", "nu")

Rect = Tuple[float, float, float, float]  # (x1_lo, x1_hi, x2_lo, x2_hi)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _scalar_values(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    x1, x2 = x[..., 0], x[..., 1]
    return c[0] * x1 * x1 + c[1] * x1 * x2 + c[2] * x2 * x2 + c[3] * x1 + c[4] * x2 + c[5]


def _scalar_hessian(c: np.ndarray) -> np.ndarray:
    return np.array([[2.0 * c[0], c[1]], [c[1], 2.0 * c[2]]])


def _from_jet_at_origin(value, gradient, hessian) -> np.ndarray:
    """Coefficient row of the scalar quadratic with the given 2-jet at 0."""
    return np.array(
        [0.5 * hessian[0, 0], hessian[0, 1], 0.5 * hessian[1, 1], gradient[0], gradient[1], value]
    )


@dataclass(frozen=True, eq=False)
class Jet2:
    """Value, Jacobian and Hessian of a plane map, possibly batched over leading axes."""

    value: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))
        object.__setattr__(self, "jacobian", np.asarray(self.jacobian, dtype=float))
        object.__setattr__(self, "hessian", np.asarray(self.hessian, dtype=float))

    def __add__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.value + other.value, self.jacobian + other.jacobian,
                    self.hessian + other.hessian)

    def __sub__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.value - other.value, self.jacobian - other.jacobian,
                    self.hessian - other.hessian)

    def __getitem__(self, idx) -> "Jet2":
        return Jet2(self.value[idx], self.jacobian[idx], self.hessian[idx])

    def pushforward(self, frame: "AffineFrame") -> "Jet2":
        """Jet of ``x -> G(frame.inverse(x))`` given this jet of ``G`` at ``frame.inverse(x)``."""
        inv = frame.inverse_linear
        jac = self.jacobian @ inv
        hess = np.einsum("ai,...kab,bj->...kij", inv, self.hessian, inv)
        return Jet2(self.value, jac, hess)

    @staticmethod
    def zeros(shape=()) -> "Jet2":
        shape = tuple(shape)
        return Jet2(np.zeros(shape + (2,)), np.zeros(shape + (2, 2)), np.zeros(shape + (2, 2, 2)))

    @staticmethod
    def stack(jets) -> "Jet2":
        return Jet2(np.stack([j.value for j in jets]), np.stack([j.jacobian for j in jets]),
                    np.stack([j.hessian for j in jets]))


@dataclass(frozen=True, eq=False)
class AffineFrame:
    """The affine map ``y -> origin + linear @ y`` from model to physical coordinates."""

    origin: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        origin = _frozen(self.origin).reshape(2)
        linear = _frozen(self.linear).reshape(2, 2)
        det = float(np.linalg.det(linear))
        if not np.isfinite(det) or abs(det) <= 1e-14 * max(1.0, float(np.abs(linear).max()) ** 2):
            raise ValueError(f"singular affine frame (det = {det!r})")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "_inverse", _frozen(np.linalg.inv(linear)))

    @classmethod
    def identity(cls) -> "AffineFrame":
        return cls(np.zeros(2), np.eye(2))

    @classmethod
    def translation(cls, origin) -> "AffineFrame":
        return cls(origin, np.eye(2))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.linear))

    @property
    def inverse_linear(self) -> np.ndarray:
        return self._inverse

    def __call__(self, y) -> np.ndarray:
        return self.origin + np.asarray(y, dtype=float) @ self.linear.T

    def inverse(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ self._inverse.T

    def compose(self, inner: "AffineFrame") -> "AffineFrame":
        """``self o inner``."""
        return AffineFrame(self.origin + self.linear @ inner.origin, self.linear @ inner.linear)


@dataclass(frozen=True, eq=False)
class BivariateQuadratic:
    """Scalar quadratic polynomial in two variables (same coefficient order as the map rows)."""

    coef: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coef", _frozen(self.coef).reshape(6))

    def __call__(self, x) -> np.ndarray:
        return _scalar_values(self.coef, np.asarray(x, dtype=float))

    def gradient(self, x) -> np.ndarray:
        c = self.coef
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([2 * c[0] * x1 + c[1] * x2 + c[3], c[1] * x1 + 2 * c[2] * x2 + c[4]], axis=-1)

    @property
    def hessian(self) -> np.ndarray:
        return _scalar_hessian(self.coef)


@dataclass(frozen=True, eq=False)
class QuadraticMap2:
    """Quadratic polynomial map R^2 -> R^2, ``coef[k]`` holding the row of component k."""

    coef: np.ndarray

    def __post_init__(self):
        coef = _frozen(self.coef)
        if coef.shape != (2, 6):
            raise ValueError(f"expected a (2, 6) coefficient array, got shape {coef.shape}")
        object.__setattr__(self, "coef", coef)

    @classmethod
    def identity(cls) -> "QuadraticMap2":
        return cls([[0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0]])

    @classmethod
    def zero(cls) -> "QuadraticMap2":
        return cls(np.zeros((2, 6)))

    @classmethod
    def affine(cls, linear, offset=(0.0, 0.0)) -> "QuadraticMap2":
        A = np.asarray(linear, dtype=float)
        b = np.asarray(offset, dtype=float)
        c = np.zeros((2, 6))
        c[:, 3], c[:, 4], c[:, 5] = A[:, 0], A[:, 1], b
        return cls(c)

    @classmethod
    def squared_coordinate(cls, axis: int, vector, center: float = 0.0) -> "QuadraticMap2":
        """The map ``(x_axis - center)**2 * vector``."""
        v = np.asarray(vector, dtype=float)
        c = np.zeros((2, 6))
        sq, lin = (0, 3) if axis == 0 else (2, 4)
        c[:, sq] = v
        c[:, lin] = -2.0 * center * v
        c[:, 5] = center * center * v
        return cls(c)

    def __add__(self, other: "QuadraticMap2") -> "QuadraticMap2":
        return QuadraticMap2(self.coef + other.coef)

    def __sub__(self, other: "QuadraticMap2") -> "QuadraticMap2":
        return QuadraticMap2(self.coef - other.coef)

    def __mul__(self, s: float) -> "QuadraticMap2":
        return QuadraticMap2(self.coef * float(s))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"QuadraticMap2({self.coef.tolist()!r})"

    def allclose(self, other: "QuadraticMap2", atol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.coef - other.coef) <= atol))

    def component(self, k: int) -> BivariateQuadratic:
        return BivariateQuadratic(self.coef[k])

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([_scalar_values(self.coef[0], x), _scalar_values(self.coef[1], x)], axis=-1)

    __call__ = value

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0, None], x[..., 1, None]
        c = self.coef
        d1 = 2 * c[:, 0] * x1 + c[:, 1] * x2 + c[:, 3]
        d2 = c[:, 1] * x1 + 2 * c[:, 2] * x2 + c[:, 4]
        return np.stack([d1, d2], axis=-1)

    @property
    def hessian(self) -> np.ndarray:
        """Constant (2, 2, 2) Hessian tensor."""
        return np.stack([_scalar_hessian(self.coef[0]), _scalar_hessian(self.coef[1])])

    def jets(self, x) -> Jet2:
        x = np.asarray(x, dtype=float)
        hess = np.broadcast_to(self.hessian, x.shape[:-1] + (2, 2, 2))
        return Jet2(self.value(x), self.jacobian(x), hess.copy())


def jet2(P: QuadraticMap2, x) -> Jet2:
    """Exact value, Jacobian and Hessian of ``P`` at ``x`` (a point or a batch of points)."""
    return P.jets(x)


def pullback(P: QuadraticMap2, frame: AffineFrame) -> QuadraticMap2:
    """The quadratic map ``y -> P(frame(y))``.

    Composition with an affine map stays quadratic; the coefficients are read
    off from the 2-jet at ``y = 0`` (value ``P(o)``, gradient ``DP(o) L``,
    Hessian ``L^T D^2P L``), which determines a quadratic exactly.
    """
    o, L = frame.origin, frame.linear
    val = P.value(o)
    grad = P.jacobian(o) @ L
    hess = P.hessian
    rows = [_from_jet_at_origin(val[k], grad[k], L.T @ hess[k] @ L) for k in range(2)]
    return QuadraticMap2(np.array(rows))


def _affine_product(p, q) -> np.ndarray:
    """Coefficient row of ``(p0 + p1 x1 + p2 x2)(q0 + q1 x1 + q2 x2)``."""
    p0, p1, p2 = p
    q0, q1, q2 = q
    return np.array([p1 * q1, p1 * q2 + p2 * q1, p2 * q2, p0 * q1 + p1 * q0, p0 * q2 + p2 * q0, p0 * q0])


def det_jacobian_poly(P: QuadraticMap2) -> BivariateQuadratic:
    """``det DP`` as a bivariate quadratic (the Jacobian of a quadratic map is affine)."""
    c = P.coef
    # entries of DP as affine forms (constant, x1, x2)
    d = [[(c[k, 3], 2 * c[k, 0], c[k, 1]), (c[k, 4], c[k, 1], 2 * c[k, 2])] for k in range(2)]
    return BivariateQuadratic(_affine_product(d[0][0], d[1][1]) - _affine_product(d[0][1], d[1][0]))


def _min_1d(a2: float, a1: float, a0: float, lo: float, hi: float):
    """Minimise ``a2 t^2 + a1 t + a0`` over ``[lo, hi]``; returns (value, t)."""
    cands = [lo, hi]
    # interior vertex test without dividing by a possibly tiny a2
    if a2 > 0 and 2 * a2 * lo < -a1 < 2 * a2 * hi:
        cands.append(min(max(-a1 / (2 * a2), lo), hi))
    vals = [a2 * t * t + a1 * t + a0 for t in cands]
    i = int(np.argmin(vals))
    return vals[i], cands[i]


def min_quadratic_on_rect(q: BivariateQuadratic, rect: Rect):
    """Exact minimum of ``q`` over a closed axis-aligned rectangle.

    Candidates are the interior stationary point (when the Hessian system is
    solvable and the point lies inside), the minimiser of the 1D restriction
    to each side, and the corners. Returns ``(value, argmin)``.
    """
    x0, x1, y0, y1 = map(float, rect)
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate rectangle {rect!r}")
    a, b, g, d, m, n = q.coef
    best = (np.inf, None)

    def consider(p):
        nonlocal best
        v = float(q(np.asarray(p)))
        if v < best[0]:
            best = (v, np.array(p, dtype=float))

    H = np.array([[2 * a, b], [b, 2 * g]])
    det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    if abs(det) > 1e-14 * max(1.0, float(np.abs(H).max()) ** 2):
        s = np.linalg.solve(H, [-d, -m])
        if x0 < s[0] < x1 and y0 < s[1] < y1:
            consider(s)
    for xc in (x0, x1):  # sides x1 = const: g t^2 + (b xc + m) t + ...
        _, t = _min_1d(g, b * xc + m, a * xc * xc + d * xc + n, y0, y1)
        consider((xc, t))
    for yc in (y0, y1):
        _, t = _min_1d(a, b * yc + d, g * yc * yc + m * yc + n, x0, x1)
        consider((t, yc))
    return best
