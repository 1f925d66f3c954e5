"""Generators of valid piecewise quadratic test maps.

On a conforming grid every C^1 piecewise quadratic is a global quadratic plus
one squared-coordinate increment per interior grid line, so instances are
built from exactly that family.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .compat import PiecewiseQuadMap
from .errors import JacobianFloorError, PQSmoothError
from .partition import build_grid_partition
from .quadmap import QuadraticMap2

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Small deterministic 64-bit generator (splitmix64 finaliser)."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float = -1.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * self.random()

    def vector_in_disk(self, radius: float) -> np.ndarray:
        """Random plane vector of norm at most ``radius``."""
        r = radius * np.sqrt(self.random())
        th = 2.0 * np.pi * self.random()
        return np.array([r * np.cos(th), r * np.sin(th)])


@dataclass(frozen=True, eq=False)
class InstanceSpec:
    """Grid breaks, global quadratic, and the squared-term increment of each interior grid line.

    ``line_x[l]`` is added on the right of ``x = x_breaks[l + 1]`` as
    ``(x1 - x_breaks[l + 1])**2 * line_x[l]``; ``line_y`` likewise above the
    horizontal lines.
    """

    x_breaks: Tuple[float, ...]
    y_breaks: Tuple[float, ...]
    star: QuadraticMap2
    line_x: Tuple[Tuple[float, float], ...]
    line_y: Tuple[Tuple[float, float], ...]
    seed: Optional[int] = None
    amplitude: float = 0.0
    requested_amplitude: float = 0.0
    halvings: int = 0
    m: Optional[float] = None
    m_provenance: str = "sample-estimated"
    notes: List[str] = field(default_factory=list)

    def pieces(self) -> List[QuadraticMap2]:
        xb, yb = self.x_breaks, self.y_breaks
        nx, ny = len(xb) - 1, len(yb) - 1
        out = []
        for j in range(ny):
            for i in range(nx):
                P = self.star
                for l in range(i):
                    P = P + QuadraticMap2.squared_coordinate(0, self.line_x[l], xb[l + 1])
                for l in range(j):
                    P = P + QuadraticMap2.squared_coordinate(1, self.line_y[l], yb[l + 1])
                out.append(P)
        return out

    def build(self) -> PiecewiseQuadMap:
        P = build_grid_partition(self.x_breaks, self.y_breaks)
        return PiecewiseQuadMap.build(P, self.pieces(), self.m, self.m_provenance)


def _near_identity(rng: SplitMix64, amplitude: float, extent: float) -> QuadraticMap2:
    c = np.array([[rng.uniform() for _ in range(6)] for _ in range(2)]) * amplitude
    c[:, :3] /= extent
    return QuadraticMap2.identity() + QuadraticMap2(c)


def random_instance_spec(x_breaks: Sequence[float], y_breaks: Sequence[float], amplitude: float,
                         seed: int, max_halvings: int = 10) -> InstanceSpec:
    """Random near-identity instance; halves the amplitude until validation passes."""
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    xb, yb = tuple(map(float, x_breaks)), tuple(map(float, y_breaks))
    partition = build_grid_partition(xb, yb)
    x0, x1, y0, y1 = partition.bounds
    extent = max(x1 - x0, y1 - y0)
    amp = float(amplitude)
    last_error = None
    for k in range(max_halvings + 1):
        rng = SplitMix64(seed)
        star = _near_identity(rng, amp, extent)
        lx = tuple(tuple(rng.vector_in_disk(amp)) for _ in range(len(xb) - 2))
        ly = tuple(tuple(rng.vector_in_disk(amp)) for _ in range(len(yb) - 2))
        spec = InstanceSpec(xb, yb, star, lx, ly, seed, amp, float(amplitude), k)
        try:
            g = PiecewiseQuadMap.build(partition, spec.pieces(), m=None)
        except PQSmoothError as exc:
            last_error = exc
            amp *= 0.5
            continue
        note = f"m = half the sampled minimal singular value ({g.m:.6g}), non-certified"
        notes = ([f"amplitude halved {k} times: {amplitude:g} -> {amp:g}"] if k else []) + [note]
        return replace(spec, m=g.m, m_provenance="sample-estimated", notes=notes)
    raise JacobianFloorError(f"no valid instance after {max_halvings} amplitude halvings "
                             f"(last error: {last_error})")


def random_instance(x_breaks: Sequence[float], y_breaks: Sequence[float], amplitude: float,
                    seed: int) -> PiecewiseQuadMap:
    return random_instance_spec(x_breaks, y_breaks, amplitude, seed).build()


def unit_grid(n: int, m: Optional[int] = None):
    """Breaks of an ``n x m`` grid of unit cells on ``[0, n] x [0, m]``."""
    m = n if m is None else m
    return tuple(float(i) for i in range(n + 1)), tuple(float(j) for j in range(m + 1))


def _floor_hint(exc: JacobianFloorError, what: str) -> JacobianFloorError:
    return JacobianFloorError(f"{exc}; reduce the amplitude of {what}", cell=exc.cell,
                              point=exc.point, value=exc.value)


def make_two_cell_model(Pminus: QuadraticMap2, a, m: Optional[float] = None) -> PiecewiseQuadMap:
    """Pieces ``P-`` on (-1,0)x(-1,1) and ``P- + x1**2 a`` on (0,1)x(-1,1)."""
    P = build_grid_partition([-1.0, 0.0, 1.0], [-1.0, 1.0])
    pieces = [Pminus, Pminus + QuadraticMap2.squared_coordinate(0, a)]
    try:
        return PiecewiseQuadMap.build(P, pieces, m, "user-asserted")
    except JacobianFloorError as exc:
        raise _floor_hint(exc, "the mismatch a") from exc


def make_four_quadrant_model(Pstar: QuadraticMap2, a2, a4, m: Optional[float] = None) -> PiecewiseQuadMap:
    """Four pieces on (-1,1)^2 around the origin: ``P*`` in the NE quadrant,
    ``+ x1**2 a2`` west of the vertical axis and ``+ x2**2 a4`` south of the
    horizontal one."""
    P = build_grid_partition([-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0])
    west = QuadraticMap2.squared_coordinate(0, a2)
    south = QuadraticMap2.squared_coordinate(1, a4)
    # cell order: SW, SE, NW, NE
    pieces = [Pstar + west + south, Pstar + south, Pstar + west, Pstar]
    try:
        return PiecewiseQuadMap.build(P, pieces, m, "user-asserted")
    except JacobianFloorError as exc:
        raise _floor_hint(exc, "a2/a4") from exc


def standard_strip_instance() -> PiecewiseQuadMap:
    """Two-cell model with identity minus piece and mismatch (1, 0)."""
    return make_two_cell_model(QuadraticMap2.identity(), (1.0, 0.0), m=None)
