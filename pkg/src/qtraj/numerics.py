"""Uniform-grid calculus.

Stencil differentiation, spline quadrature, monotone-table inversion and
scalar-parameter derivatives.  Everything here is deterministic and pure:
identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import OutOfRangeError

# 7-point windows give 6th-order central / >=4th-order one-sided stencils
# for derivative orders 1-3, which is what the Schwarzian chain needs.
STENCIL_WIDTH = 7
EDGE_EXCLUDE = 4  # verification suites drop this many nodes per edge


@dataclass(frozen=True)
class Grid1D:
    """Uniform 1-D grid with n nodes on [q_min, q_max]."""

    q_min: float
    q_max: float
    n: int

    def __post_init__(self):
        if self.n < 9:
            raise ValueError(f"grid needs at least 9 nodes, got {self.n}")
        if not (np.isfinite(self.q_min) and np.isfinite(self.q_max)):
            raise ValueError("grid bounds must be finite")
        if self.q_max <= self.q_min:
            raise ValueError("q_max must exceed q_min")

    @property
    def h(self) -> float:
        return (self.q_max - self.q_min) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.n)

    def contains(self, q: float) -> bool:
        return self.q_min <= q <= self.q_max

    def interior(self) -> slice:
        """Node range used by residual reports (stencil-clean interior)."""
        return slice(EDGE_EXCLUDE, self.n - EDGE_EXCLUDE)


@dataclass(frozen=True)
class SampledField1D:
    """Real values sampled on a Grid1D."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(
                f"value count {vals.shape} does not match grid nodes ({self.grid.n},)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def spline(self) -> CubicSpline:
        return CubicSpline(self.grid.nodes, self.values)

    def at(self, q: float) -> float:
        if not self.grid.contains(q):
            raise OutOfRangeError(f"q={q} outside grid [{self.grid.q_min}, {self.grid.q_max}]")
        return float(self.spline()(q))


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Weights of the m-th derivative at z from samples at nodes x.

    Classic recursive construction; exact for the given node set.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@lru_cache(maxsize=256)
def _uniform_weights(offset: int, width: int, order: int) -> tuple:
    """Stencil weights (for unit spacing) at position `offset` inside a window."""
    nodes = np.arange(width, dtype=float)
    return tuple(fornberg_weights(float(offset), nodes, order))


def uniform_diff(values: np.ndarray, h: float, order: int, axis: int = -1) -> np.ndarray:
    """Differentiate sampled values along one axis of a uniform grid.

    Central 7-point stencils in the interior, one-sided 7-point stencils at
    the edges; at least 4th-order accurate for orders 1-3.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    vals = np.asarray(values, dtype=float)
    vals = np.moveaxis(vals, axis, -1)
    n = vals.shape[-1]
    w = STENCIL_WIDTH
    if n < 9:
        raise ValueError(f"need at least 9 nodes along axis, got {n}")
    out = np.empty_like(vals)
    half = w // 2
    center = np.array(_uniform_weights(half, w, order))
    # interior: sliding dot product with the central stencil
    windows = np.lib.stride_tricks.sliding_window_view(vals, w, axis=-1)
    out[..., half : n - half] = windows @ center
    # edges: one-sided windows anchored at the boundary
    for i in range(half):
        wl = np.array(_uniform_weights(i, w, order))
        out[..., i] = vals[..., :w] @ wl
        wr = np.array(_uniform_weights(w - 1 - i, w, order))
        out[..., n - 1 - i] = vals[..., n - w :] @ wr
    out /= h**order
    return np.moveaxis(out, -1, axis)


def diff_central(f: SampledField1D, order: int) -> SampledField1D:
    """Derivative of a sampled field, >=4th-order accurate in h."""
    return SampledField1D(f.grid, uniform_diff(f.values, f.grid.h, order))


def integrate(f: SampledField1D, q_lo: float, q_hi: float) -> float:
    """Definite integral of the field between two in-range limits.

    Cubic-spline quadrature: 4th-order accurate, exact on cubics, and
    antisymmetric under swapping the limits.
    """
    for q in (q_lo, q_hi):
        if not f.grid.contains(q):
            raise OutOfRangeError(f"integration limit {q} outside grid")
    return float(f.spline().integrate(q_lo, q_hi))


def cumulative_integral(f: SampledField1D, q0: float) -> SampledField1D:
    """Antiderivative sampled on the grid, anchored to zero at q0."""
    if not f.grid.contains(q0):
        raise OutOfRangeError(f"anchor {q0} outside grid")
    anti = f.spline().antiderivative()
    return SampledField1D(f.grid, anti(f.grid.nodes) - float(anti(q0)))


def invert_monotone(xs, ys, y: float) -> float:
    """Solve y(x) = y on a strictly monotone sampled table.

    Cubic-spline accurate; the root is polished with Brent's method on the
    interpolant inside the bracketing cell.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 4:
        raise ValueError("xs and ys must be equal-length 1-D arrays of at least 4 points")
    d = np.diff(ys)
    if np.all(d > 0):
        increasing = True
    elif np.all(d < 0):
        increasing = False
    else:
        raise ValueError("ys must be strictly monotone")
    lo, hi = (ys[0], ys[-1]) if increasing else (ys[-1], ys[0])
    if not (lo <= y <= hi):
        raise OutOfRangeError(f"y={y} outside table range [{lo}, {hi}]")
    spline = CubicSpline(xs, ys)
    yy = ys if increasing else ys[::-1]
    idx = int(np.searchsorted(yy, y))
    idx = min(max(idx, 1), len(ys) - 1)
    if not increasing:
        idx = len(ys) - idx
        idx = min(max(idx, 1), len(ys) - 1)
    a, b = xs[idx - 1], xs[idx]
    fa, fb = spline(a) - y, spline(b) - y
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if fa * fb > 0:
        # spline overshoot near the bracket: widen by one cell each way
        a = xs[max(idx - 2, 0)]
        b = xs[min(idx + 1, len(xs) - 1)]
    return float(brentq(lambda x: float(spline(x)) - y, a, b, xtol=1e-14))


def param_derivative(f, x0: float, step: float, order: int = 1) -> float:
    """Derivative of a scalar function of one parameter.

    order 1: 5-point central difference (4th-order accurate).
    order 2: second difference refined by one Richardson step (4th order).
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if order == 1:
        return (
            f(x0 - 2 * step) - 8 * f(x0 - step) + 8 * f(x0 + step) - f(x0 + 2 * step)
        ) / (12 * step)
    if order == 2:
        f0 = f(x0)

        def second(h):
            return (f(x0 + h) - 2 * f0 + f(x0 - h)) / h**2

        return (4 * second(step / 2) - second(step)) / 3
    raise ValueError(f"order must be 1 or 2, got {order}")
