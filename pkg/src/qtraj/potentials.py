"""Catalog of 1-D potentials V(q)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRangeError
from .numerics import Grid1D, SampledField1D


class Potential:
    """Base class: a pure, vectorized map q -> V(q)."""

    kind = "abstract"

    def __call__(self, q):
        raise NotImplementedError


@dataclass(frozen=True)
class FreePotential(Potential):
    kind = "free"

    def __call__(self, q):
        return np.zeros_like(np.asarray(q, dtype=float))


@dataclass(frozen=True)
class LinearPotential(Potential):
    slope: float
    kind = "linear"

    def __call__(self, q):
        return self.slope * np.asarray(q, dtype=float)


@dataclass(frozen=True)
class HarmonicPotential(Potential):
    stiffness: float
    kind = "harmonic"

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * self.stiffness * q * q


@dataclass(frozen=True)
class SquareWellPotential(Potential):
    """V = -depth for |q| < half_width, 0 outside; edges are exact jumps."""

    depth: float
    half_width: float
    kind = "square_well"

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        return np.where(np.abs(q) < self.half_width, -self.depth, 0.0)


@dataclass(frozen=True)
class TabulatedPotential(Potential):
    """Cubic interpolation of a sampled V; queries outside the table raise."""

    table: SampledField1D
    kind = "tabulated"

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < self.table.grid.q_min) or np.any(q > self.table.grid.q_max):
            raise OutOfRangeError("q outside tabulated potential range")
        return np.asarray(self.table.spline()(q), dtype=float)

    @classmethod
    def from_csv(cls, source) -> "TabulatedPotential":
        """Two-column CSV (q, V); a non-numeric first row is taken as a header."""
        if isinstance(source, (str, bytes)):
            with open(source, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        else:
            rows = list(csv.reader(source))
        data = []
        for i, row in enumerate(rows):
            if not row:
                continue
            try:
                data.append((float(row[0]), float(row[1])))
            except ValueError:
                if i == 0:
                    continue  # header line
                raise
        if len(data) < 9:
            raise ValueError("tabulated potential needs at least 9 rows")
        qs = np.array([d[0] for d in data])
        vs = np.array([d[1] for d in data])
        order = np.argsort(qs)
        qs, vs = qs[order], vs[order]
        h = np.diff(qs)
        if not np.allclose(h, h[0], rtol=1e-9, atol=0.0):
            raise ValueError("tabulated potential must be sampled on a uniform grid")
        grid = Grid1D(float(qs[0]), float(qs[-1]), len(qs))
        return cls(SampledField1D(grid, vs))


def make_potential(kind: str, **params) -> Potential:
    """Factory used by scenario files."""
    if kind == "free":
        return FreePotential()
    if kind == "linear":
        return LinearPotential(slope=float(params["slope"]))
    if kind == "harmonic":
        return HarmonicPotential(stiffness=float(params["stiffness"]))
    if kind == "square_well":
        return SquareWellPotential(
            depth=float(params["depth"]), half_width=float(params["half_width"])
        )
    if kind == "tabulated":
        return TabulatedPotential.from_csv(params["path"])
    raise ValueError(f"unknown potential kind: {kind!r}")


def evaluate(potential: Potential, q):
    """Functional alias for potential(q)."""
    return potential(q)
