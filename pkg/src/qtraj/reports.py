"""Residual report container shared by the verification operations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ResidualReport:
    name: str
    max: float
    rms: float
    nodes: int
    params: dict = field(default_factory=dict)

    @classmethod
    def from_residuals(cls, name: str, residuals: np.ndarray, **params) -> "ResidualReport":
        r = np.asarray(residuals, dtype=float).ravel()
        if r.size == 0:
            return cls(name, math.nan, math.nan, 0, params)
        return cls(
            name,
            float(np.max(np.abs(r))),
            float(np.sqrt(np.mean(r * r))),
            int(r.size),
            params,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max": self.max,
            "rms": self.rms,
            "nodes": self.nodes,
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
