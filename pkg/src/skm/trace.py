"""Per-iteration run records shared by batch and stochastic runs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraceRecord:
    """State observed at iteration t (t=0 is the initial centroid set)."""

    t: int
    phi: float
    eta: np.ndarray | None = None
    nhat: np.ndarray | None = None
    delta: float | None = None

    def to_json(self) -> str:
        rec = {
            "t": int(self.t),
            "phi": float(self.phi),
            "eta": [] if self.eta is None else [float(v) for v in self.eta],
            "nhat": [] if self.nhat is None else [int(v) for v in self.nhat],
            "delta": None if self.delta is None else float(self.delta),
        }
        return json.dumps(rec)


@dataclass
class RunTrace:
    """Sequence of evaluated iterations for one run.

    ``records[0]`` always carries t=0 with the cost of the initial
    centroids.  ``converged`` is set by batch runs only; ``centroid_log``
    is populated on request for trajectory-level tests and is never
    serialized.
    """

    records: list[TraceRecord] = field(default_factory=list)
    converged: bool | None = None
    centroid_log: list[np.ndarray] | None = None

    @property
    def ts(self) -> np.ndarray:
        return np.array([r.t for r in self.records], dtype=np.int64)

    @property
    def phis(self) -> np.ndarray:
        return np.array([r.phi for r in self.records], dtype=np.float64)

    @property
    def phi0(self) -> float:
        return self.records[0].phi

    @property
    def final_phi(self) -> float:
        return self.records[-1].phi

    def to_ndjson(self) -> str:
        """One JSON object per evaluated iteration, newline-delimited."""
        return "".join(rec.to_json() + "\n" for rec in self.records)

    def write_ndjson(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ndjson())
