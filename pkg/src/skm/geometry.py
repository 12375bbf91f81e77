"""Core k-means mathematics: assignment, means, costs, and Lloyd's algorithm.

Conventions used throughout:

- Squared distances are evaluated in the expanded form with cached norms
  and tiny negative results of the expansion are clamped to 0.
- Nearest-centroid ties break toward the lowest centroid index, so every
  run is reproducible.
- A centroid that owns no points is *degenerate*: it keeps its previous
  position and is flagged inactive; it is never relocated.
- Cost comparisons elsewhere in the package carry a relative slack of
  ``1e-9 * (1 + |value|)`` to absorb floating-point reassociation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .trace import RunTrace, TraceRecord

COST_RTOL = 1e-9


def rel_slack(value: float, rtol: float = COST_RTOL) -> float:
    """Relative tolerance ``rtol * (1 + |value|)`` for cost comparisons."""
    return rtol * (1.0 + abs(value))


@dataclass
class CentroidSet:
    """k centroid slots; ``active[r]`` is False for degenerate slots."""

    vectors: np.ndarray
    active: np.ndarray
    sq_norms: np.ndarray

    @classmethod
    def from_vectors(cls, vectors, active=None) -> "CentroidSet":
        vectors = np.array(vectors, dtype=np.float64, ndmin=2)
        if not np.isfinite(vectors).all():
            raise ValueError("centroid coordinates must be finite")
        if active is None:
            active = np.ones(vectors.shape[0], dtype=bool)
        else:
            active = np.asarray(active, dtype=bool).copy()
        if active.shape != (vectors.shape[0],):
            raise ValueError("active mask must have one entry per centroid")
        if not active.any():
            raise ValueError("need at least one active centroid")
        return cls(vectors, active, _sq_norms(vectors))

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def active_indices(self) -> np.ndarray:
        return np.nonzero(self.active)[0]

    def copy(self) -> "CentroidSet":
        return CentroidSet(self.vectors.copy(), self.active.copy(), self.sq_norms.copy())

    def check_norm_cache(self, rtol: float = 1e-12) -> bool:
        fresh = _sq_norms(self.vectors)
        return bool(np.all(np.abs(fresh - self.sq_norms) <= rtol * (1.0 + np.abs(fresh))))


def _sq_norms(vectors: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", vectors, vectors)


@dataclass
class Clustering:
    """Per-point centroid labels plus per-cluster sizes."""

    labels: np.ndarray
    sizes: np.ndarray
    k: int

    @classmethod
    def from_labels(cls, labels, k: int) -> "Clustering":
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-D array")
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"labels must lie in [0, {k})")
        sizes = np.bincount(labels, minlength=k).astype(np.int64)
        return cls(labels, sizes, k)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


@dataclass
class CostReport:
    """Total k-means cost and its per-cluster breakdown."""

    total: float
    per_cluster: np.ndarray


# ---------------------------------------------------------------------------
# distances and assignment


def sq_distances(ds: Dataset, c: CentroidSet, idx: np.ndarray | None = None) -> np.ndarray:
    """Squared distances from points (optionally a row subset) to all centroids.

    Inactive centroid columns are +inf so they can never win an argmin.
    """
    if ds.d != c.d:
        raise ValueError(f"dimension mismatch: dataset d={ds.d}, centroids d={c.d}")
    cross = ds.matmul(c.vectors.T) if idx is None else _subset_matmul(ds, idx, c.vectors.T)
    pt_norms = ds.sq_norms if idx is None else ds.sq_norms[idx]
    dist = pt_norms[:, None] - 2.0 * cross + c.sq_norms[None, :]
    np.maximum(dist, 0.0, out=dist)
    dist[:, ~c.active] = np.inf
    return dist


def _subset_matmul(ds: Dataset, idx: np.ndarray, m: np.ndarray) -> np.ndarray:
    rows = ds.rows(idx)
    return rows @ m if isinstance(rows, np.ndarray) else np.asarray(rows @ m)


def nearest_centroids(ds: Dataset, c: CentroidSet, idx: np.ndarray | None = None) -> np.ndarray:
    """Index of the closest active centroid per point; ties take the lowest index."""
    if c.n_active < 1:
        raise ValueError("need at least one active centroid")
    return np.argmin(sq_distances(ds, c, idx), axis=1).astype(np.int64)


def assign(ds: Dataset, c: CentroidSet) -> Clustering:
    """Voronoi assignment of every point to its closest active centroid."""
    return Clustering.from_labels(nearest_centroids(ds, c), c.k)


def cluster_sums(rows, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-cluster coordinate sums; identical reduction order for all callers.

    ``rows`` is a dense ndarray or CSR matrix of the points being summed.
    """
    d = rows.shape[1]
    sums = np.zeros((k, d), dtype=np.float64)
    for r in range(k):
        mask = labels == r
        if mask.any():
            if isinstance(rows, np.ndarray):
                sums[r] = rows[mask].sum(axis=0)
            else:
                sums[r] = np.asarray(rows[mask].sum(axis=0)).ravel()
    return sums


def means(ds: Dataset, a: Clustering, prev: CentroidSet) -> CentroidSet:
    """Cluster means; empty clusters keep the previous centroid, flagged inactive."""
    if a.n != ds.n:
        raise ValueError("clustering does not match dataset size")
    if a.k != prev.k:
        raise ValueError("clustering k does not match centroid count")
    sums = cluster_sums(ds.rows(), a.labels, a.k)
    vectors = prev.vectors.copy()
    active = a.sizes > 0
    nonempty = np.nonzero(active)[0]
    vectors[nonempty] = sums[nonempty] / a.sizes[nonempty, None]
    return CentroidSet(vectors, active, _sq_norms(vectors))


# ---------------------------------------------------------------------------
# cost functionals


def _per_cluster_cost(labels: np.ndarray, pt_costs: np.ndarray, k: int) -> CostReport:
    per_cluster = np.bincount(labels, weights=pt_costs, minlength=k)
    return CostReport(total=float(per_cluster.sum()), per_cluster=per_cluster)


def cost(ds: Dataset, c: CentroidSet) -> CostReport:
    """Optimal-assignment cost: each point charged to its closest active centroid."""
    dist = sq_distances(ds, c)
    labels = np.argmin(dist, axis=1)
    pt_costs = dist[np.arange(ds.n), labels]
    return _per_cluster_cost(labels, pt_costs, c.k)


def cost_of_pair(ds: Dataset, c: CentroidSet, a: Clustering) -> CostReport:
    """Cost of an explicit (centroids, clustering) pair."""
    if a.n != ds.n:
        raise ValueError("clustering does not match dataset size")
    if a.labels.size and (a.labels.min() < 0 or a.labels.max() >= c.k):
        raise ValueError("label out of range for the centroid set")
    cross = ds.matmul(c.vectors.T)
    pt_costs = ds.sq_norms - 2.0 * cross[np.arange(ds.n), a.labels] + c.sq_norms[a.labels]
    np.maximum(pt_costs, 0.0, out=pt_costs)
    return _per_cluster_cost(a.labels, pt_costs, c.k)


def cost_of_clustering(ds: Dataset, a: Clustering) -> CostReport:
    """Cost of a clustering under its own means; empty clusters contribute 0."""
    zeros = CentroidSet(
        np.zeros((a.k, ds.d)), np.ones(a.k, dtype=bool), np.zeros(a.k)
    )
    return cost_of_pair(ds, means(ds, a, zeros), a)


# ---------------------------------------------------------------------------
# batch k-means


def lloyd_step(ds: Dataset, c: CentroidSet) -> CentroidSet:
    """One batch iteration: assign, then recompute means."""
    return means(ds, assign(ds, c), c)


def run_batch(ds: Dataset, c0: CentroidSet, max_iter: int) -> tuple[CentroidSet, RunTrace]:
    """Iterate Lloyd steps until the labeling repeats or the budget runs out.

    The trace records the cost of every distinct centroid set visited,
    starting with ``c0``; it is non-increasing.  ``trace.converged`` is
    False when ``max_iter`` stopped the run first.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    c = c0.copy()
    trace = RunTrace(converged=False)
    prev_labels = None
    for t in range(max_iter):
        a = assign(ds, c)
        trace.records.append(TraceRecord(t=t, phi=cost_of_pair(ds, c, a).total))
        if prev_labels is not None and np.array_equal(a.labels, prev_labels):
            trace.converged = True
            break
        c_new = means(ds, a, c)
        if np.array_equal(c_new.vectors, c.vectors) and np.array_equal(c_new.active, c.active):
            trace.converged = True
            c = c_new
            break
        prev_labels = a.labels
        c = c_new
    return c, trace


# ---------------------------------------------------------------------------
# centroid set serialization


def write_centroids_csv(c: CentroidSet, path) -> None:
    """Write one centroid per CSV row; the active mask goes to ``<path>.active``."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in c.vectors:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(f"{path}.active", "w", encoding="utf-8") as fh:
        fh.write(",".join("1" if flag else "0" for flag in c.active) + "\n")


def read_centroids_csv(path) -> CentroidSet:
    """Read centroids written by :func:`write_centroids_csv`.

    A missing sidecar mask means every centroid is active.
    """
    from .dataset import load_dense_csv

    vectors = load_dense_csv(path).to_dense()
    active = None
    try:
        with open(f"{path}.active", "r", encoding="utf-8") as fh:
            active = np.array(
                [tok.strip() == "1" for tok in fh.read().strip().split(",")], dtype=bool
            )
    except FileNotFoundError:
        pass
    return CentroidSet.from_vectors(vectors, active)
