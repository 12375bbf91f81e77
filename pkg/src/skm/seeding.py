"""Centroid initialization: uniform random data points and buckshot seeding.

Buckshot draws a small sample with replacement, runs single-linkage
agglomeration down to k connected components, and seeds each centroid at
a component mean.  The sample size stays small by design, so the
implementation uses the full O(m0^2) distance matrix with an
active-component min-scan rather than any spatial index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .geometry import CentroidSet


@dataclass(frozen=True)
class SeedConfig:
    """Which seeding method to run and with what parameters."""

    method: str  # "random_points" | "buckshot"
    k: int
    m0: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("random_points", "buckshot"):
            raise ValueError(f"unknown seeding method {self.method!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.method == "buckshot":
            if self.m0 is None or self.m0 < self.k:
                raise ValueError("buckshot needs m0 >= k")


def make_seeds(ds: Dataset, config: SeedConfig) -> CentroidSet:
    rng = np.random.default_rng(config.seed)
    if config.method == "random_points":
        return random_seeds(rng, ds, config.k)
    return buckshot(rng, ds, config.k, config.m0)


def random_seeds(rng: np.random.Generator, ds: Dataset, k: int) -> CentroidSet:
    """k distinct data points chosen uniformly without replacement, all active."""
    if k > ds.n:
        raise ValueError(f"cannot draw k={k} distinct points from n={ds.n}")
    idx = rng.choice(ds.n, size=k, replace=False)
    return CentroidSet.from_vectors(ds.rows_dense(idx))


@dataclass
class SingleLinkageResult:
    """Partition into components plus the sequence of merge distances."""

    components: list[list[int]]
    merge_distances: list[float]


def single_linkage_components(points, k: int) -> SingleLinkageResult:
    """Agglomerate points down to exactly k components by single linkage.

    Repeatedly merges the two components at minimum inter-component
    distance (minimum pairwise Euclidean distance between members); ties
    break toward the smallest (i, j) component-index pair.  Duplicate
    points are distinct zero-distance items, so they merge first.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array")
    m = pts.shape[0]
    if m < k:
        raise ValueError(f"need at least k={k} points, got {m}")
    if k < 1:
        raise ValueError("k must be >= 1")

    # full pairwise distance matrix; inf marks self/inactive entries
    gram = pts @ pts.T
    sq = np.maximum(np.diag(gram)[:, None] - 2.0 * gram + np.diag(gram)[None, :], 0.0)
    dist = np.sqrt(sq)
    np.fill_diagonal(dist, np.inf)

    members: dict[int, list[int]] = {i: [i] for i in range(m)}
    merges: list[float] = []
    n_comp = m
    while n_comp > k:
        flat = int(np.argmin(dist))  # row-major argmin = lexicographically smallest pair
        i, j = divmod(flat, m)
        if i > j:
            i, j = j, i
        merges.append(float(dist[i, j]))
        members[i].extend(members[j])
        del members[j]
        # single linkage: distance to the merged component is the pairwise min
        np.minimum(dist[i], dist[j], out=dist[i])
        dist[:, i] = dist[i]
        dist[i, i] = np.inf
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        n_comp -= 1

    components = [sorted(v) for _, v in sorted(members.items())]
    return SingleLinkageResult(components=components, merge_distances=merges)


def buckshot(rng: np.random.Generator, ds: Dataset, k: int, m0: int) -> CentroidSet:
    """Sample m0 points with replacement, single-link to k components, seed at means."""
    if m0 < k:
        raise ValueError(f"buckshot needs m0 >= k, got m0={m0}, k={k}")
    idx = rng.integers(0, ds.n, size=m0)
    pts = ds.rows_dense(idx)
    result = single_linkage_components(pts, k)
    seeds = np.stack([pts[comp].mean(axis=0) for comp in result.components])
    return CentroidSet.from_vectors(seeds)
