"""Analytical instruments for k-means solutions.

Centroidal distance between two centroid sets, clustering distance under
the matching that attains it, projected-distance margins, boundary and
stationarity detection, clusterability reports, and per-cluster update
probabilities.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .assignment import solve_assignment
from .dataset import Dataset
from .geometry import (
    CentroidSet,
    Clustering,
    assign,
    cost_of_pair,
    means,
    rel_slack,
)

LEX_TIEBREAK_MAX_K = 30


@dataclass
class Matching:
    """Optimal pairing of two centroid sets and its weighted distance.

    ``permutation[r]`` is the index in the compared set matched to
    centroid r of the reference set, or -1 where r is inactive.
    """

    permutation: np.ndarray
    value: float


def centroidal_distance(
    c_prime: CentroidSet,
    c_ref: CentroidSet,
    weights,
    lex_tiebreak: bool = False,
) -> Matching:
    """min over matchings of sum_r n_r ||c'_{pi(r)} - c_r||^2.

    ``weights`` are the cluster sizes induced by the reference set
    ``c_ref``; degenerate centroids on either side are ignored, and the
    comparison set must have at least as many active centroids as the
    reference.  With ``lex_tiebreak`` (used by :func:`clust_dist`), the
    lexicographically smallest matching among those attaining the
    minimum is returned, for active counts up to 30.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (c_ref.k,):
        raise ValueError("weights must give one cluster size per reference slot")
    if c_prime.d != c_ref.d:
        raise ValueError("centroid sets disagree on dimension")
    rows = c_ref.active_indices()
    cols = c_prime.active_indices()
    if cols.size < rows.size:
        raise ValueError(
            f"comparison set has {cols.size} active centroids, "
            f"fewer than the reference's {rows.size}; distance undefined"
        )
    diff_sq = (
        c_ref.sq_norms[rows][:, None]
        - 2.0 * c_ref.vectors[rows] @ c_prime.vectors[cols].T
        + c_prime.sq_norms[cols][None, :]
    )
    np.maximum(diff_sq, 0.0, out=diff_sq)
    matrix = weights[rows][:, None] * diff_sq
    sel, value = solve_assignment(matrix)
    if lex_tiebreak and rows.size <= LEX_TIEBREAK_MAX_K:
        sel = _lex_smallest_assignment(matrix, value)
        value = float(matrix[np.arange(rows.size), sel].sum())
    permutation = np.full(c_ref.k, -1, dtype=np.int64)
    permutation[rows] = cols[sel]
    return Matching(permutation=permutation, value=float(value))


def _lex_smallest_assignment(matrix: np.ndarray, optimum: float) -> np.ndarray:
    """Greedy row-by-row choice of the smallest column that stays optimal."""
    nr, nc = matrix.shape
    tol = rel_slack(optimum, 1e-12)
    remaining = list(range(nc))
    chosen = np.zeros(nr, dtype=np.int64)
    budget = optimum
    for r in range(nr):
        for pos, col in enumerate(remaining):
            rest_cols = remaining[:pos] + remaining[pos + 1 :]
            if r + 1 < nr:
                _, rest = solve_assignment(matrix[np.ix_(range(r + 1, nr), rest_cols)])
            else:
                rest = 0.0
            if matrix[r, col] + rest <= budget + tol:
                chosen[r] = col
                remaining = rest_cols
                budget -= matrix[r, col]
                break
        else:  # pragma: no cover - the optimum itself is always feasible
            raise AssertionError("no feasible column; assignment solver disagreed")
    return chosen


def clust_dist(a_prime: Clustering, a_ref: Clustering, matching: Matching) -> float:
    """max over matched clusters of |A'_{pi(r)} symdiff A_r| / n_r."""
    if a_prime.n != a_ref.n:
        raise ValueError("clusterings cover different numbers of points")
    worst = 0.0
    for r in range(a_ref.k):
        s = matching.permutation[r]
        if s < 0 or a_ref.sizes[r] == 0:
            continue
        in_ref = a_ref.labels == r
        in_prime = a_prime.labels == s
        inter = int(np.count_nonzero(in_ref & in_prime))
        sym = int(a_ref.sizes[r]) + int(a_prime.sizes[s]) - 2 * inter
        worst = max(worst, sym / int(a_ref.sizes[r]))
    return worst


# ---------------------------------------------------------------------------
# margins and boundary detection


@dataclass
class MarginReport:
    """Smallest projected-distance gap over all centroid pairs and points."""

    delta: float
    pair: tuple[int, int] | None
    point: int | None
    boundary: bool


def pair_margins(ds: Dataset, c: CentroidSet, a: Clustering | None = None):
    """Per-pair margins: for active (r, s), the minimum over x in A_r u A_s of
    ``| |tau| - |tau - L| |`` where tau is x's coordinate along the line from
    c_r to c_s and L the centroid distance.

    Returns ``{(r, s): (gap, point_index)}`` for r < s.  Raises on
    coincident centroids within an evaluated pair.
    """
    if a is None:
        a = assign(ds, c)
    act = c.active_indices()
    if act.size < 2:
        raise ValueError("margins need at least two active centroids")
    out: dict[tuple[int, int], tuple[float, int]] = {}
    for ai in range(act.size):
        for bi in range(ai + 1, act.size):
            r, s = int(act[ai]), int(act[bi])
            axis = c.vectors[s] - c.vectors[r]
            length = float(np.linalg.norm(axis))
            if length == 0.0:
                raise ValueError(f"centroids {r} and {s} coincide; margin undefined")
            u = axis / length
            pts_idx = np.nonzero((a.labels == r) | (a.labels == s))[0]
            if pts_idx.size == 0:
                continue
            rows = ds.rows(pts_idx)
            proj = rows @ u if isinstance(rows, np.ndarray) else np.asarray(rows @ u).ravel()
            tau = proj - float(c.vectors[r] @ u)
            gaps = np.abs(np.abs(tau) - np.abs(tau - length))
            j = int(np.argmin(gaps))
            out[(r, s)] = (float(gaps[j]), int(pts_idx[j]))
    return out


def margin(ds: Dataset, c: CentroidSet, tol: float = 0.0) -> MarginReport:
    """Global margin: the smallest per-pair gap; boundary iff delta <= tol."""
    margins = pair_margins(ds, c)
    if not margins:
        raise ValueError("no centroid pair owns any points")
    (r, s), (delta, point) = min(margins.items(), key=lambda kv: (kv[1][0], kv[0]))
    return MarginReport(delta=delta, pair=(r, s), point=point, boundary=delta <= tol)


def is_boundary(ds: Dataset, c: CentroidSet, tol: float = 0.0) -> bool:
    """True iff some point is (within tol) equidistant from two centroids."""
    return margin(ds, c, tol).boundary


# ---------------------------------------------------------------------------
# stationarity


@dataclass
class StationarityReport:
    is_stationary: bool
    drift: float
    boundary: bool
    r_min_estimate: float | None = None


def is_stationary(
    ds: Dataset,
    c: CentroidSet,
    tol: float = 1e-9,
    boundary_tol: float = 0.0,
) -> StationarityReport:
    """Check whether one batch step leaves ``c`` in place.

    Drift is the centroidal distance from the stepped set back to ``c``,
    weighted by ``c``'s cluster sizes; stationarity holds when drift is
    at most ``tol * (1 + cost(c))``.  The definitions are exact and
    floating point needs this slack.
    """
    a = assign(ds, c)
    stepped = means(ds, a, c)
    drift = centroidal_distance(stepped, c, a.sizes).value
    phi = cost_of_pair(ds, c, a).total
    try:
        bdry = is_boundary(ds, c, boundary_tol)
    except ValueError:
        bdry = False  # fewer than two active centroids: no bisector to sit on
    return StationarityReport(
        is_stationary=drift <= tol * (1.0 + phi),
        drift=float(drift),
        boundary=bdry,
    )


def estimate_attraction_radius(
    ds: Dataset,
    c: CentroidSet,
    rng: np.random.Generator,
    trials: int = 20,
    grid: int = 24,
) -> float:
    """Empirical estimate (not a certificate) of the attraction radius.

    Searches over relative radii b for the largest value such that every
    random perturbation with weighted displacement b * cost(c) still
    induces the same clustering.  Returns 0.0 when even the smallest
    probed radius fails.
    """
    a = assign(ds, c)
    phi = cost_of_pair(ds, c, a).total
    if phi <= 0.0:
        return 0.0
    weights = np.maximum(a.sizes.astype(np.float64), 1.0)
    base = a.labels
    radii = np.logspace(-6, 1, grid)
    best = 0.0
    for b in radii:
        ok = True
        for _ in range(trials):
            direction = rng.standard_normal(c.vectors.shape)
            scale = np.sqrt(
                b * phi / float((weights[:, None] * direction**2).sum())
            )
            perturbed = CentroidSet.from_vectors(
                c.vectors + scale * direction, c.active.copy()
            )
            if not np.array_equal(assign(ds, perturbed).labels, base):
                ok = False
                break
        if ok:
            best = float(b)
        else:
            break
    return best


# ---------------------------------------------------------------------------
# clusterability


@dataclass
class ClusterabilityReport:
    """Margin-based separation report for a stationary solution.

    ``f_max`` is the largest f with margin >= f * sqrt(phi) * (1/sqrt(n_r)
    + 1/sqrt(n_s)) for every active pair; it must exceed ``floor`` for the
    separation test to pass.  ``floor_no_ratio`` drops the cluster-size
    ratio term from the floor and is reported alongside.
    """

    phi: float
    margins: dict[tuple[int, int], float]
    f_max: float
    floor: float
    floor_no_ratio: float
    satisfied: bool
    p_min: float
    w_min: float
    input_stationary: bool

    def to_json(self) -> str:
        doc = {
            "phi": self.phi,
            "margins": {f"{r},{s}": v for (r, s), v in sorted(self.margins.items())},
            "f_max": self.f_max,
            "floor": self.floor,
            "floor_no_ratio": self.floor_no_ratio,
            "satisfied": self.satisfied,
            "p_min": self.p_min,
            "w_min": self.w_min,
            "input_stationary": self.input_stationary,
        }
        return json.dumps(doc, sort_keys=True)


def clusterability(ds: Dataset, c_star: CentroidSet, alpha: float) -> ClusterabilityReport:
    """Clusterability of (dataset, solution) at strength parameter alpha.

    Warns when ``c_star`` is not stationary; the quantities are still
    computed.  Raises when an active cluster is empty.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    a = assign(ds, c_star)
    act = c_star.active_indices()
    sizes = a.sizes
    if np.any(sizes[act] == 0):
        raise ValueError("active cluster owns no points; size ratios undefined")

    stat = is_stationary(ds, c_star)
    if not stat.is_stationary:
        warnings.warn("clusterability evaluated at a non-stationary solution")

    report = cost_of_pair(ds, c_star, a)
    phi = report.total
    margins = {pair: gap for pair, (gap, _) in pair_margins(ds, c_star, a).items()}

    f_max = np.inf
    for (r, s), gap in margins.items():
        denom = np.sqrt(phi) * (1.0 / np.sqrt(sizes[r]) + 1.0 / np.sqrt(sizes[s]))
        if denom > 0.0:
            f_max = min(f_max, gap / denom)

    size_f = sizes[act].astype(np.float64)
    ratio = float(size_f.max() / size_f.min()) if act.size > 1 else 1.0
    floor_no_ratio = max(64.0**2, (5.0 * alpha + 5.0) / (256.0 * alpha))
    floor = max(floor_no_ratio, ratio)

    p_min = float(size_f.min() / ds.n)
    w_min = _min_spread_ratio(ds, c_star, a, report.per_cluster)

    return ClusterabilityReport(
        phi=float(phi),
        margins=margins,
        f_max=float(f_max),
        floor=float(floor),
        floor_no_ratio=float(floor_no_ratio),
        satisfied=bool(f_max > floor),
        p_min=p_min,
        w_min=w_min,
        input_stationary=stat.is_stationary,
    )


def _min_spread_ratio(ds, c, a, per_cluster_cost) -> float:
    """min_r (mean squared radius of cluster r) / (max squared radius of r).

    Clusters whose points all sit on the centroid count as ratio 1.
    """
    w_min = np.inf
    cross = ds.matmul(c.vectors.T)
    for r in c.active_indices():
        mask = a.labels == r
        if not mask.any():
            continue
        sqd = ds.sq_norms[mask] - 2.0 * cross[mask, r] + c.sq_norms[r]
        np.maximum(sqd, 0.0, out=sqd)
        peak = float(sqd.max())
        if peak == 0.0:
            w_r = 1.0
        else:
            w_r = (float(per_cluster_cost[r]) / int(a.sizes[r])) / peak
        w_min = min(w_min, w_r)
    return float(w_min)


# ---------------------------------------------------------------------------
# update probability


def update_probability(n_r: int, n: int, m: int) -> float:
    """Chance that a cluster of size n_r is hit by a batch of m uniform draws."""
    if n < 1 or not 0 <= n_r <= n:
        raise ValueError("need 0 <= n_r <= n with n >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    return 1.0 - (1.0 - n_r / n) ** m
