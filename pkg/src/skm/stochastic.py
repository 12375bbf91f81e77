"""Mini-batch k-means: sampling, interpolation updates, and learning rates.

Each iteration draws m points uniformly at random *with replacement*,
assigns the whole batch against the previous centroids, and moves every
sampled centroid toward its batch mean by a convex interpolation

    c_r <- (1 - eta) * c_r + eta * chat_r,   eta in (0, 1].

Clusters the batch missed are left bitwise unchanged (their counters do
not advance either).  Online k-means is the ``m=1`` special case; with
the count-adaptive rate, each centroid is exactly the running mean of
the samples ever assigned to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .geometry import (
    CentroidSet,
    Clustering,
    assign,
    cluster_sums,
    cost,
    nearest_centroids,
)
from .trace import RunTrace, TraceRecord


# ---------------------------------------------------------------------------
# learning-rate schedules


class FlatRate:
    """eta^t = min(1, c' / (t0 + t)), shared by every cluster.

    The clamp at 1 keeps each update a convex combination.
    """

    kind = "flat"

    def __init__(self, c_prime: float, t0: float):
        if not c_prime > 0:
            raise ValueError("c_prime must be positive")
        if t0 < 0:
            raise ValueError("t0 must be non-negative")
        self.c_prime = float(c_prime)
        self.t0 = float(t0)

    def rate(self, t: int, r: int, nhat: int) -> float:
        _check_hit(nhat)
        return min(1.0, self.c_prime / (self.t0 + t))

    def fresh(self) -> "FlatRate":
        return self

    def expected_k(self) -> int | None:
        return None

    def __repr__(self):
        return f"FlatRate(c_prime={self.c_prime}, t0={self.t0})"


class CountRate:
    """Per-cluster adaptive rate eta_r = nhat_r / (cumulative hits of r).

    The cumulative counter advances only when the cluster is actually
    sampled, so the first hit gets eta = 1 and thereafter each centroid
    is the running mean of every sample assigned to it.
    """

    kind = "count"

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)
        self.counts = np.zeros(self.k, dtype=np.int64)

    def rate(self, t: int, r: int, nhat: int) -> float:
        _check_hit(nhat)
        self.counts[r] += nhat
        return nhat / self.counts[r]

    def fresh(self) -> "CountRate":
        return CountRate(self.k)

    def expected_k(self) -> int | None:
        return self.k

    def __repr__(self):
        return f"CountRate(k={self.k})"


class ConstantRate:
    """Fixed eta in (0, 1] for every cluster and iteration."""

    kind = "const"

    def __init__(self, eta: float):
        if not 0.0 < eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        self.eta = float(eta)

    def rate(self, t: int, r: int, nhat: int) -> float:
        _check_hit(nhat)
        return self.eta

    def fresh(self) -> "ConstantRate":
        return self

    def expected_k(self) -> int | None:
        return None

    def __repr__(self):
        return f"ConstantRate(eta={self.eta})"


RateSchedule = FlatRate | CountRate | ConstantRate


def _check_hit(nhat: int) -> None:
    if nhat < 1:
        raise ValueError("rate is only defined for clusters with nhat >= 1")


def rate(schedule: RateSchedule, t: int, r: int, nhat: int) -> float:
    """Learning rate for cluster r at iteration t given nhat sampled hits."""
    return schedule.rate(t, r, nhat)


# ---------------------------------------------------------------------------
# mini-batch statistics


@dataclass
class MiniBatchStat:
    """Summary of one sampled batch against the current centroids."""

    indices: np.ndarray
    counts: np.ndarray
    means: np.ndarray

    @property
    def m(self) -> int:
        return self.indices.shape[0]


def _batch_stat(ds: Dataset, c: CentroidSet, idx: np.ndarray) -> MiniBatchStat:
    labels = nearest_centroids(ds, c, idx)
    counts = np.bincount(labels, minlength=c.k).astype(np.int64)
    sums = cluster_sums(ds.rows(idx), labels, c.k)
    mns = np.zeros_like(sums)
    hit = counts > 0
    mns[hit] = sums[hit] / counts[hit, None]
    return MiniBatchStat(indices=idx, counts=counts, means=mns)


def sample_minibatch(rng: np.random.Generator, ds: Dataset, c: CentroidSet, m: int) -> MiniBatchStat:
    """Draw m points uniformly with replacement and summarize them per cluster."""
    if m < 1:
        raise ValueError("m must be >= 1")
    idx = rng.integers(0, ds.n, size=m)
    return _batch_stat(ds, c, idx)


def full_batch_stat(ds: Dataset, c: CentroidSet) -> MiniBatchStat:
    """Deterministic batch containing every point exactly once.

    Test-mode plumbing: with eta = 1 the resulting update reproduces one
    Lloyd step on the active clusters.
    """
    return _batch_stat(ds, c, np.arange(ds.n, dtype=np.int64))


# ---------------------------------------------------------------------------
# the update


def applied_rates(schedule: RateSchedule, stat: MiniBatchStat, t: int) -> np.ndarray:
    """Per-cluster rates for this batch; clusters with no hits get 0 (no-op)."""
    k = stat.counts.shape[0]
    expected = schedule.expected_k()
    if expected is not None and expected != k:
        raise ValueError(
            f"schedule tracks {expected} clusters but the batch has {k}"
        )
    rates = np.zeros(k, dtype=np.float64)
    for r in np.nonzero(stat.counts > 0)[0]:
        rates[r] = schedule.rate(t, int(r), int(stat.counts[r]))
    return rates


def apply_update(c: CentroidSet, stat: MiniBatchStat, rates: np.ndarray) -> CentroidSet:
    """Interpolate sampled centroids toward their batch means; others untouched."""
    vectors = c.vectors.copy()
    for r in np.nonzero(stat.counts > 0)[0]:
        eta = rates[r]
        vectors[r] = (1.0 - eta) * vectors[r] + eta * stat.means[r]
    sq = np.einsum("ij,ij->i", vectors, vectors)
    return CentroidSet(vectors, c.active.copy(), sq)


def stochastic_step(
    ds: Dataset,
    c: CentroidSet,
    stat: MiniBatchStat,
    schedule: RateSchedule,
    t: int,
) -> CentroidSet:
    """One mini-batch update against centroids ``c`` (which produced ``stat``).

    Active flags never change here: a degenerate centroid stays frozen
    rather than being relocated.
    """
    return apply_update(c, stat, applied_rates(schedule, stat, t))


# ---------------------------------------------------------------------------
# full runs


@dataclass
class RunConfig:
    """Budget, batch size, schedule, and evaluation cadence for one run."""

    m: int
    iters: int
    schedule: RateSchedule
    seed: int
    eval_every: int = 1
    full_batch: bool = False
    log_centroids: bool = False

    @classmethod
    def from_epochs(
        cls, m: int, epochs: int, epoch_len: int, schedule: RateSchedule, seed: int, **kw
    ) -> "RunConfig":
        kw.setdefault("eval_every", epoch_len)
        return cls(m=m, iters=epochs * epoch_len, schedule=schedule, seed=seed, **kw)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


def run_stochastic(
    ds: Dataset,
    c0: CentroidSet,
    config: RunConfig,
    reference: CentroidSet | None = None,
) -> tuple[CentroidSet, RunTrace]:
    """Run ``config.iters`` mini-batch iterations from ``c0``.

    Deterministic given (config.seed, config).  The trace holds a t=0
    record with the initial cost, then one record per evaluation point
    (every ``eval_every`` iterations, plus the final iteration).  When a
    reference centroid set is given, each evaluated record also carries
    the centroidal distance to it.
    """
    if ds.d != c0.d:
        raise ValueError("dataset and centroids disagree on dimension")
    rng = np.random.default_rng(config.seed)
    schedule = config.schedule.fresh()
    expected = schedule.expected_k()
    if expected is not None and expected != c0.k:
        raise ValueError(f"schedule tracks {expected} clusters but k={c0.k}")

    ref_weights = None
    if reference is not None:
        ref_weights = assign(ds, reference).sizes

    c = c0.copy()
    k = c.k
    trace = RunTrace(centroid_log=[] if config.log_centroids else None)
    trace.records.append(
        TraceRecord(
            t=0,
            phi=cost(ds, c).total,
            eta=np.zeros(k),
            nhat=np.zeros(k, dtype=np.int64),
            delta=_ref_delta(c, reference, ref_weights),
        )
    )
    for t in range(1, config.iters + 1):
        if config.full_batch:
            stat = full_batch_stat(ds, c)
        else:
            stat = sample_minibatch(rng, ds, c, config.m)
        rates = applied_rates(schedule, stat, t)
        c = apply_update(c, stat, rates)
        if config.log_centroids:
            trace.centroid_log.append(c.vectors.copy())
        if t % config.eval_every == 0 or t == config.iters:
            trace.records.append(
                TraceRecord(
                    t=t,
                    phi=cost(ds, c).total,
                    eta=rates,
                    nhat=stat.counts,
                    delta=_ref_delta(c, reference, ref_weights),
                )
            )
    return c, trace


def _ref_delta(c, reference, ref_weights):
    if reference is None:
        return None
    from .diagnostics import centroidal_distance

    return centroidal_distance(c, reference, ref_weights).value


def run_online_kmeans(
    ds: Dataset,
    c0: CentroidSet,
    iters: int,
    seed: int,
    log_centroids: bool = False,
) -> tuple[CentroidSet, RunTrace]:
    """Counting-form online k-means, kept as an independent equivalence oracle.

    One point per iteration; the winning centroid moves by
    ``w <- w + (x - w) / N`` where N counts that cluster's hits so far.
    Draws follow the same stream as :func:`run_stochastic` with m=1, so
    matching seeds give matching sample sequences.  Distances here are
    computed directly, not through the expanded form.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    w = c0.vectors.copy()
    active = c0.active.copy()
    hits = np.zeros(c0.k, dtype=np.int64)
    trace = RunTrace(centroid_log=[] if log_centroids else None)
    trace.records.append(
        TraceRecord(t=0, phi=cost(ds, c0).total, eta=np.zeros(c0.k), nhat=hits.copy())
    )
    for t in range(1, iters + 1):
        i = int(rng.integers(0, ds.n, size=1)[0])
        x = ds.rows_dense(np.array([i]))[0]
        diffs = w - x
        dists = np.einsum("ij,ij->i", diffs, diffs)
        dists[~active] = np.inf
        r = int(np.argmin(dists))
        hits[r] += 1
        w[r] += (x - w[r]) / hits[r]
        if log_centroids:
            trace.centroid_log.append(w.copy())
        eta = np.zeros(c0.k)
        eta[r] = 1.0 / hits[r]
        nhat = np.zeros(c0.k, dtype=np.int64)
        nhat[r] = 1
        out = CentroidSet(w.copy(), active.copy(), np.einsum("ij,ij->i", w, w))
        trace.records.append(TraceRecord(t=t, phi=cost(ds, out).total, eta=eta, nhat=nhat))
    final = CentroidSet(w, active, np.einsum("ij,ij->i", w, w))
    return final, trace
