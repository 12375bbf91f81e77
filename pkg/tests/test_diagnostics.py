import itertools

import numpy as np
import pytest

from conftest import random_instance
from skm.dataset import Dataset
from skm.diagnostics import (
    Matching,
    centroidal_distance,
    clust_dist,
    clusterability,
    estimate_attraction_radius,
    is_boundary,
    is_stationary,
    margin,
    pair_margins,
    update_probability,
)
from skm.geometry import (
    CentroidSet,
    Clustering,
    assign,
    cost,
    cost_of_clustering,
    means,
    rel_slack,
)


def brute_delta(c_prime, c_ref, weights):
    """Exhaustive minimum over all injections of reference rows into columns."""
    rows = c_ref.active_indices()
    cols = c_prime.active_indices()
    best = np.inf
    for perm in itertools.permutations(cols.tolist(), rows.size):
        total = sum(
            weights[r] * float(((c_prime.vectors[p] - c_ref.vectors[r]) ** 2).sum())
            for r, p in zip(rows.tolist(), perm)
        )
        best = min(best, total)
    return best


class TestCentroidalDistance:
    def test_zero_on_identical_sets(self):
        c = CentroidSet.from_vectors([[1.0, 2.0], [3.0, 4.0]])
        m = centroidal_distance(c, c, [3, 5])
        assert m.value == 0.0
        assert m.permutation.tolist() == [0, 1]

    def test_two_ways_hand_example(self):
        ref = CentroidSet.from_vectors([[0.0], [10.0]])
        new = CentroidSet.from_vectors([[1.0], [9.0]])
        m = centroidal_distance(new, ref, [2, 2])
        # identity matching: 2*1 + 2*1 = 4 beats the swap's 2*81 + 2*81
        assert m.value == pytest.approx(4.0, abs=1e-12)
        assert m.permutation.tolist() == [0, 1]

    def test_matches_permutation_brute_force_k4(self):
        rng = np.random.default_rng(30)
        for _ in range(50):
            d = int(rng.integers(1, 4))
            ref = CentroidSet.from_vectors(rng.standard_normal((4, d)))
            new = CentroidSet.from_vectors(rng.standard_normal((4, d)))
            w = rng.integers(1, 10, size=4).astype(float)
            got = centroidal_distance(new, ref, w).value
            want = brute_delta(new, ref, w)
            assert abs(got - want) <= 1e-12 * (1 + abs(want))

    def test_invariant_under_relabeling_of_compared_set(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            d = 2
            ref = CentroidSet.from_vectors(rng.standard_normal((3, d)))
            vecs = rng.standard_normal((3, d))
            w = rng.integers(1, 5, size=3).astype(float)
            base = centroidal_distance(CentroidSet.from_vectors(vecs), ref, w).value
            perm = rng.permutation(3)
            shuffled = centroidal_distance(
                CentroidSet.from_vectors(vecs[perm]), ref, w
            ).value
            assert abs(base - shuffled) <= 1e-12 * (1 + abs(base))

    def test_degenerate_columns_ignored(self):
        ref = CentroidSet.from_vectors([[0.0]])
        new = CentroidSet.from_vectors([[100.0], [0.5]], active=[False, True])
        m = centroidal_distance(new, ref, [4])
        assert m.value == pytest.approx(4 * 0.25, abs=1e-12)
        assert m.permutation.tolist() == [1]

    def test_fewer_active_in_compared_set_rejected(self):
        ref = CentroidSet.from_vectors([[0.0], [1.0]])
        new = CentroidSet.from_vectors([[0.0], [1.0]], active=[True, False])
        with pytest.raises(ValueError, match="fewer"):
            centroidal_distance(new, ref, [1, 1])


class TestClustDist:
    def test_identical_clusterings(self):
        a = Clustering.from_labels([0, 0, 1, 1], 2)
        m = Matching(permutation=np.array([0, 1]), value=0.0)
        assert clust_dist(a, a, m) == 0.0

    def test_one_moved_point(self):
        # reference: cluster 0 has 4 points, cluster 1 has 2; move point 3
        ref = Clustering.from_labels([0, 0, 0, 0, 1, 1], 2)
        new = Clustering.from_labels([0, 0, 0, 1, 1, 1], 2)
        m = Matching(permutation=np.array([0, 1]), value=0.0)
        assert clust_dist(new, ref, m) == pytest.approx(0.5)

    def test_total_swap_absorbed_by_matching(self):
        ref = Clustering.from_labels([0, 0, 1, 1], 2)
        new = Clustering.from_labels([1, 1, 0, 0], 2)
        m = Matching(permutation=np.array([1, 0]), value=0.0)
        assert clust_dist(new, ref, m) == 0.0

    def test_size_mismatch_rejected(self):
        a = Clustering.from_labels([0, 1], 2)
        b = Clustering.from_labels([0, 1, 0], 2)
        with pytest.raises(ValueError, match="different numbers"):
            clust_dist(a, b, Matching(permutation=np.array([0, 1]), value=0.0))

    def test_lex_tiebreak_picks_smallest_matching(self):
        # two equal-weight, symmetric centroid pairs admit two optimal
        # matchings; the lexicographic rule keeps the identity
        ref = CentroidSet.from_vectors([[0.0], [1.0]])
        new = CentroidSet.from_vectors([[0.5], [0.5]])
        m = centroidal_distance(new, ref, [2, 2], lex_tiebreak=True)
        assert m.permutation.tolist() == [0, 1]


class TestMargin:
    def test_line4_midpoints(self, line4, line4_cmid):
        rep = margin(line4, line4_cmid)
        assert rep.delta == pytest.approx(3.0, abs=1e-12)
        assert rep.point in (1, 2)
        assert not rep.boundary

    def test_point_on_bisector_gives_zero(self):
        ds = Dataset.from_dense([[2.5]])
        c = CentroidSet.from_vectors([[0.0], [5.0]])
        rep = margin(ds, c)
        assert rep.delta == pytest.approx(0.0, abs=1e-12)
        assert rep.boundary

    def test_symmetric_in_pair_order(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            ds, _ = random_instance(rng, n=8, d=2, k=2)
            c = CentroidSet.from_vectors(rng.standard_normal((2, 2)))
            swapped = CentroidSet.from_vectors(c.vectors[::-1].copy())
            a = margin(ds, c).delta
            b = margin(ds, swapped).delta
            assert abs(a - b) <= 1e-9 * (1 + abs(a))

    def test_coincident_centroids_rejected(self, line4):
        c = CentroidSet.from_vectors([[1.0], [1.0]])
        with pytest.raises(ValueError, match="coincide"):
            margin(line4, c)

    def test_needs_two_active(self, line4):
        c = CentroidSet.from_vectors([[1.0]])
        with pytest.raises(ValueError, match="two active"):
            margin(line4, c)


class TestBoundary:
    def test_separated_points(self):
        ds = Dataset.from_dense([[0.0], [5.0]])
        c = CentroidSet.from_vectors([[0.0], [5.0]])
        assert not is_boundary(ds, c)
        assert margin(ds, c).delta == pytest.approx(5.0, abs=1e-12)

    def test_bisector_point(self):
        ds = Dataset.from_dense([[2.5]])
        c = CentroidSet.from_vectors([[0.0], [5.0]])
        assert is_boundary(ds, c)

    def test_tolerance_semantics(self):
        ds = Dataset.from_dense([[0.0], [5.0]])
        c = CentroidSet.from_vectors([[0.0], [5.0]])
        assert is_boundary(ds, c, tol=10.0)

    def test_zero_margin_iff_two_cominimal_centroids(self):
        # constructed boundary instance: a point equidistant from both
        ds = Dataset.from_dense([[0.0, 1.0], [4.0, 1.0], [2.0, 5.0]])
        c = CentroidSet.from_vectors([[0.0, 1.0], [4.0, 1.0]])
        dists = ((ds.to_dense()[:, None, :] - c.vectors[None, :, :]) ** 2).sum(-1)
        cominimal = np.isclose(dists[:, 0], dists[:, 1]).any()
        assert cominimal == is_boundary(ds, c, tol=1e-12)


class TestStationarity:
    def test_fixed_point(self, line4, line4_cmid):
        rep = is_stationary(line4, line4_cmid)
        assert rep.is_stationary and rep.drift == 0.0

    def test_non_stationary_with_hand_drift(self, line4, line4_c05):
        rep = is_stationary(line4, line4_c05)
        assert not rep.is_stationary
        assert rep.drift == pytest.approx(1.0, abs=1e-12)  # 2*0.25 + 2*0.25

    def test_global_optima_are_stationary_exhaustively(self):
        rng = np.random.default_rng(33)
        for _ in range(25):
            n = int(rng.integers(2, 9))
            d = int(rng.integers(1, 3))
            ds = Dataset.from_dense(rng.random((n, d)) * 10)
            best, best_cost = None, np.inf
            for labels in itertools.product(range(2), repeat=n):
                a = Clustering.from_labels(list(labels), 2)
                c_val = cost_of_clustering(ds, a).total
                if c_val < best_cost:
                    best_cost, best = c_val, a
            zeros = CentroidSet.from_vectors(np.zeros((2, d)))
            c_star = means(ds, best, zeros)
            assert is_stationary(ds, c_star).is_stationary

    def test_radius_estimate_positive_on_separated_clusters(self, line4, line4_cmid):
        r = estimate_attraction_radius(line4, line4_cmid, np.random.default_rng(0))
        assert r > 0.0


class TestObjectiveGapBound:
    def test_cost_gap_bounded_by_centroidal_distance(self):
        # for stationary C*: phi(C) - phi* <= distance(C, C*) for any C
        rng = np.random.default_rng(34)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            d = int(rng.integers(1, 3))
            ds = Dataset.from_dense(rng.random((n, d)) * 10)
            best, best_cost = None, np.inf
            for labels in itertools.product(range(2), repeat=n):
                a = Clustering.from_labels(list(labels), 2)
                c_val = cost_of_clustering(ds, a).total
                if c_val < best_cost:
                    best_cost, best = c_val, a
            zeros = CentroidSet.from_vectors(np.zeros((2, d)))
            c_star = means(ds, best, zeros)
            phi_star = cost(ds, c_star).total
            w = assign(ds, c_star).sizes
            for _ in range(100):
                c = CentroidSet.from_vectors(rng.random((2, d)) * 10)
                delta = centroidal_distance(c, c_star, w).value
                gap = cost(ds, c).total - phi_star
                assert gap <= delta + rel_slack(delta)


class TestClusterability:
    def test_singleton_clusters_zero_cost_always_satisfied(self):
        ds = Dataset.from_dense([[0.0], [7.0]])
        c = CentroidSet.from_vectors([[0.0], [7.0]])
        rep = clusterability(ds, c, alpha=0.5)
        assert rep.phi == 0.0
        assert rep.f_max == np.inf
        assert rep.satisfied

    def test_fmax_inverts_margin_inequality(self):
        # two equal clusters of two points each
        ds = Dataset.from_dense([[0.0], [1.0], [10.0], [11.0]])
        c = CentroidSet.from_vectors([[0.5], [10.5]])
        rep = clusterability(ds, c, alpha=0.5)
        delta = margin(ds, c).delta
        want = delta / (np.sqrt(rep.phi) * (2 / np.sqrt(2)))
        assert rep.f_max == pytest.approx(want, rel=1e-12)
        assert rep.p_min == pytest.approx(0.5)

    def test_w_min_one_when_points_equidistant(self):
        ds = Dataset.from_dense([[-1.0, 0.0], [1.0, 0.0], [9.0, 0.0], [11.0, 0.0]])
        c = CentroidSet.from_vectors([[0.0, 0.0], [10.0, 0.0]])
        rep = clusterability(ds, c, alpha=0.5)
        assert rep.w_min == pytest.approx(1.0)

    def test_floor_values(self):
        ds = Dataset.from_dense([[0.0], [1.0], [10.0], [11.0], [12.0]])
        c = CentroidSet.from_vectors([[0.5], [11.0]])
        rep = clusterability(ds, c, alpha=0.5)
        assert rep.floor_no_ratio == max(64.0**2, 7.5 / (256 * 0.5))
        assert rep.floor == max(rep.floor_no_ratio, 3 / 2)

    def test_warns_on_non_stationary_input(self, line4, line4_c05):
        with pytest.warns(UserWarning, match="non-stationary"):
            clusterability(line4, line4_c05, alpha=0.5)

    def test_empty_active_cluster_rejected(self):
        ds = Dataset.from_dense([[0.0], [1.0]])
        c = CentroidSet.from_vectors([[0.5], [100.0]])
        with pytest.raises(ValueError, match="owns no points"):
            clusterability(ds, c, alpha=0.5)


class TestUpdateProbability:
    def test_trivial_values(self):
        assert update_probability(2, 4, 1) == 0.5
        assert update_probability(2, 4, 2) == 0.75
        assert update_probability(0, 4, 1) == 0.0
        assert update_probability(0, 4, 50) == 0.0

    def test_monotone_in_size_and_batch(self):
        for n in (10, 100):
            vals_m = [update_probability(3, n, m) for m in range(1, 30)]
            assert all(a <= b for a, b in zip(vals_m, vals_m[1:]))
            vals_r = [update_probability(r, n, 5) for r in range(n + 1)]
            assert all(a <= b for a, b in zip(vals_r, vals_r[1:]))

    def test_limit_is_one(self):
        assert update_probability(1, 100, 10_000) == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            update_probability(5, 4, 1)
        with pytest.raises(ValueError):
            update_probability(1, 4, 0)
