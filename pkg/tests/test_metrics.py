import math

import numpy as np
import pytest

from resplat.metrics import (SimilarityCollector, displacement_percentiles,
                             nearest_rank_percentile, order_displacements,
                             psnr, retention_cdf, retention_fraction)


class TestPsnr:
    def test_identical_is_inf(self, rng):
        img = rng.uniform(0, 1, (16, 16, 3))
        assert psnr(img, img.copy()) == math.inf

    def test_black_vs_white_zero_db(self):
        a = np.zeros((8, 8, 3))
        b = np.ones((8, 8, 3))
        assert psnr(a, b) == pytest.approx(0.0)

    def test_uniform_offset_closed_form(self):
        a = np.full((8, 8, 3), 0.4)
        b = np.full((8, 8, 3), 0.5)
        assert psnr(a, b) == pytest.approx(20.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


class TestRetention:
    def test_identical_sets(self):
        assert retention_fraction([1, 2, 3], [1, 2, 3]) == 1.0

    def test_disjoint_sets(self):
        assert retention_fraction([1, 2], [3, 4]) == 0.0

    def test_half_retained(self):
        assert retention_fraction([1, 2, 3, 4], [1, 2, 9]) == 0.5

    def test_empty_prev_convention(self):
        assert retention_fraction([], [1, 2]) == 1.0


class TestDisplacements:
    def test_identical_orders_zero(self):
        assert displacement_percentiles([1, 2, 3], [1, 2, 3]) == (0.0, 0.0, 0.0)

    def test_spec_rotation_case(self):
        # prev [a,b,c,d] -> cur [d,a,b,c]: displacements {1,1,1,3}
        disp = order_displacements([10, 11, 12, 13], [13, 10, 11, 12])
        assert sorted(disp.tolist()) == [1, 1, 1, 3]
        assert displacement_percentiles([10, 11, 12, 13], [13, 10, 11, 12]) == (3, 3, 3)

    def test_no_shared_ids_reported_absent(self):
        assert displacement_percentiles([1, 2], [3, 4]) is None

    def test_insertions_do_not_count_as_movement(self):
        disp = order_displacements([1, 2, 3], [1, 99, 2, 98, 3])
        assert disp.tolist() == [0, 0, 0]

    def test_matches_bruteforce_on_random_permutations(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 4096))
            prev = rng.permutation(n)
            keep = rng.random(n) < 0.8
            cur = rng.permutation(prev[keep]) if keep.any() else np.empty(0, np.int64)
            got = order_displacements(prev, cur)
            # brute force: python dict ranks over shared ids
            shared = set(prev) & set(cur)
            p = [g for g in prev if g in shared]
            c = [g for g in cur if g in shared]
            rank_p = {g: i for i, g in enumerate(p)}
            want = [abs(rank_p[g] - i) for i, g in enumerate(c)]
            assert sorted(got.tolist()) == sorted(want)

    def test_nearest_rank_percentile_definition(self):
        values = np.array([1, 1, 1, 3])
        assert nearest_rank_percentile(values, 90) == 3
        assert nearest_rank_percentile(values, 75) == 1
        assert nearest_rank_percentile(values, 1) == 1


class TestCollector:
    def test_static_feed_gives_unit_retention(self):
        collector = SimilarityCollector()
        members = [np.array([1, 2, 3]), np.array([4, 5])]
        orders = [np.array([2, 1, 3]), np.array([5, 4])]
        for frame in range(3):
            collector.feed(frame, members, orders)
        report = collector.report()
        assert report["overall"]["retention_mean"] == 1.0
        assert report["overall"]["displacement_p99"] == 0.0
        assert len(report["frames"]) == 2

    def test_cdf_non_decreasing_ends_at_one(self, rng):
        collector = SimilarityCollector()
        for frame in range(6):
            members = [rng.choice(100, size=30, replace=False) for _ in range(5)]
            orders = [m[rng.permutation(30)] for m in members]
            collector.feed(frame, members, orders)
        report = collector.report()
        cum = report["retention_cdf"]["cum_fraction"]
        assert all(b >= a for a, b in zip(cum, cum[1:]))
        assert cum[-1] == pytest.approx(1.0)

    def test_empty_prev_counted_separately(self):
        collector = SimilarityCollector()
        collector.feed(0, [np.empty(0, np.int64)], [np.empty(0, np.int64)])
        collector.feed(1, [np.array([1])], [np.array([1])])
        report = collector.report()
        assert report["empty_prev_tiles"] == 1


def test_retention_cdf_empty():
    values, cum = retention_cdf(np.empty(0))
    assert values == [] and cum == []
