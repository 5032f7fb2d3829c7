from fractions import Fraction

import numpy as np
import pytest

from vaeverif.evaluation import (
    CostParams,
    MetricError,
    compute_eer,
    compute_min_dcf,
    det_points,
)

from sweep import brute_eer, brute_min_dcf

SIX_SCORES = [0.9, 0.8, 0.3, 0.7, 0.2, 0.1]
SIX_LABELS = ["target"] * 3 + ["impostor"] * 3


def random_trials(rng, n_max=30):
    n_tar, n_non = rng.integers(1, n_max, size=2)
    # coarse grid forces ties between and within classes
    scores = rng.integers(0, 12, size=n_tar + n_non) / 4.0
    labels = [True] * n_tar + [False] * n_non
    return scores.tolist(), labels


class TestEer:
    def test_perfect_separation(self):
        assert compute_eer([1, 1, 0, 0], [1, 1, 0, 0])[0] == 0.0

    def test_full_tie_is_chance(self):
        assert compute_eer([0.5] * 6, [1, 0, 1, 0, 1, 0])[0] == 0.5

    def test_six_trial_example(self):
        eer, _ = compute_eer(SIX_SCORES, SIX_LABELS)
        assert eer == float(brute_eer(SIX_SCORES, [1, 1, 1, 0, 0, 0]))
        assert eer == pytest.approx(1 / 3)

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s, y = random_trials(rng)
            assert compute_eer(s, y)[0] == pytest.approx(float(brute_eer(s, y)), abs=1e-15)

    def test_single_class(self):
        with pytest.raises(MetricError, match="undefined EER"):
            compute_eer([0.1, 0.2], ["target", "target"])

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            compute_eer([0.1], [1, 0])

    def test_bad_label(self):
        with pytest.raises(MetricError):
            compute_eer([0.1, 0.2], ["target", "unknown"])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(1)
        s, y = rng.normal(size=40), rng.random(40) < 0.5
        perm = rng.permutation(40)
        assert compute_eer(s, y) == compute_eer(s[perm], y[perm])


class TestMinDcf:
    def test_perfect_separation(self):
        assert compute_min_dcf([2.0, 1.0], [1, 0])[0] == 0.0

    def test_reject_all_point_costs_one(self):
        # the +inf threshold rejects everything: normalized cost exactly 1
        scores = [0.1, 0.2, 0.9]
        labels = [1, 1, 0]
        value, threshold = compute_min_dcf(scores, labels)
        assert value == 1.0 and threshold == np.inf

    def test_six_trial_example(self):
        got = compute_min_dcf(SIX_SCORES, SIX_LABELS, CostParams(1, 1, 0.001))[0]
        assert got == pytest.approx(float(brute_min_dcf(SIX_SCORES, [1, 1, 1, 0, 0, 0])),
                                    rel=1e-15)

    def test_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            s, y = random_trials(rng)
            p = Fraction(rng.integers(1, 99), 100)
            got = compute_min_dcf(s, y, CostParams(2.0, 1.0, float(p)))[0]
            assert got == pytest.approx(float(brute_min_dcf(s, y, 2, 1, p)), rel=1e-12)

    def test_unnormalized(self):
        got = compute_min_dcf([0.1, 0.2, 0.9], [1, 1, 0], CostParams(1, 1, 0.5, normalized=False))
        assert got[0] == 0.5

    def test_not_above_cost_at_eer_threshold(self):
        rng = np.random.default_rng(3)
        s, y = rng.normal(size=200) + np.repeat([1.0, 0.0], 100), np.repeat([1, 0], 100)
        costs = CostParams(p_target=0.1)
        _, thr = compute_eer(s, y)
        miss = np.mean(s[y == 1] < thr)
        fa = np.mean(s[y == 0] >= thr)
        at_eer = (0.1 * miss + 0.9 * fa) / 0.1
        assert compute_min_dcf(s, y, costs)[0] <= at_eer

    @pytest.mark.parametrize("field,value", [("c_miss", 0.0), ("c_fa", -1.0), ("p_target", 1.0)])
    def test_bad_costs(self, field, value):
        with pytest.raises(ValueError):
            CostParams(**{field: value})


class TestMonotoneInvariance:
    @pytest.mark.parametrize("transform", [lambda s: 3.0 * s - 7.0, lambda s: s**3 + s,
                                           np.exp])
    def test_metrics_unchanged(self, transform):
        rng = np.random.default_rng(4)
        s = rng.normal(size=300)
        y = rng.random(300) < 0.4
        s[y] += 1.0
        for fn in (compute_eer, compute_min_dcf):
            assert fn(transform(s), y)[0] == pytest.approx(fn(s, y)[0], abs=1e-12)


class TestDet:
    def test_two_trials(self):
        curve = det_points([2.0, 1.0], [1, 0])
        assert curve.points() == [(1.0, 0.0, 1.0), (2.0, 0.0, 0.0), (np.inf, 1.0, 0.0)]

    def test_duplicates_collapse(self):
        curve = det_points([1.0, 1.0, 1.0, 0.0], [1, 0, 1, 0])
        assert len(curve) == 3
        np.testing.assert_array_equal(curve.thresholds, [0.0, 1.0, np.inf])

    def test_counting_oracle(self):
        rng = np.random.default_rng(5)
        s = np.round(rng.normal(size=100), 1)
        y = rng.random(100) < 0.5
        curve = det_points(s, y)
        for t, pm, pf in curve.points():
            assert pm == np.sum(s[y] < t) / y.sum()
            assert pf == np.sum(s[~y] >= t) / (~y).sum()
        assert np.all(np.diff(curve.p_miss) >= 0) and np.all(np.diff(curve.p_fa) <= 0)
