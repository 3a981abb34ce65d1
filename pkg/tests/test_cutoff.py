"""Cutoff detector tests: slope-quotient elbow, 1-D BIC clustering, and the
permutation stop rule."""

import warnings

import numpy as np
import pytest

from cmiprune import (
    FeatureMatrix,
    KernelSpec,
    OrderedLayer,
    PermutationParams,
    ScreeParams,
    XMeansParams,
    label_kernel,
    permutation_cutoff,
    permutation_scan,
    scree_cutoff,
    xmeans_clusters,
    xmeans_cutoff,
)
from cmiprune.cutoff import scree_slopes
from cmiprune.errors import DegenerateVariance, EmptyRemaining, EvaluatorFailure


def ordered(values, layer_id=1):
    return OrderedLayer(layer_id, tuple(range(len(values))), tuple(values))


class CountingEvaluator:
    def __init__(self, fn):
        self.fn = fn
        self.calls = []

    def __call__(self, layer_id, retained):
        self.calls.append((layer_id, tuple(retained)))
        return self.fn(layer_id, retained)


def never_called(layer_id, retained):
    raise AssertionError("evaluator must not run")


class TestScree:
    def test_hand_derived_slopes(self):
        c = [5.0, 3.0, 2.0, 1.9, 1.8]
        np.testing.assert_allclose(scree_slopes(c), [2.0, 10.0, 1.0])

    def test_k1_picks_max_slope_without_trials(self):
        result = scree_cutoff(ordered([5.0, 3.0, 2.0, 1.9, 1.8]), ScreeParams(top_k=1), never_called)
        assert result.cutoff_index == 2
        assert result.selected_indices == (0, 1)
        assert result.candidates == ()

    def test_geometric_ties_break_to_first(self):
        c = [2.0**-i for i in range(1, 8)]
        result = scree_cutoff(ordered(c), ScreeParams(top_k=1), never_called)
        assert result.cutoff_index == 1

    def test_too_few_values_retains_all(self):
        result = scree_cutoff(ordered([1.0, 0.5]), ScreeParams(top_k=1), never_called)
        assert result.cutoff_index == 2
        assert result.selected_indices == (0, 1)
        assert "too_few_values" in result.flags

    def test_top_k_trials_pick_smallest_passing_index(self):
        c = [5.0, 3.0, 2.0, 1.9, 1.8, 1.0, 0.9]
        # slopes: 2, 10, 1, 0.125, 8 -> top-3 candidates in rank order: 2, 5, 1
        ev = CountingEvaluator(lambda lid, kept: 1.0 if len(kept) >= 2 else 0.2)
        result = scree_cutoff(ordered(c), ScreeParams(top_k=3, target_accuracy=0.9), ev)
        assert [idx for idx, _ in result.candidates] == [2, 5, 1]
        assert len(ev.calls) == 3
        assert result.cutoff_index == 2  # smallest candidate meeting the target
        assert result.accuracy == 1.0

    def test_fallback_max_index(self):
        c = [5.0, 3.0, 2.0, 1.9, 1.8]
        ev = CountingEvaluator(lambda lid, kept: 0.1)
        result = scree_cutoff(ordered(c), ScreeParams(top_k=2, target_accuracy=0.9), ev)
        assert result.cutoff_index == max(i for i, _ in result.candidates)
        assert "fallback_max_index" in result.flags

    def test_fallback_best_accuracy_variant(self):
        c = [5.0, 3.0, 2.0, 1.9, 1.8]
        ev = CountingEvaluator(lambda lid, kept: 0.3 if len(kept) == 1 else 0.2)
        params = ScreeParams(top_k=2, target_accuracy=0.9, fallback="best_accuracy")
        result = scree_cutoff(ordered(c), params, ev)
        assert result.cutoff_index == 1
        assert "fallback_best_accuracy" in result.flags

    def test_candidate_count_caps_at_len_minus_two(self):
        c = [5.0, 3.0, 2.0]
        ev = CountingEvaluator(lambda lid, kept: 0.0)
        result = scree_cutoff(ordered(c), ScreeParams(top_k=5, target_accuracy=0.9), ev)
        assert len(ev.calls) == 1  # min(K, |C|-2)
        assert result.cutoff_index == 1

    def test_determinism(self):
        c = list(np.random.default_rng(0).uniform(0, 5, size=9)[::-1])
        a = scree_cutoff(ordered(c), ScreeParams(top_k=1), never_called)
        b = scree_cutoff(ordered(c), ScreeParams(top_k=1), never_called)
        assert a.cutoff_index == b.cutoff_index

    def test_evaluator_failure_wrapped(self):
        def broken(layer_id, retained):
            raise RuntimeError("boom")

        with pytest.raises(EvaluatorFailure):
            scree_cutoff(ordered([3.0, 2.0, 1.0, 0.5]), ScreeParams(top_k=2), broken)

    def test_out_of_range_accuracy_rejected(self):
        with pytest.raises(EvaluatorFailure):
            scree_cutoff(
                ordered([3.0, 2.0, 1.0, 0.5]),
                ScreeParams(top_k=2),
                lambda lid, kept: 1.5,
            )


class TestXMeans:
    def bimodal(self, rng_seed=0):
        # two 5-value lumps ~120x farther apart than their internal spread
        rng = np.random.default_rng(rng_seed)
        high = 10.0 + np.linspace(0.04, -0.04, 5) + rng.normal(0, 0.003, 5)
        low = 0.1 + np.linspace(0.04, -0.04, 5) + rng.normal(0, 0.003, 5)
        return list(np.sort(high)[::-1]) + list(np.sort(low)[::-1])

    def test_bimodal_recovers_two_clusters(self):
        values = self.bimodal()
        clusters = xmeans_clusters(values, rng_seed=0)
        assert len(clusters) == 2
        sizes = sorted(len(c) for c in clusters)
        assert sizes == [5, 5]

    def test_bimodal_retains_high_cluster(self):
        values = self.bimodal()
        ev = CountingEvaluator(lambda lid, kept: 1.0 if len(kept) >= 5 else 0.0)
        result = xmeans_cutoff(ordered(values), XMeansParams(target_accuracy=0.9, rng_seed=0), ev)
        assert result.selected_indices == (0, 1, 2, 3, 4)
        assert result.cutoff_index == 5

    def test_constant_values_single_cluster(self):
        values = [2.0] * 8
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateVariance)
            clusters = xmeans_clusters(values, rng_seed=1)
            result = xmeans_cutoff(ordered(values), XMeansParams(rng_seed=1), never_called)
        assert len(clusters) == 1
        assert result.cutoff_index == 8

    def test_hopeless_evaluator_retains_all(self):
        values = self.bimodal()
        ev = CountingEvaluator(lambda lid, kept: 0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateVariance)
            result = xmeans_cutoff(ordered(values), XMeansParams(rng_seed=0), ev)
        assert result.cutoff_index == len(values)
        assert "retained_all" in result.flags

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(12)
        values = list(np.sort(rng.uniform(0, 4, size=14))[::-1])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateVariance)
            a = xmeans_clusters(values, rng_seed=7)
            b = xmeans_clusters(values, rng_seed=7)
        assert len(a) == len(b)
        for ca, cb in zip(a, b):
            assert np.array_equal(ca, cb)

    def test_retained_clusters_dominate_pruned(self):
        values = self.bimodal(3)
        ev = CountingEvaluator(lambda lid, kept: 1.0 if len(kept) >= 5 else 0.0)
        result = xmeans_cutoff(ordered(values), XMeansParams(target_accuracy=0.9, rng_seed=3), ev)
        kept = set(result.selected_indices)
        vals = np.asarray(values)
        pruned = [v for i, v in enumerate(vals) if i not in kept]
        if pruned:
            assert min(vals[i] for i in kept) >= max(pruned)

    def test_k_max_caps_cluster_count(self):
        rng = np.random.default_rng(5)
        values = list(np.sort(rng.uniform(0, 100, size=12))[::-1])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateVariance)
            clusters = xmeans_clusters(values, k_init=1, k_max=3, rng_seed=0)
        assert len(clusters) <= 3


def delta_feature(values, index=0):
    return FeatureMatrix(np.asarray(values, dtype=float).reshape(-1, 1), 1, index)


class TestPermutation:
    def test_constant_candidate_stops(self):
        labels = np.array([0, 1, 0, 1, 0, 1, 0, 1])
        y = label_kernel(labels)
        selected = [delta_feature(labels, 0)]
        remaining = [delta_feature(np.zeros(8), 1), delta_feature(labels, 2)]
        decision, kept = permutation_cutoff(
            selected, remaining, y, PermutationParams(permutations=10, rng_seed=0),
            spec=KernelSpec("delta"),
        )
        assert decision == "stop"
        assert kept == 1

    def test_lenient_threshold_continues(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, size=16)
        y = label_kernel(labels)
        remaining = [delta_feature(labels, 0), delta_feature(rng.integers(0, 2, 16), 1)]
        decision, kept = permutation_cutoff(
            [], remaining, y,
            PermutationParams(permutations=1, significance=0.999, rng_seed=1),
            spec=KernelSpec("delta"),
        )
        assert decision in ("continue", "stop")
        if decision == "continue":
            assert kept == 1

    def test_zero_permutations_rejected(self):
        with pytest.raises(ValueError):
            PermutationParams(permutations=0)

    def test_empty_remaining_rejected(self):
        y = label_kernel([0, 1, 0, 1])
        with pytest.raises(EmptyRemaining):
            permutation_cutoff([], [], y, PermutationParams(permutations=2))

    def test_scan_stops_before_exhausting(self):
        rng = np.random.default_rng(2)
        n = 24
        labels = rng.integers(0, 2, size=n)
        feats = [delta_feature(labels, 0)] + [
            delta_feature(rng.integers(0, 2, size=n), i) for i in range(1, 5)
        ]
        y = label_kernel(labels)
        layer_order = OrderedLayer(1, tuple(range(5)), tuple([1.0, 0.5, 0.3, 0.2, 0.0]))
        result = permutation_scan(
            layer_order, feats, y, PermutationParams(permutations=20, rng_seed=3),
            spec=KernelSpec("delta"),
        )
        assert result.method == "permutation"
        assert 0 <= result.cutoff_index < 5
        assert result.selected_indices == tuple(range(result.cutoff_index))
