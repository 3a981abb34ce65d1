"""Kernel construction and spectral entropy tests.

The delta-kernel closed form is the main independent oracle: the block
kernel of an integer label vector has eigenvalues exactly equal to the
empirical class proportions, so its spectral entropy must match the
classical formula computed straight from counts.
"""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmiprune import (
    EntropyOrder,
    FeatureMatrix,
    KernelSpec,
    NormalizedKernel,
    build_kernel,
    conditional_mi,
    eigenspectrum,
    joint_entropy,
    label_kernel,
    mutual_information,
    renyi_entropy,
)
from cmiprune.errors import (
    BandwidthDegenerate,
    DimensionMismatch,
    NegativeSpectrum,
    NonFiniteInput,
)


def closed_form_renyi(labels, alpha):
    """Entropy of the empirical class distribution, straight from counts."""
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return math.log2(float(np.sum(p**alpha))) / (1.0 - alpha)


def shannon(labels):
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)))


class TestBuildKernel:
    def test_identical_rows_give_uniform_kernel(self):
        x = FeatureMatrix(np.ones((3, 4)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BandwidthDegenerate)
            g = build_kernel(x, KernelSpec("rbf"))
        np.testing.assert_allclose(g.g, np.full((3, 3), 1 / 3), atol=1e-15)

    def test_delta_kernel_blocks(self):
        g = label_kernel([0, 0, 0, 1])
        expected = np.zeros((4, 4))
        expected[:3, :3] = 0.25
        expected[3, 3] = 0.25
        np.testing.assert_allclose(g.g, expected, atol=0)
        assert abs(np.trace(g.g) - 1.0) < 1e-12

    def test_rbf_offdiagonal_hand_value(self):
        # two rows at distance sigma*sqrt(2): G_12 = exp(-1)/2
        sigma = 0.7
        z = np.zeros(3)
        z[0] = sigma * math.sqrt(2.0)
        x = FeatureMatrix(np.stack([np.zeros(3), z]))
        g = build_kernel(x, KernelSpec("rbf", sigma=sigma))
        assert g.g[0, 1] == pytest.approx(math.exp(-1.0) / 2.0, abs=1e-12)
        assert g.g[0, 1] == pytest.approx(0.18394, abs=5e-6)

    def test_median_heuristic_fallback_warns(self):
        x = FeatureMatrix(np.zeros((4, 2)))
        with pytest.warns(BandwidthDegenerate):
            build_kernel(x, KernelSpec("rbf"))

    def test_delta_requires_integer_single_column(self):
        with pytest.raises(ValueError):
            build_kernel(FeatureMatrix(np.zeros((3, 2))), KernelSpec("delta"))
        with pytest.raises(ValueError):
            build_kernel(FeatureMatrix(np.array([[0.5], [1.0], [2.0]])), KernelSpec("delta"))

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteInput):
            FeatureMatrix(np.array([[np.nan], [1.0]]))

    def test_normalization_idempotent(self):
        rng = np.random.default_rng(0)
        g = build_kernel(FeatureMatrix(rng.normal(size=(12, 5))))
        renorm = g.g / np.trace(g.g)
        np.testing.assert_allclose(renorm, g.g, atol=1e-12)


class TestRenyiEntropy:
    @pytest.mark.parametrize("alpha", [0.5, 1.01, 2.0, 3.0])
    @pytest.mark.parametrize("n", [2, 4, 16, 64])
    def test_uniform_spectrum_is_log_n(self, n, alpha):
        g = NormalizedKernel(np.eye(n) / n)
        assert renyi_entropy(g, alpha) == pytest.approx(math.log2(n), abs=1e-9)

    @pytest.mark.parametrize("alpha", [0.5, 1.01, 2.0, 3.0])
    @pytest.mark.parametrize("n", [2, 4, 16, 64])
    def test_rank_one_is_zero(self, n, alpha):
        g = NormalizedKernel(np.full((n, n), 1.0 / n))
        assert renyi_entropy(g, alpha) == pytest.approx(0.0, abs=1e-9)

    def test_delta_example(self):
        g = label_kernel([0, 0, 0, 1])
        assert renyi_entropy(g, 2.0) == pytest.approx(-math.log2(0.75**2 + 0.25**2), abs=1e-12)

    def test_negative_spectrum_raises(self):
        bad = np.eye(3) / 3
        bad[0, 1] = bad[1, 0] = 0.6  # indefinite
        with pytest.raises(NegativeSpectrum):
            renyi_entropy(NormalizedKernel(bad, validate=False), 2.0)

    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            EntropyOrder(1.0)
        with pytest.raises(ValueError):
            EntropyOrder(-2.0)
        with pytest.raises(ValueError):
            EntropyOrder(1.0 + 1e-9)

    @given(
        labels=st.lists(st.integers(0, 7), min_size=2, max_size=128),
        alpha=st.sampled_from([0.5, 1.01, 2.0, 3.0]),
    )
    @settings(max_examples=120, deadline=None)
    def test_delta_oracle_matches_closed_form(self, labels, alpha):
        g = label_kernel(labels)
        assert renyi_entropy(g, alpha) == pytest.approx(
            closed_form_renyi(labels, alpha), abs=1e-8
        )

    @given(labels=st.lists(st.integers(0, 9), min_size=2, max_size=100))
    @settings(max_examples=60, deadline=None)
    def test_near_one_alpha_tracks_shannon(self, labels):
        g = label_kernel(labels)
        assert abs(renyi_entropy(g, 1.01) - shannon(labels)) <= 0.02

    @given(
        seed=st.integers(0, 10_000),
        n=st.integers(2, 24),
        alpha=st.sampled_from([0.5, 1.01, 2.0, 3.0]),
    )
    @settings(max_examples=80, deadline=None)
    def test_bounds(self, seed, n, alpha):
        rng = np.random.default_rng(seed)
        g = build_kernel(FeatureMatrix(rng.normal(size=(n, 3))))
        h = renyi_entropy(g, alpha)
        assert -1e-9 <= h <= math.log2(n) + 1e-9

    def test_spectrum_sums_to_one(self):
        rng = np.random.default_rng(3)
        g = build_kernel(FeatureMatrix(rng.normal(size=(20, 4))))
        lam = eigenspectrum(g).eigenvalues
        assert lam[0] >= lam[-1]  # descending
        assert abs(lam.sum() - 1.0) < 1e-9
        assert lam.min() >= 0.0 and lam.max() <= 1.0


class TestJointEntropy:
    def test_single_kernel_passthrough(self):
        g = label_kernel([0, 1, 1, 2])
        assert joint_entropy([g], 2.0) == renyi_entropy(g, 2.0)

    def test_delta_self_join_is_identity(self):
        g = label_kernel([0, 0, 1, 1])
        assert joint_entropy([g, g], 1.01) == pytest.approx(renyi_entropy(g, 1.01), abs=1e-12)

    def test_join_with_scaled_identity_is_log_n(self):
        rng = np.random.default_rng(1)
        n = 8
        g = build_kernel(FeatureMatrix(rng.normal(size=(n, 3))))
        ident = NormalizedKernel(np.eye(n) / n)
        assert joint_entropy([g, ident], 2.0) == pytest.approx(math.log2(n), abs=1e-9)

    def test_order_invariance(self):
        rng = np.random.default_rng(2)
        gs = [build_kernel(FeatureMatrix(rng.normal(size=(10, 2)))) for _ in range(4)]
        base = joint_entropy(gs, 1.01)
        for perm in ([3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]):
            assert abs(joint_entropy([gs[i] for i in perm], 1.01) - base) <= 1e-12

    def test_dimension_mismatch(self):
        a = label_kernel([0, 1])
        b = label_kernel([0, 1, 2])
        with pytest.raises(DimensionMismatch):
            joint_entropy([a, b], 2.0)


class TestMutualInformation:
    def test_constant_labels_share_nothing(self):
        rng = np.random.default_rng(4)
        g_y = label_kernel([3, 3, 3, 3, 3])
        g = build_kernel(FeatureMatrix(rng.normal(size=(5, 2))))
        assert mutual_information(g_y, [g], 1.01) == pytest.approx(0.0, abs=1e-9)

    def test_self_information_is_entropy(self):
        g = label_kernel([0, 0, 1, 1])
        mi = mutual_information(g, [g], 1.01)
        assert mi == pytest.approx(renyi_entropy(g, 1.01), abs=1e-9)
        assert mi == pytest.approx(1.0, abs=0.02)

    def test_independent_balanced_labels(self):
        g_y = label_kernel([0, 1, 0, 1])
        g_x = label_kernel([0, 0, 1, 1])
        assert mutual_information(g_y, [g_x], 1.01) == pytest.approx(0.0, abs=1e-9)

    @given(seed=st.integers(0, 5_000))
    @settings(max_examples=50, deadline=None)
    def test_randomized_identities(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 40))
        labels = rng.integers(0, 4, size=n)
        g_y = label_kernel(labels)
        g_x = build_kernel(FeatureMatrix(rng.normal(size=(n, 3))))
        # I(Y;Y) = H(Y)
        assert mutual_information(g_y, [g_y], 1.01) == pytest.approx(
            renyi_entropy(g_y, 1.01), abs=1e-9
        )
        # constant Y carries nothing
        g_const = label_kernel(np.zeros(n, dtype=int))
        assert mutual_information(g_const, [g_x], 1.01) == pytest.approx(0.0, abs=1e-9)
        assert mutual_information(g_y, [g_y]) >= -1e-9


class TestConditionalMI:
    def test_condition_on_target_cancels(self):
        g_y = label_kernel([0, 0, 1, 2, 2, 1])
        g_x = label_kernel([1, 0, 1, 0, 1, 0])
        assert conditional_mi(g_x, g_y, [g_y], 1.01) == pytest.approx(0.0, abs=1e-9)

    def test_empty_conditioning_is_plain_mi(self):
        rng = np.random.default_rng(5)
        labels = rng.integers(0, 3, size=12)
        g_y = label_kernel(labels)
        g_x = build_kernel(FeatureMatrix(rng.normal(size=(12, 4))))
        assert conditional_mi(g_x, g_y, [], 2.0) == mutual_information(g_y, [g_x], 2.0)

    def test_duplicate_conditioning_kernel_adds_nothing(self):
        g_y = label_kernel([0, 1, 0, 1, 2, 2])
        g_x = label_kernel([0, 0, 1, 1, 0, 1])
        assert conditional_mi(g_x, g_y, [g_x], 1.01) == pytest.approx(0.0, abs=1e-9)

    @given(seed=st.integers(0, 5_000))
    @settings(max_examples=50, deadline=None)
    def test_randomized_self_conditioning(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 32))
        g_y = label_kernel(rng.integers(0, 3, size=n))
        g_x = label_kernel(rng.integers(0, 3, size=n))
        assert conditional_mi(g_x, g_y, [g_y], 1.01) == pytest.approx(0.0, abs=1e-9)

    def test_empty_x_is_zero(self):
        g_y = label_kernel([0, 1, 0, 1])
        assert conditional_mi([], g_y, [g_y], 1.01) == 0.0
