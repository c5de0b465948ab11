import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loanboost.params import BoosterParams
from loanboost.tree import (
    RegressionTree,
    exhaustive_candidates,
    find_best_split,
    grow_tree,
    leaf_weight,
    quantile_candidates,
)
from oracles import brute_force_best_split, golden_section

UNREG = BoosterParams(reg_alpha=0.0, reg_lambda=0.0, max_depth=1)
FOUR_G = np.array([0.5, 0.5, -0.5, -0.5])
FOUR_H = np.full(4, 0.25)


class TestQuantileCandidates:
    def test_exact_mode_all_midpoints(self):
        assert quantile_candidates([1, 2, 3, 4], [1] * 4, [False] * 4, 8).tolist() == [1.5, 2.5, 3.5]

    def test_two_bins_weighted_median(self):
        assert quantile_candidates([1, 2, 3, 4], [1] * 4, [False] * 4, 2).tolist() == [2.5]

    def test_cut_inside_first_block_dropped(self):
        out = quantile_candidates([1, 2, 3, 4], [9, 1, 1, 1], [False] * 4, 2)
        assert out.size == 0

    def test_single_value(self):
        assert quantile_candidates([5, 5, 5], [1] * 3, [False] * 3, 4).size == 0

    def test_all_missing(self):
        assert quantile_candidates([1.0, 2.0], [1, 1], [True, True], 4).size == 0

    def test_missing_entries_ignored(self):
        out = quantile_candidates([1, 100, 2, 3], [1] * 4, [False, True, False, False], 8)
        assert out.tolist() == [1.5, 2.5]

    def test_hessian_weight_moves_cut(self):
        # heavy weight on the last value pulls the median cut to the right end
        out = quantile_candidates([1, 2, 3, 4], [1, 1, 1, 9], [False] * 4, 2)
        assert out.tolist() == [3.5]

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=60),
           st.integers(2, 12), st.randoms(use_true_random=False))
    def test_properties(self, ints, max_bins, rnd):
        values = np.array(ints, dtype=float)
        weights = np.array([rnd.uniform(0.01, 1.0) for _ in ints])
        thr = quantile_candidates(values, weights, np.zeros(values.size, bool), max_bins)
        uniq = np.unique(values)
        assert np.all(np.diff(thr) > 0)
        assert thr.size <= max(0, min(uniq.size - 1, max_bins - 1)) or uniq.size <= max_bins
        assert set(thr.tolist()) <= set(((uniq[:-1] + uniq[1:]) / 2).tolist())
        if uniq.size <= max_bins:
            assert thr.tolist() == exhaustive_candidates(values, weights, max_bins).tolist()


class TestFindBestSplit:
    def test_hand_computed_split(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        split = find_best_split(np.arange(4), (FOUR_G, FOUR_H), X, UNREG)
        t, gain = brute_force_best_split([1, 2, 3, 4], FOUR_G, FOUR_H)
        assert (split.threshold, split.gain) == (t, gain) == (2.5, 2.0)
        assert (split.G_L, split.H_L, split.G_R, split.H_R) == (1.0, 0.5, -1.0, 0.5)

    def test_constant_target_has_no_split(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        g = np.full(4, 0.5)
        assert find_best_split(np.arange(4), (g, FOUR_H), X, UNREG) is None

    def test_l1_penalty_kills_gain(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        params = BoosterParams(reg_alpha=1.0, reg_lambda=0.0)
        assert find_best_split(np.arange(4), (FOUR_G, FOUR_H), X, params) is None

    def test_missing_rows_pick_best_direction(self):
        # missing rows carry negative gradients like the right side
        X = np.array([[1.0], [2.0], [3.0], [4.0], [np.nan], [np.nan]])
        g = np.array([0.5, 0.5, -0.5, -0.5, -0.5, -0.5])
        split = find_best_split(np.arange(6), (g, np.full(6, 0.25)), X, UNREG)
        assert split.threshold == 2.5 and split.default_left is False
        g[4:] = 0.5
        split = find_best_split(np.arange(6), (g, np.full(6, 0.25)), X, UNREG)
        assert split.threshold == 2.5 and split.default_left is True

    def test_tie_prefers_lower_feature(self):
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
        split = find_best_split(np.arange(4), (FOUR_G, FOUR_H), X, UNREG)
        assert split.feature_index == 0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_brute_force_on_single_feature(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 30))
        x = np.round(rng.normal(size=n), 1)
        g = rng.normal(size=n)
        h = rng.uniform(0.05, 0.25, n)
        lam, alpha = float(rng.uniform(0, 2)), float(rng.uniform(0, 0.5))
        params = BoosterParams(reg_lambda=lam, reg_alpha=alpha, max_bins=10**6)
        split = find_best_split(np.arange(n), (g, h), x[:, None], params)
        t, gain = brute_force_best_split(x.tolist(), g.tolist(), h.tolist(), lam, alpha)
        if split is None:
            assert t is None or gain < 1e-12 + 1e-9
        else:
            assert split.gain == pytest.approx(gain, rel=1e-9, abs=1e-12)


class TestLeafWeight:
    def test_closed_form_matches_minimizer(self):
        G, H, lam = -2.0, 4.0, 1.0
        w = leaf_weight(G, H, lam, 0.0)
        assert w == pytest.approx(0.4)
        w_star = golden_section(lambda w: 0.5 * H * w * w + G * w + 0.5 * lam * w * w, -10, 10)
        assert w == pytest.approx(w_star, abs=1e-8)

    def test_soft_threshold_zero_region(self):
        assert leaf_weight(0.7, 3.0, 1.0, 1.0) == 0.0
        assert leaf_weight(-1.0, 3.0, 1.0, 1.0) == 0.0

    def test_zero_gradient(self):
        assert leaf_weight(0.0, 1.0, 1.0, 0.0) == 0.0

    def test_no_curvature_no_penalty(self):
        assert leaf_weight(1.0, 0.0, 0.0, 0.0) == 0.0

    def test_l1_shrinks(self):
        assert leaf_weight(-3.0, 1.0, 1.0, 1.0) == pytest.approx(1.0)


class TestGrowTree:
    def test_depth_one_stump(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        tree = grow_tree(X, (FOUR_G, FOUR_H), np.arange(4), UNREG)
        root = tree.nodes[0]
        assert (root.feature, root.threshold, root.gain) == (0, 2.5, 2.0)
        assert tree.nodes[root.left].weight == -2.0
        assert tree.nodes[root.right].weight == 2.0

    def test_all_missing_gives_leaf(self):
        X = np.full((5, 3), np.nan)
        g = np.array([1.0, -1.0, 1.0, -1.0, 0.5])
        tree = grow_tree(X, (g, np.ones(5)), np.arange(5), BoosterParams(reg_alpha=0, reg_lambda=1))
        assert len(tree.nodes) == 1 and tree.nodes[0].is_leaf
        assert tree.nodes[0].weight == pytest.approx(-0.5 / 6)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_depth_bound_and_partition(self, seed, depth):
        rng = np.random.default_rng(seed)
        n, p = int(rng.integers(5, 80)), int(rng.integers(1, 5))
        X = rng.normal(size=(n, p))
        X[rng.random((n, p)) < 0.2] = np.nan
        g, h = rng.normal(size=n), rng.uniform(0.1, 1, n)
        sample = np.sort(rng.choice(n, max(1, n // 2), replace=False))
        params = BoosterParams(max_depth=depth, reg_alpha=0, reg_lambda=0.5)
        tree = grow_tree(X, (g, h), sample, params)
        assert tree.depth() <= depth
        for node in tree.nodes:
            assert node.is_leaf or (node.left >= 0 and node.right >= 0)
        # each sampled row reaches exactly one leaf; leaf values match their rows
        leaf_of = tree.leaf_index(X[sample])
        for leaf in np.unique(leaf_of):
            rows = sample[leaf_of == leaf]
            assert tree.nodes[leaf].weight == pytest.approx(
                leaf_weight(g[rows].sum(), h[rows].sum(), 0.5, 0.0), rel=1e-9, abs=1e-15)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            grow_tree(np.ones((3, 1)), (np.ones(3), np.ones(3)), np.array([], dtype=int), UNREG)


def test_tree_dict_round_trip():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    tree = grow_tree(X, (FOUR_G, FOUR_H), np.arange(4), UNREG)
    again = RegressionTree.from_dict(tree.to_dict())
    assert again.to_dict() == tree.to_dict()
    assert again.predict(X).tolist() == [-2.0, -2.0, 2.0, 2.0]
