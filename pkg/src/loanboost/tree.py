"""Regression trees grown on gradient statistics.

Split search works on per-feature presorted row lists. For each candidate
threshold and each routing of missing values (left or right) the regularized
gain

    0.5 * [S(G_L)^2/(H_L+lam) + S(G_R)^2/(H_R+lam) - S(G)^2/(H+lam)]

is evaluated, where ``S`` soft-thresholds the gradient sum by the L1 penalty.
Equal gains resolve to the lower feature index, then the lower threshold,
then default-left, so the chosen split does not depend on evaluation order.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GAIN_FLOOR = 1e-12

CandidateFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class SplitInfo:
    feature_index: int
    threshold: float
    gain: float
    default_left: bool
    G_L: float
    H_L: float
    G_R: float
    H_R: float


@dataclass
class TreeNode:
    """Leaf when ``feature`` is -1, otherwise an internal split.

    Rows with ``x[feature] <= threshold`` go to ``left``; missing values follow
    ``default_left``. Children are node indices within the owning tree.
    """

    weight: float = 0.0
    feature: int = -1
    threshold: float = math.nan
    default_left: bool = True
    left: int = -1
    right: int = -1
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class RegressionTree:
    nodes: list[TreeNode] = field(default_factory=list)

    def _arrays(self):
        cache = getattr(self, "_cache", None)
        if cache is None or cache[0] != len(self.nodes):
            nodes = self.nodes
            cache = (
                len(nodes),
                np.array([n.feature for n in nodes], dtype=np.int64),
                np.array([n.threshold for n in nodes], dtype=float),
                np.array([n.default_left for n in nodes], dtype=bool),
                np.array([n.left for n in nodes], dtype=np.int64),
                np.array([n.right for n in nodes], dtype=np.int64),
                np.array([n.weight for n in nodes], dtype=float),
            )
            self._cache = cache
        return cache[1:]

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in (NaN = missing)."""
        feat, thr, dleft, left, right, _ = self._arrays()
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while rows.size:
            at = idx[rows]
            f = feat[at]
            internal = f >= 0
            rows, at, f = rows[internal], at[internal], f[internal]
            if not rows.size:
                break
            x = X[rows, f]
            go_left = np.where(np.isnan(x), dleft[at], x <= thr[at])
            idx[rows] = np.where(go_left, left[at], right[at])
        return idx

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._arrays()[5][self.leaf_index(X)]

    def depth(self, node: int = 0) -> int:
        n = self.nodes[node]
        if n.is_leaf:
            return 0
        return 1 + max(self.depth(n.left), self.depth(n.right))

    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.is_leaf]

    def scaled(self, factor: float) -> "RegressionTree":
        return RegressionTree([
            TreeNode(n.weight * factor if n.is_leaf else 0.0, n.feature, n.threshold, n.default_left,
                     n.left, n.right, n.gain)
            for n in self.nodes
        ])

    def to_dict(self, node: int = 0) -> dict:
        n = self.nodes[node]
        if n.is_leaf:
            return {"weight": n.weight}
        return {
            "feature": n.feature,
            "threshold": n.threshold,
            "default_left": n.default_left,
            "gain": n.gain,
            "left": self.to_dict(n.left),
            "right": self.to_dict(n.right),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionTree":
        tree = cls()

        def build(d):
            i = len(tree.nodes)
            if "weight" in d:
                tree.nodes.append(TreeNode(weight=float(d["weight"])))
                return i
            tree.nodes.append(TreeNode(feature=int(d["feature"]), threshold=float(d["threshold"]),
                                       default_left=bool(d["default_left"]), gain=float(d.get("gain", 0.0))))
            left = build(d["left"])
            right = build(d["right"])
            tree.nodes[i].left, tree.nodes[i].right = left, right
            return i

        build(data)
        return tree


def soft_threshold(G, alpha: float):
    """sign(G) * max(|G| - alpha, 0)."""
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def leaf_weight(G: float, H: float, reg_lambda: float = 0.0, reg_alpha: float = 0.0) -> float:
    """Optimal unshrunk leaf value ``-S(G) / (H + lambda)``."""
    s = float(soft_threshold(G, reg_alpha))
    denom = H + reg_lambda
    if s == 0.0 or denom <= 0.0:
        return 0.0
    return -s / denom


def _cut_blocks(block_cw: np.ndarray, block_end: np.ndarray, max_bins: int) -> np.ndarray:
    """Indices ``k`` of distinct-value blocks followed by a cut (threshold between block k and k+1).

    ``block_cw`` is the cumulative weight at the end of each block and
    ``block_end`` the matching cumulative row count (used when all weights
    are zero).
    """
    m = block_cw.size
    if m <= max_bins:
        return np.arange(m - 1)
    total = block_cw[-1]
    if not total > 0:
        block_cw = block_end.astype(float)
        total = block_cw[-1]
    cuts = total * (np.arange(1, max_bins) / max_bins)
    # last block whose cumulative weight has not passed the cut
    pos = np.searchsorted(block_cw, cuts * (1.0 + 1e-12), side="right") - 1
    return np.unique(pos[(pos >= 0) & (pos < m - 1)])


def _candidates_sorted(values: np.ndarray, weights: np.ndarray, max_bins: int) -> np.ndarray:
    if values.size < 2:
        return np.empty(0)
    ends = np.flatnonzero(values[1:] != values[:-1])
    if ends.size == 0:
        return np.empty(0)
    cw = np.cumsum(weights)
    k = _cut_blocks(np.append(cw[ends], cw[-1]), np.append(ends + 1, values.size), max_bins)
    pos = ends[k]
    return 0.5 * (values[pos] + values[pos + 1])


def quantile_candidates(values, hessian_weights, missing_mask, max_bins: int) -> np.ndarray:
    """Ascending split thresholds at hessian-weighted quantiles.

    Non-missing values are sorted and their hessian weights accumulated; a
    threshold is placed at each cut ``k / max_bins`` (k = 1 .. max_bins-1) as
    the midpoint of the adjacent distinct values ``a < b`` that straddle it,
    i.e. cumulative weight through ``a`` <= cut < cumulative weight through ``b``. When there are at most
    ``max_bins`` distinct values every midpoint is returned.
    """
    values = np.asarray(values, dtype=float)
    w = np.asarray(hessian_weights, dtype=float)
    keep = ~np.asarray(missing_mask, dtype=bool) & ~np.isnan(values)
    v, w = values[keep], w[keep]
    order = np.argsort(v, kind="stable")
    return _candidates_sorted(v[order], w[order], max_bins)


def exhaustive_candidates(values: np.ndarray, weights: np.ndarray, max_bins: int) -> np.ndarray:
    """Every midpoint between consecutive distinct values; ignores the weights."""
    uniq = np.unique(values)
    return (uniq[:-1] + uniq[1:]) / 2.0


def _gain_terms(G, H, reg_lambda, reg_alpha):
    s = soft_threshold(G, reg_alpha) if reg_alpha else G
    denom = H + reg_lambda
    if np.ndim(denom) == 0:
        return s * s / denom if denom > 0 else 0.0
    out = np.zeros(denom.shape)
    np.divide(s * s, denom, out=out, where=denom > 0)
    return out


class _SplitContext:
    """Per-tree state shared by all nodes: data, gradients and settings.

    A node is described by one ascending-by-value row list per feature
    (missing rows excluded). Features are scanned together on a padded
    ``(features, rows)`` grid; each grid row gets its own cumulative sums, so
    a feature's statistics never depend on which other features share the
    grid.
    """

    def __init__(self, X, g, h, params, candidate_fn=None, executor: Executor | None = None, workers: int = 1):
        n = X.shape[0]
        self.n = n
        self.X = X
        self.X_ext = np.vstack([X, np.full((1, X.shape[1]), np.inf)])
        self.g = g
        self.h = h
        self.g_ext = np.append(g, 0.0)
        self.h_ext = np.append(h, 0.0)
        self.reg_lambda = params.reg_lambda
        self.reg_alpha = params.reg_alpha
        self.max_bins = params.max_bins
        self.max_depth = params.max_depth
        self.min_gain = max(params.min_gain, GAIN_FLOOR)
        self.candidate_fn = candidate_fn
        self.executor = executor
        self.n_features = X.shape[1]
        chunks = max(1, min(workers if executor is not None else 1, self.n_features))
        self.chunks = [c for c in np.array_split(np.arange(self.n_features), chunks) if c.size]

    def sorted_lists(self, rows: np.ndarray, orders: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
        member = np.zeros(self.n, dtype=bool)
        member[rows] = True
        out = []
        for j in range(self.n_features):
            order = orders[j] if orders is not None else np.argsort(self.X[:, j], kind="stable")
            s = order[member[order]]
            out.append(s[~np.isnan(self.X[s, j])])
        return out

    def _selected(self, V, W, Hc, B, L):
        """Boolean grid marking the boundary positions that are split candidates."""
        if self.candidate_fn is not None:
            S = np.zeros_like(B)
            for r in range(V.shape[0]):
                if L[r] < 2:
                    continue
                v = V[r, :L[r]]
                thr = np.asarray(self.candidate_fn(v, W[r, :L[r]], self.max_bins), dtype=float)
                if thr.size:
                    S[r, np.searchsorted(v, thr, side="right") - 1] = True
            return S & B
        S = B.copy()
        n_distinct = B.sum(axis=1) + 1
        for r in np.flatnonzero(n_distinct > self.max_bins):
            ends = np.flatnonzero(B[r])
            last = L[r] - 1
            k = _cut_blocks(np.append(Hc[r, ends], Hc[r, last]), np.append(ends + 1, L[r]), self.max_bins)
            S[r] = False
            S[r, ends[k]] = True
        return S

    def _scan(self, feats, lists, n_node, G, H, parent) -> SplitInfo | None:
        L = np.array([lists[j].size for j in feats])
        width = int(L.max())
        if width < 2:
            return None
        idx = np.full((feats.size, width), self.n)
        for r, j in enumerate(feats):
            idx[r, :L[r]] = lists[j]
        V = self.X_ext[idx, feats[:, None]]
        W = self.h_ext[idx]
        Gc = np.cumsum(self.g_ext[idx], axis=1)
        Hc = np.cumsum(W, axis=1)
        B = V[:, :-1] != V[:, 1:]
        B &= np.arange(width - 1)[None, :] < (L - 1)[:, None]
        S = self._selected(V, W, Hc, B, L)
        rr, ii = np.nonzero(S)
        if rr.size == 0:
            return None
        last = L[rr] - 1
        GLn, HLn = Gc[rr, ii], Hc[rr, ii]
        G_nm, H_nm = Gc[rr, last], Hc[rr, last]
        GRn, HRn = G_nm - GLn, H_nm - HLn
        has_missing = L[rr] < n_node
        G_m = np.where(has_missing, G - G_nm, 0.0)
        H_m = np.where(has_missing, H - H_nm, 0.0)
        # interleave (default_left, default_right) per candidate
        GL = np.stack([GLn + G_m, GLn], axis=1)
        HL = np.stack([HLn + H_m, HLn], axis=1)
        GR = np.stack([GRn, GRn + G_m], axis=1)
        HR = np.stack([HRn, HRn + H_m], axis=1)
        lam, alpha = self.reg_lambda, self.reg_alpha
        gain = 0.5 * (_gain_terms(GL, HL, lam, alpha) + _gain_terms(GR, HR, lam, alpha) - parent)
        c, d = divmod(int(np.argmax(gain)), 2)
        r, i = rr[c], ii[c]
        threshold = 0.5 * (V[r, i] + V[r, i + 1])
        return SplitInfo(int(feats[r]), float(threshold), float(gain[c, d]), d == 0,
                         float(GL[c, d]), float(HL[c, d]), float(GR[c, d]), float(HR[c, d]))

    def best_split(self, lists, rows, G, H) -> SplitInfo | None:
        parent = float(_gain_terms(float(G), float(H), self.reg_lambda, self.reg_alpha))
        n_node = rows.size
        if self.executor is not None and len(self.chunks) > 1:
            results = list(self.executor.map(lambda f: self._scan(f, lists, n_node, G, H, parent), self.chunks))
        else:
            results = [self._scan(f, lists, n_node, G, H, parent) for f in self.chunks]
        best = None
        for r in results:
            if r is not None and r.gain >= self.min_gain and (best is None or r.gain > best.gain):
                best = r
        return best


def find_best_split(row_set, gradients, dataset, params, candidate_fn: CandidateFn | None = None,
                    executor: Executor | None = None, workers: int = 1) -> SplitInfo | None:
    """Highest-gain split over ``row_set``, or ``None`` if nothing clears ``min_gain``.

    Args:
        row_set: row indices of the node.
        gradients: ``(g, h)`` pair of per-row arrays covering the whole dataset.
        dataset: a :class:`~loanboost.dataset.Dataset` or a raw 2-D array with NaN
            marking missing values.
        params: :class:`~loanboost.params.BoosterParams`.
        candidate_fn: replaces the weighted-quantile threshold generator;
            called as ``fn(sorted_values, sorted_hessians, max_bins)``.
    """
    X = getattr(dataset, "X", dataset)
    g, h = np.asarray(gradients[0], dtype=float), np.asarray(gradients[1], dtype=float)
    rows = np.sort(np.asarray(row_set, dtype=np.int64))
    ctx = _SplitContext(X, g, h, params, candidate_fn, executor, workers)
    lists = ctx.sorted_lists(rows)
    return ctx.best_split(lists, rows, g[rows].sum(), h[rows].sum())


def grow_tree(dataset, gradients, row_sample, params, candidate_fn: CandidateFn | None = None,
              executor: Executor | None = None, orders: Sequence[np.ndarray] | None = None,
              workers: int = 1) -> RegressionTree:
    """Grow one tree depth-first on the rows in ``row_sample``.

    Leaves carry the unshrunk :func:`leaf_weight` of their rows. ``orders``
    may supply precomputed per-feature stable argsorts of the full matrix.
    """
    X = getattr(dataset, "X", dataset)
    g, h = np.asarray(gradients[0], dtype=float), np.asarray(gradients[1], dtype=float)
    rows = np.sort(np.asarray(row_sample, dtype=np.int64))
    if rows.size == 0:
        raise ValueError("row_sample must be non-empty")
    ctx = _SplitContext(X, g, h, params, candidate_fn, executor, workers)
    lists = ctx.sorted_lists(rows, orders)
    tree = RegressionTree()
    member = np.zeros(X.shape[0], dtype=bool)

    def grow(rows, lists, depth):
        G, H = g[rows].sum(), h[rows].sum()
        node_id = len(tree.nodes)
        split = ctx.best_split(lists, rows, G, H) if depth < ctx.max_depth else None
        if split is None:
            tree.nodes.append(TreeNode(weight=leaf_weight(G, H, ctx.reg_lambda, ctx.reg_alpha)))
            return node_id
        node = TreeNode(feature=split.feature_index, threshold=split.threshold,
                        default_left=split.default_left, gain=split.gain)
        tree.nodes.append(node)
        x = X[rows, split.feature_index]
        go_left = np.where(np.isnan(x), split.default_left, x <= split.threshold)
        left_rows, right_rows = rows[go_left], rows[~go_left]
        member[left_rows] = True
        left_lists, right_lists = [], []
        for s in lists:
            m = member[s]
            left_lists.append(s[m])
            right_lists.append(s[~m])
        member[left_rows] = False
        node.left = grow(left_rows, left_lists, depth + 1)
        node.right = grow(right_rows, right_lists, depth + 1)
        return node_id

    grow(rows, lists, 0)
    return tree
