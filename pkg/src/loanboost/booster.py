"""Boosted tree ensembles for binary classification with logistic loss.

Two training modes share the same tree grower:

* ``newton``: trees are fit to gradient/hessian pairs with L1/L2-regularized
  leaf values, then shrunk by the learning rate.
* ``friedman``: a least-squares tree is fit to the negative gradient, each
  leaf's step size is refined by a 1-D line search on the logistic loss, and
  the result is shrunk by the learning rate.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from loanboost.errors import SchemaError
from loanboost.params import BoosterParams
from loanboost.tree import CandidateFn, RegressionTree, TreeNode, grow_tree

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
P_CLAMP = 1e-15
BASE_CLAMP = 1e-6


class GradientPair(NamedTuple):
    g: np.ndarray | float
    h: np.ndarray | float


def sigmoid(margin):
    return np.exp(-np.logaddexp(0.0, -np.asarray(margin, dtype=float)))


def logistic_grad_hess(label, margin, weight=1.0) -> GradientPair:
    """First and second derivative of the weighted logistic loss w.r.t. the margin.

    Works elementwise on arrays as well as scalars.
    """
    p = np.clip(sigmoid(margin), P_CLAMP, 1.0 - P_CLAMP)
    g = weight * (p - label)
    h = weight * p * (1.0 - p)
    if np.ndim(g) == 0:
        return GradientPair(float(g), float(h))
    return GradientPair(g, h)


def log_loss(labels, margins, weights=None) -> float:
    """Mean (optionally weighted) logistic loss."""
    y = np.asarray(labels, dtype=float)
    p = np.clip(sigmoid(margins), P_CLAMP, 1.0 - P_CLAMP)
    losses = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    if weights is None:
        return float(losses.mean())
    w = np.asarray(weights, dtype=float)
    return float((w * losses).sum() / w.sum())


def init_base_score(labels, weights=None) -> float:
    """Constant margin minimizing the total weighted logistic loss: logit of the weighted positive rate."""
    y = np.asarray(labels, dtype=float)
    if y.size == 0:
        raise ValueError("init_base_score needs at least one label")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    rate = (w * y).sum() / total if total > 0 else y.mean()
    rate = min(max(rate, BASE_CLAMP), 1.0 - BASE_CLAMP)
    return float(np.log(rate / (1.0 - rate)))


def row_weights(labels, params: BoosterParams) -> np.ndarray:
    return np.where(np.asarray(labels) == 1, params.positive_class_weight, 1.0)


def compute_gradients(dataset, margins, params: BoosterParams) -> GradientPair:
    margins = np.asarray(margins, dtype=float)
    y = dataset.target
    if margins.shape != (dataset.n_rows,):
        raise ValueError(f"expected {dataset.n_rows} margins, got {margins.shape}")
    return logistic_grad_hess(y.astype(float), margins, row_weights(y, params))


def line_search_rho(dataset, row_set, labels, margins, tree: RegressionTree, weights=None,
                    loss: str = "logistic", max_iter: int = 10, tol: float = 1e-10) -> dict[int, float]:
    """Per-leaf step sizes minimizing the loss along each leaf's value.

    For leaf value ``v`` and rows ``i`` in the leaf, solves
    ``argmin_rho sum_i loss(y_i, F_i + rho * v)`` by Newton iteration.

    Args:
        dataset: Dataset or 2-D array used to route ``row_set`` to leaves.
        labels, margins, weights: full-length per-row arrays.
        loss: ``"logistic"`` or ``"squared"``.

    Returns:
        ``{leaf_node_index: rho}`` for every leaf; leaves with no rows or
        zero curvature get 0.
    """
    X = getattr(dataset, "X", dataset)
    rows = np.asarray(row_set, dtype=np.int64)
    y = np.asarray(labels, dtype=float)[rows]
    F = np.asarray(margins, dtype=float)[rows]
    w = np.ones(rows.size) if weights is None else np.asarray(weights, dtype=float)[rows]
    leaf_of = tree.leaf_index(X[rows])
    steps = {}
    for leaf in tree.leaves():
        v = tree.nodes[leaf].weight
        sel = leaf_of == leaf
        if v == 0.0 or not sel.any():
            steps[leaf] = 0.0
            continue
        yl, Fl, wl = y[sel], F[sel], w[sel]
        rho = 0.0
        for _ in range(max_iter):
            z = Fl + rho * v
            if loss == "squared":
                d1 = np.sum(wl * (z - yl)) * v
                d2 = np.sum(wl) * v * v
            else:
                p = sigmoid(z)
                d1 = np.sum(wl * (p - yl)) * v
                d2 = np.sum(wl * p * (1.0 - p)) * v * v
            if not d2 > 0.0:
                break
            delta = d1 / d2
            rho -= delta
            if abs(delta) < tol:
                break
        steps[leaf] = float(rho)
    return steps


@dataclass
class BoosterModel:
    base_score: float
    trees: list[RegressionTree]
    params: BoosterParams
    feature_names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "mode": self.params.mode,
            "params": self.params.to_dict(),
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "BoosterModel":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise SchemaError(f"unsupported model format_version {version!r}")
        params = BoosterParams.from_dict(data["params"])
        if data.get("mode", params.mode) != params.mode:
            raise SchemaError("model 'mode' disagrees with params.mode")
        return cls(float(data["base_score"]), [RegressionTree.from_dict(t) for t in data["trees"]],
                   params, tuple(data["feature_names"]))

    @classmethod
    def from_json(cls, text: str) -> "BoosterModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BoosterModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _feature_orders(X: np.ndarray) -> list[np.ndarray]:
    return [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]


def train(dataset, params: BoosterParams = BoosterParams(), workers: int = 1,
          callback: Callable[[int, np.ndarray], None] | None = None,
          candidate_fn: CandidateFn | None = None) -> BoosterModel:
    """Fit a boosted ensemble to ``dataset.target``.

    Args:
        workers: threads used to scan features during split search. The
            fitted model does not depend on this value.
        callback: called as ``callback(t, margins)`` after each round ``t``
            (1-based) with the training-row margins.
        candidate_fn: override for the split-threshold generator (see
            :func:`loanboost.tree.find_best_split`).
    """
    n = dataset.n_rows
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    y = dataset.target
    w = row_weights(y, params)
    model = BoosterModel(init_base_score(y, w), [], params, tuple(dataset.feature_names))
    if n < 2:
        return model

    X = dataset.X
    rng = np.random.Generator(np.random.PCG64(params.seed))
    margins = np.full(n, model.base_score)
    orders = _feature_orders(X)
    k = max(1, int(round(params.subsample * n)))
    friedman = params.mode == "friedman"
    # least-squares fit of the negative gradient: unit hessians, no leaf penalties
    tree_params = replace(params, reg_alpha=0.0, reg_lambda=0.0) if friedman else params
    unit_h = np.ones(n)

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(1, params.n_estimators + 1):
            if k < n:
                sample = np.sort(rng.permutation(n)[:k])
            else:
                sample = np.arange(n)
            g, h = compute_gradients(dataset, margins, params)
            if friedman:
                tree = grow_tree(X, (g, unit_h), sample, tree_params, candidate_fn, executor, orders, workers)
                steps = line_search_rho(X, sample, y, margins, tree, w)
                for leaf, rho in steps.items():
                    tree.nodes[leaf].weight *= rho
                tree = tree.scaled(params.learning_rate)
            else:
                tree = grow_tree(X, (g, h), sample, tree_params, candidate_fn, executor, orders, workers)
                tree = tree.scaled(params.learning_rate)
            margins = margins + tree.predict(X)
            model.trees.append(tree)
            if callback is not None:
                callback(t, margins)
    finally:
        if executor is not None:
            executor.shutdown()
    return model


def _aligned_X(model: BoosterModel, dataset) -> np.ndarray:
    if hasattr(dataset, "feature_names"):
        if tuple(dataset.feature_names) != model.feature_names:
            dataset = dataset.select(model.feature_names)
        return dataset.X
    X = np.asarray(dataset, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise SchemaError(f"expected {len(model.feature_names)} feature columns")
    return X


def predict_margin(model: BoosterModel, dataset) -> np.ndarray:
    X = _aligned_X(model, dataset)
    margin = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        margin = margin + tree.predict(X)
    return margin


def predict_proba(model: BoosterModel, dataset) -> np.ndarray:
    """Probability of the good (label 1) class for each row.

    Columns are matched to the model by feature name; a missing column raises
    :class:`SchemaError`.
    """
    return sigmoid(predict_margin(model, dataset))


def feature_importance(model: BoosterModel, kind: str = "gain") -> list[tuple[str, float]]:
    """Normalized per-feature importance, largest first.

    ``kind="gain"`` sums each split's gain; ``kind="split_count"`` counts
    splits. Ties keep feature order.
    """
    if kind not in ("gain", "split_count"):
        raise ValueError(f"unknown importance kind {kind!r}")
    totals = np.zeros(len(model.feature_names))
    for tree in model.trees:
        for node in tree.nodes:
            if not node.is_leaf:
                totals[node.feature] += node.gain if kind == "gain" else 1.0
    total = totals.sum()
    if not total > 0:
        return []
    used = [j for j in range(len(totals)) if totals[j] > 0]
    used.sort(key=lambda j: (-totals[j], j))
    return [(model.feature_names[j], float(totals[j] / total)) for j in used]


__all__ = [
    "BoosterModel",
    "BoosterParams",
    "GradientPair",
    "TreeNode",
    "compute_gradients",
    "feature_importance",
    "init_base_score",
    "line_search_rho",
    "log_loss",
    "logistic_grad_hess",
    "predict_margin",
    "predict_proba",
    "sigmoid",
    "train",
]
