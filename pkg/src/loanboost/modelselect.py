"""Stratified k-fold cross-validation and exhaustive grid search."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from loanboost.booster import predict_proba, train
from loanboost.metrics import evaluate
from loanboost.params import BoosterParams, coerce

METRICS = ("accuracy", "precision", "recall", "f1", "auc")


def stratified_kfold(target, k: int, seed: int = 0) -> np.ndarray:
    """Fold index per row.

    Rows of each class are shuffled with the seeded generator and dealt
    round-robin. The dealing offset carries over from one class to the next
    so fold sizes stay balanced.
    """
    y = np.asarray(target)
    n = y.size
    if k < 2 or k > n:
        raise ValueError(f"k must satisfy 2 <= k <= n_rows ({n}), got {k}")
    rng = np.random.Generator(np.random.PCG64(seed))
    folds = np.empty(n, dtype=np.int64)
    offset = 0
    for label in np.unique(y):
        rows = np.flatnonzero(y == label)
        rows = rows[rng.permutation(rows.size)]
        folds[rows] = (offset + np.arange(rows.size)) % k
        offset = (offset + rows.size) % k
    return folds


@dataclass
class CvReport:
    folds: list[dict]
    mean: dict[str, float | None]
    std: dict[str, float | None]
    params: BoosterParams
    seed: int
    k: int
    flagged_folds: list[int]

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "seed": self.seed,
            "k": self.k,
            "folds": self.folds,
            "mean": self.mean,
            "std": self.std,
            "flagged_folds": self.flagged_folds,
        }

    def csv_rows(self, combination: int = 0) -> list[list]:
        rows = []
        for i, fold in enumerate(self.folds):
            rows.append([combination, i] + [_fmt(fold[m]) for m in METRICS])
        return rows


def _fmt(v):
    return "NA" if v is None else repr(float(v))


def _aggregate(values: Sequence[float | None]):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = math.fsum(vals) / len(vals)
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)) if len(vals) > 1 else 0.0
    return mean, std


def cross_validate(dataset, params: BoosterParams, k: int = 5, seed: int = 0, positive_label: int = 0,
                   workers: int = 1) -> CvReport:
    """k-fold CV; each held-out fold is scored with all five metrics.

    Label metrics use a 0.5 probability threshold. A fold whose held-out
    rows hold a single class gets ``auc=None``; it is listed in
    ``flagged_folds`` and left out of the AUC mean.
    """
    y = dataset.target
    if y is None or np.unique(y).size < 2:
        raise ValueError("cross_validate needs a labeled dataset with both classes")
    folds = stratified_kfold(y, k, seed)
    per_fold = []
    flagged = []
    for f in range(k):
        test = np.flatnonzero(folds == f)
        fit = np.flatnonzero(folds != f)
        model = train(dataset.subset(fit), params, workers=workers)
        proba = predict_proba(model, dataset.subset(test))
        result = evaluate(y[test], proba, positive_label)
        if result["auc"] is None:
            flagged.append(f)
        per_fold.append({m: result[m] for m in METRICS} | {"confusion_matrix": result["confusion_matrix"]})
    mean, std = {}, {}
    for m in METRICS:
        mean[m], std[m] = _aggregate([fold[m] for fold in per_fold])
    return CvReport(per_fold, mean, std, params, seed, k, flagged)


def expand_grid(param_grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product in declared order, last parameter varying fastest."""
    if not param_grid or any(len(v) == 0 for v in param_grid.values()):
        raise ValueError("param_grid must be non-empty with non-empty value lists")
    keys = list(param_grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(param_grid[key] for key in keys))]


def grid_search(dataset, param_grid: Mapping[str, Sequence], k: int = 5, seed: int = 0,
                base_params: BoosterParams = BoosterParams(), positive_label: int = 0,
                workers: int = 1) -> tuple[BoosterParams, list[CvReport]]:
    """Cross-validate every grid point; the best has the highest mean AUC.

    Ties go to the earliest grid point.
    """
    reports = []
    best, best_auc = None, -math.inf
    for point in expand_grid(param_grid):
        params = replace(base_params, **coerce(point))
        report = cross_validate(dataset, params, k, seed, positive_label, workers)
        reports.append(report)
        auc = report.mean["auc"]
        if auc is not None and auc > best_auc:
            best, best_auc = params, auc
    if best is None:
        best = reports[0].params
    return best, reports


def write_reports_csv(reports: Sequence[CvReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["combination", "fold", *METRICS])
        for i, report in enumerate(reports):
            writer.writerows(report.csv_rows(i))


def reports_json(reports: Sequence[CvReport], best: BoosterParams | None = None) -> str:
    doc = {"reports": [r.to_dict() for r in reports]}
    if best is not None:
        doc = {"best_params": best.to_dict(), **doc}
    return json.dumps(doc, indent=2) + "\n"
