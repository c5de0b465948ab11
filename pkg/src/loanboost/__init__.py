"""Gradient-boosted trees for loan-default classification."""

from loanboost.booster import (
    BoosterModel,
    BoosterParams,
    feature_importance,
    predict_proba,
    train,
)
from loanboost.dataset import Dataset, RawTable, join_and_engineer, load_csv
from loanboost.errors import ConfigError, LoanBoostError, ParseError, SchemaError
from loanboost.metrics import ConfusionMatrix, RocCurve, confusion_matrix, roc_curve, scalar_metrics
from loanboost.synth import SynthConfig, synth_generate

__version__ = "0.1.0"

__all__ = [
    "BoosterModel",
    "BoosterParams",
    "ConfigError",
    "ConfusionMatrix",
    "Dataset",
    "LoanBoostError",
    "ParseError",
    "RawTable",
    "RocCurve",
    "SchemaError",
    "SynthConfig",
    "confusion_matrix",
    "feature_importance",
    "join_and_engineer",
    "load_csv",
    "predict_proba",
    "roc_curve",
    "scalar_metrics",
    "synth_generate",
    "train",
]
