"""Booster hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from loanboost.errors import ConfigError

MODES = ("newton", "friedman")


@dataclass(frozen=True)
class BoosterParams:
    """Training configuration.

    Defaults reproduce the grid-searched setting used for the loan data:
    1000 trees, learning rate 0.01, row subsample 0.8, L1 and L2 leaf
    penalties of 1 and depth 6.
    """

    n_estimators: int = 1000
    learning_rate: float = 0.01
    subsample: float = 0.8
    reg_alpha: float = 1.0
    reg_lambda: float = 1.0
    max_depth: int = 6
    min_gain: float = 0.0
    max_bins: int = 256
    mode: str = "newton"
    positive_class_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise ConfigError("n_estimators must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigError("subsample must lie in (0, 1]")
        if self.reg_alpha < 0 or self.reg_lambda < 0:
            raise ConfigError("reg_alpha and reg_lambda must be >= 0")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_gain < 0:
            raise ConfigError("min_gain must be >= 0")
        if self.max_bins < 2:
            raise ConfigError("max_bins must be >= 2")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.positive_class_weight < 0:
            raise ConfigError("positive_class_weight must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BoosterParams":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown booster parameters: {sorted(unknown)}")
        return cls(**coerce(data))


_INT_FIELDS = {"n_estimators", "max_depth", "max_bins", "seed"}
_FLOAT_FIELDS = {"learning_rate", "subsample", "reg_alpha", "reg_lambda", "min_gain", "positive_class_weight"}


def coerce(data: dict) -> dict:
    """Cast parameter values to their declared types (ints stay ints in JSON)."""
    out = {}
    for key, value in data.items():
        if key in _INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{key} must be an integer, got {value}")
            out[key] = int(value)
        elif key in _FLOAT_FIELDS:
            out[key] = float(value)
        else:
            out[key] = value
    return out
