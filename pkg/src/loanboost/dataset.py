"""Loan table ingestion, joining and feature engineering.

Three raw tables (demographic, loan performance, previous loans) are read from
CSV into :class:`RawTable` objects, left-joined on ``customer_id`` and turned
into a model-ready :class:`Dataset`. Missing cells are carried through as NaN
with an explicit mask; nothing is imputed.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from loanboost.errors import ParseError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
DATE = "date"
IDENTIFIER = "identifier"
KINDS = (NUMERIC, CATEGORICAL, DATE, IDENTIFIER)

MISSING_TOKENS = ("", "NA")
CUSTOMER_ID = "customer_id"
TARGET_COLUMN = "good_bad_flag"
GOOD_LABEL = "Good"

DEMOGRAPHIC_SCHEMA = (
    ("customer_id", IDENTIFIER),
    ("birthdate", DATE),
    ("longitude", NUMERIC),
    ("latitude", NUMERIC),
    ("bank_account_type", CATEGORICAL),
    ("bank_name", CATEGORICAL),
    ("employment_status", CATEGORICAL),
    ("education_level", CATEGORICAL),
    ("has_referral", CATEGORICAL),
)

PERFORMANCE_SCHEMA = (
    ("customer_id", IDENTIFIER),
    ("loan_id", IDENTIFIER),
    ("loan_number", NUMERIC),
    ("approved_date", DATE),
    ("creation_date", DATE),
    ("loan_amount", NUMERIC),
    ("total_due", NUMERIC),
    ("term_days", NUMERIC),
    ("referred_by", IDENTIFIER),
    ("good_bad_flag", CATEGORICAL),
)

PREVIOUS_SCHEMA = (
    ("customer_id", IDENTIFIER),
    ("loan_id", IDENTIFIER),
    ("loan_number", NUMERIC),
    ("approved_date", DATE),
    ("creation_date", DATE),
    ("loan_amount", NUMERIC),
    ("total_due", NUMERIC),
    ("term_days", NUMERIC),
    ("closed_date", DATE),
    ("first_due_date", DATE),
    ("first_repaid_date", DATE),
    ("referred_by", IDENTIFIER),
)

ENGINEERED_FEATURES = (
    "age_years",
    "loan_amount",
    "total_due",
    "term_days",
    "interest_burden",
    "loan_number",
    "longitude",
    "latitude",
    "prev_loan_count",
    "prev_mean_amount",
    "prev_mean_term_days",
    "prev_mean_days_late",
)

DEFAULT_MAX_LEVELS = 16


@dataclass(frozen=True)
class RawTable:
    """A parsed CSV table; missing cells are ``None``."""

    name: str
    columns: tuple[tuple[str, str], ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        names = [c for c, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"{self.name}: duplicate column names")
        for col, kind in self.columns:
            if kind not in KINDS:
                raise SchemaError(f"{self.name}: column {col!r} has unknown kind {kind!r}")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(f"{self.name}: row {i} has {len(row)} cells, expected {width}")

    @property
    def column_names(self) -> list[str]:
        return [c for c, _ in self.columns]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def has_column(self, name: str) -> bool:
        return name in self.column_names

    def index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise SchemaError(f"{self.name}: missing column {name!r}") from None

    def kind(self, name: str) -> str:
        return self.columns[self.index(name)][1]

    def column(self, name: str) -> list:
        j = self.index(name)
        return [row[j] for row in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.column_names)
            for row in self.rows:
                writer.writerow([_format_cell(v) for v in row])


def _format_cell(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, float):
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    return str(value)


def _format_float(value: float) -> str:
    return "NA" if math.isnan(value) else repr(float(value))


def _parse_cell(text: str, kind: str, column: str, line: int):
    if text in MISSING_TOKENS:
        return None
    if kind == NUMERIC:
        try:
            value = float(text)
        except ValueError:
            raise ParseError(f"column {column!r}, line {line}: cannot parse {text!r} as a number") from None
        if math.isnan(value):
            return None
        return value
    if kind == DATE:
        try:
            if len(text) != 10:
                raise ValueError
            return date.fromisoformat(text)
        except ValueError:
            raise ParseError(f"column {column!r}, line {line}: cannot parse {text!r} as YYYY-MM-DD") from None
    return text


def load_csv(path, schema: Mapping[str, str] | Sequence[tuple[str, str]] | None = None, name: str | None = None) -> RawTable:
    """Read a header-first CSV file into a :class:`RawTable`.

    Args:
        path: file to read.
        schema: expected column kinds, either a mapping or ``(name, kind)``
            pairs. Columns present in the file but absent from the schema are
            read as categorical. Columns in the schema but not the file raise
            :class:`SchemaError`.
        name: table name; defaults to the file stem.

    Raises:
        OSError: the file cannot be read.
        ParseError: wrong cell count or an unparseable numeric/date cell. The
            message names the 1-based line number (header is line 1).
    """
    path = Path(path)
    kinds = dict(schema or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row expected") from None
        missing = [c for c in kinds if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        columns = tuple((c, kinds.get(c, CATEGORICAL)) for c in header)
        rows = []
        for cells in reader:
            line = reader.line_num
            if not cells:
                continue
            if len(cells) != len(columns):
                raise ParseError(f"{path}: line {line} has {len(cells)} cells, expected {len(columns)}")
            rows.append(tuple(_parse_cell(t, k, c, line) for t, (c, k) in zip(cells, columns)))
    return RawTable(name or path.stem, columns, tuple(rows))


@dataclass(frozen=True)
class CategoryEncoder:
    """Integer codes for one categorical column.

    ``levels[i]`` has code ``i``; every other non-missing value (including
    levels never seen in training) maps to ``other_code``.
    """

    levels: tuple[str, ...]

    @property
    def other_code(self) -> int:
        return len(self.levels)

    def encode(self, values: Iterable) -> np.ndarray:
        lookup = {lv: i for i, lv in enumerate(self.levels)}
        return np.array(
            [np.nan if v is None else float(lookup.get(v, self.other_code)) for v in values],
            dtype=float,
        )

    @classmethod
    def fit(cls, values: Iterable, max_levels: int = DEFAULT_MAX_LEVELS) -> "CategoryEncoder":
        if max_levels < 2:
            raise ValueError("max_levels must be >= 2")
        counts = Counter(v for v in values if v is not None)
        ordered = sorted(counts, key=lambda lv: (-counts[lv], lv))
        if len(ordered) > max_levels - 1:
            ordered = ordered[: max_levels - 1]
        return cls(tuple(ordered))


def encode_categoricals(table: RawTable, max_levels: int = DEFAULT_MAX_LEVELS,
                        encoders: Mapping[str, CategoryEncoder] | None = None):
    """Integer-code every categorical column of ``table``.

    Codes follow descending level frequency with lexicographic tie-breaks;
    levels past the first ``max_levels - 1`` share one "other" code. Pass
    previously fitted ``encoders`` to reuse their mapping at scoring time.

    Returns:
        ``(codes, encoders)``: dicts keyed by column name, holding the float
        code arrays (NaN where missing) and the :class:`CategoryEncoder` used.
    """
    if max_levels < 2:
        raise ValueError("max_levels must be >= 2")
    codes, fitted = {}, {}
    for col, kind in table.columns:
        if kind != CATEGORICAL:
            continue
        values = table.column(col)
        enc = encoders[col] if encoders is not None and col in encoders else CategoryEncoder.fit(values, max_levels)
        fitted[col] = enc
        codes[col] = enc.encode(values)
    return codes, fitted


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric feature matrix with explicit missing mask and binary target.

    ``X`` has shape ``(n_rows, n_features)``; missing cells hold NaN and are
    flagged in ``missing_mask``. ``target`` uses 1 for good loans and 0 for
    default. ``target`` may be ``None`` for unlabeled scoring data.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    target: np.ndarray | None
    missing_mask: np.ndarray = None
    encodings: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asfortranarray(np.asarray(self.X, dtype=float))
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaError(f"feature matrix shape {X.shape} does not match {len(self.feature_names)} names")
        mask = np.isnan(X) if self.missing_mask is None else np.asarray(self.missing_mask, dtype=bool)
        if mask.shape != X.shape:
            raise SchemaError("missing_mask shape does not match feature matrix")
        X = X.copy(order="F")
        X[mask] = np.nan
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.target is not None:
            y = np.asarray(self.target)
            if y.shape != (X.shape[0],):
                raise SchemaError("target length does not match feature rows")
            if not np.all((y == 0) | (y == 1)):
                raise SchemaError("target must contain only 0 and 1")
            object.__setattr__(self, "target", y.astype(np.int64))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.feature_names, self.X[rows], None if self.target is None else self.target[rows],
                       self.missing_mask[rows], self.encodings)

    def select(self, names: Sequence[str]) -> "Dataset":
        """Reorder/select columns by name; raises SchemaError if any is absent."""
        absent = [n for n in names if n not in self.feature_names]
        if absent:
            raise SchemaError(f"dataset lacks feature columns {absent}")
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(tuple(names), self.X[:, idx], self.target, self.missing_mask[:, idx], self.encodings)

    def equals(self, other: "Dataset") -> bool:
        same_target = (self.target is None and other.target is None) or (
            self.target is not None and other.target is not None and np.array_equal(self.target, other.target))
        return (self.feature_names == other.feature_names and same_target
                and np.array_equal(self.missing_mask, other.missing_mask)
                and np.array_equal(self.X, other.X, equal_nan=True))


def _require(table: RawTable, names: Iterable[str]) -> None:
    absent = [n for n in names if not table.has_column(n)]
    if absent:
        raise SchemaError(f"{table.name}: missing columns {absent}")


def _num(value) -> float:
    return np.nan if value is None else float(value)


def join_and_engineer(demographic: RawTable, performance: RawTable, previous: RawTable,
                      reference_date: date, max_levels: int = DEFAULT_MAX_LEVELS,
                      encoders: Mapping[str, CategoryEncoder] | None = None,
                      good_label: str = GOOD_LABEL) -> Dataset:
    """Left-join the three loan tables onto the performance rows and build features.

    One output row per performance row. Demographic attributes are looked up
    by ``customer_id``; previous loans are aggregated per customer. Customers
    absent from either lookup table get NaN in the derived features.

    Raises:
        SchemaError: ``good_bad_flag`` absent or empty in a row, required
            columns missing, or a duplicated ``customer_id`` in demographic.
    """
    if not performance.has_column(TARGET_COLUMN):
        raise SchemaError(f"{performance.name}: missing target column {TARGET_COLUMN!r}")
    _require(performance, ("customer_id", "loan_amount", "total_due", "term_days", "loan_number"))
    _require(demographic, ("customer_id", "birthdate", "longitude", "latitude"))
    _require(previous, ("customer_id", "loan_amount", "term_days", "first_due_date", "first_repaid_date"))

    demo_ids = demographic.column(CUSTOMER_ID)
    demo_index = {}
    for i, cid in enumerate(demo_ids):
        if cid in demo_index:
            raise SchemaError(f"{demographic.name}: duplicate customer id {cid!r}")
        demo_index[cid] = i

    prev_amounts = defaultdict(list)
    prev_terms = defaultdict(list)
    prev_late = defaultdict(list)
    prev_count = Counter()
    for cid, amt, term, due, repaid in zip(previous.column(CUSTOMER_ID), previous.column("loan_amount"),
                                           previous.column("term_days"), previous.column("first_due_date"),
                                           previous.column("first_repaid_date")):
        prev_count[cid] += 1
        if amt is not None:
            prev_amounts[cid].append(amt)
        if term is not None:
            prev_terms[cid].append(term)
        if due is not None and repaid is not None:
            prev_late[cid].append((repaid - due).days)

    n = performance.n_rows
    perf_ids = performance.column(CUSTOMER_ID)
    flags = performance.column(TARGET_COLUMN)
    if any(f is None for f in flags):
        raise SchemaError(f"{performance.name}: empty {TARGET_COLUMN!r} cell")
    target = np.array([1 if f == good_label else 0 for f in flags], dtype=np.int64)

    birth = demographic.column("birthdate")
    lon = demographic.column("longitude")
    lat = demographic.column("latitude")
    rows_in_demo = [demo_index.get(cid) for cid in perf_ids]

    def from_demo(values, convert):
        return np.array([np.nan if r is None or values[r] is None else convert(values[r]) for r in rows_in_demo],
                        dtype=float)

    loan_amount = np.array([_num(v) for v in performance.column("loan_amount")])
    total_due = np.array([_num(v) for v in performance.column("total_due")])
    with np.errstate(divide="ignore", invalid="ignore"):
        burden = np.where(loan_amount > 0, (total_due - loan_amount) / loan_amount, np.nan)

    def prev_mean(groups):
        return np.array([np.mean(groups[c]) if groups.get(c) else np.nan for c in perf_ids], dtype=float)

    features = {
        "age_years": from_demo(birth, lambda b: (reference_date - b).days / 365.25),
        "loan_amount": loan_amount,
        "total_due": total_due,
        "term_days": np.array([_num(v) for v in performance.column("term_days")]),
        "interest_burden": burden,
        "loan_number": np.array([_num(v) for v in performance.column("loan_number")]),
        "longitude": from_demo(lon, float),
        "latitude": from_demo(lat, float),
        "prev_loan_count": np.array([float(prev_count[c]) if prev_count.get(c) else np.nan for c in perf_ids]),
        "prev_mean_amount": prev_mean(prev_amounts),
        "prev_mean_term_days": prev_mean(prev_terms),
        "prev_mean_days_late": prev_mean(prev_late),
    }

    codes, fitted = encode_categoricals(demographic, max_levels, encoders)
    for col, demo_codes in codes.items():
        features[col] = np.array([np.nan if r is None else demo_codes[r] for r in rows_in_demo], dtype=float)

    names = tuple(features)
    X = np.column_stack([features[k] for k in names]) if n else np.empty((0, len(names)))
    encodings = {col: list(enc.levels) for col, enc in fitted.items()}
    return Dataset(names, X, target, encodings=encodings)


def save_prepared(dataset: Dataset, csv_path, sidecar_path=None) -> None:
    """Write the dataset as CSV (features + ``target``) and an optional JSON sidecar."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        has_target = dataset.target is not None
        writer.writerow(list(dataset.feature_names) + (["target"] if has_target else []))
        for i in range(dataset.n_rows):
            cells = [_format_float(v) for v in dataset.X[i]]
            if has_target:
                cells.append(str(int(dataset.target[i])))
            writer.writerow(cells)
    if sidecar_path is not None:
        meta = {"feature_names": list(dataset.feature_names), "encodings": dataset.encodings}
        Path(sidecar_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_encoders(sidecar_path) -> dict[str, CategoryEncoder]:
    meta = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    return {col: CategoryEncoder(tuple(levels)) for col, levels in meta.get("encodings", {}).items()}


def load_prepared(csv_path, sidecar_path=None, require_target: bool = True) -> Dataset:
    """Inverse of :func:`save_prepared`."""
    table = load_csv(csv_path)
    names = [c for c in table.column_names if c != "target"]
    has_target = table.has_column("target")
    if require_target and not has_target:
        raise SchemaError(f"{csv_path}: no 'target' column")
    X = np.empty((table.n_rows, len(names)))
    for j, col in enumerate(names):
        for i, v in enumerate(table.column(col)):
            if v is None:
                X[i, j] = np.nan
                continue
            try:
                X[i, j] = float(v)
            except ValueError:
                raise ParseError(f"{csv_path}: column {col!r}, line {i + 2}: not a number: {v!r}") from None
    target = None
    if has_target:
        raw = table.column("target")
        if any(v not in ("0", "1") for v in raw):
            raise SchemaError(f"{csv_path}: target must be 0 or 1")
        target = np.array([int(v) for v in raw], dtype=np.int64)
    encodings = {}
    if sidecar_path is not None:
        encodings = json.loads(Path(sidecar_path).read_text(encoding="utf-8")).get("encodings", {})
    return Dataset(tuple(names), X, target, encodings=encodings)
