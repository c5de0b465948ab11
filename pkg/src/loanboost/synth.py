"""Synthetic stand-in for the demographic / performance / previous-loan tables.

The generated tables follow the schemas in :mod:`loanboost.dataset`. The
``good_bad_flag`` is drawn from a planted logistic model driven mainly by
applicant age and location (latitude, plus a weaker longitude term), with a
smaller contribution from a latent repayment-discipline factor that also
shows up as lateness in previous loans.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from loanboost.dataset import (
    DEMOGRAPHIC_SCHEMA,
    PERFORMANCE_SCHEMA,
    PREVIOUS_SCHEMA,
    RawTable,
)
from loanboost.errors import ConfigError

REFERENCE_DATE = date(2017, 8, 1)
TABLE_FILES = ("demographic.csv", "performance.csv", "previous.csv")

# planted coefficients on the good-loan logit (standardized inputs)
AGE_COEF = 2.2
LATITUDE_COEF = -2.0
LONGITUDE_COEF = 0.6
DISCIPLINE_COEF = 0.8

_BANKS = ("GT Bank", "First Bank", "Access Bank", "UBA", "Zenith Bank", "Diamond Bank", "EcoBank",
          "Stanbic IBTC", "Sterling Bank", "Fidelity Bank", "Skye Bank", "FCMB", "Union Bank",
          "Wema Bank", "Heritage Bank", "Keystone Bank", "Standard Chartered", "Unity Bank")
_BANK_P = np.array([18, 14, 12, 10, 10, 7, 6, 5, 4, 3, 2, 2, 2, 1.5, 1.5, 1, 1, 1], dtype=float)
_ACCOUNT = ("Savings", "Other", "Current")
_ACCOUNT_P = np.array([0.78, 0.18, 0.04])
_EMPLOYMENT = ("Permanent", "Self-Employed", "Student", "Unemployed", "Retired", "Contract")
_EMPLOYMENT_P = np.array([0.74, 0.12, 0.04, 0.04, 0.01, 0.05])
_EDUCATION = ("Graduate", "Secondary", "Post-Graduate", "Primary")
_EDUCATION_P = np.array([0.62, 0.2, 0.16, 0.02])
_AMOUNTS = np.array([10000.0, 15000.0, 20000.0, 30000.0, 40000.0, 50000.0])
_TERMS = np.array([15.0, 30.0, 60.0, 90.0])
_RATE = {15.0: 0.15, 30.0: 0.3, 60.0: 0.6, 90.0: 0.9}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_demographic: int = 4346
    n_performance: int = 4368
    n_previous: int = 18183
    bad_rate: float = 0.22

    def __post_init__(self):
        if not 0.0 < self.bad_rate < 1.0:
            raise ConfigError(f"bad_rate must lie in (0, 1), got {self.bad_rate}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.n_demographic < 1 or self.n_performance < 0 or self.n_previous < 0:
            raise ConfigError("row counts must be non-negative (n_demographic >= 1)")


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _calibrate_intercept(logit: np.ndarray, good_rate: float) -> float:
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _sigmoid(logit + mid).mean() < good_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _standardize(x):
    return (x - x.mean()) / (x.std() or 1.0)


def _maybe(rng, values, p_missing):
    keep = rng.random(len(values)) >= p_missing
    return [v if k else None for v, k in zip(values, keep)]


def synth_generate(config: SynthConfig = SynthConfig()) -> tuple[RawTable, RawTable, RawTable]:
    """Generate ``(demographic, performance, previous)`` tables.

    Output is a pure function of ``config``.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n_d, n_p, n_q = config.n_demographic, config.n_performance, config.n_previous

    # demographic
    cust_ids = [f"C{i:06d}" for i in range(n_d)]
    age = rng.uniform(21.0, 60.0, n_d)
    birth = [REFERENCE_DATE - timedelta(days=int(round(a * 365.25))) for a in age]
    longitude = rng.uniform(3.0, 9.0, n_d)
    latitude = rng.uniform(4.3, 13.0, n_d)
    discipline = rng.standard_normal(n_d)
    account = rng.choice(len(_ACCOUNT), n_d, p=_ACCOUNT_P)
    bank = rng.choice(len(_BANKS), n_d, p=_BANK_P / _BANK_P.sum())
    employment = rng.choice(len(_EMPLOYMENT), n_d, p=_EMPLOYMENT_P)
    education = rng.choice(len(_EDUCATION), n_d, p=_EDUCATION_P)
    referral = rng.random(n_d) < 0.1
    demo_rows = list(zip(
        cust_ids,
        birth,
        [round(float(v), 6) for v in longitude],
        [round(float(v), 6) for v in latitude],
        [_ACCOUNT[k] for k in account],
        [_BANKS[k] for k in bank],
        _maybe(rng, [_EMPLOYMENT[k] for k in employment], 0.15),
        _maybe(rng, [_EDUCATION[k] for k in education], 0.85),
        ["Yes" if r else "No" for r in referral],
    ))

    # performance customers: each demographic customer once, extras repeat
    order = rng.permutation(n_d)
    if n_p <= n_d:
        perf_cust = order[:n_p]
    else:
        perf_cust = np.concatenate([order, rng.choice(n_d, n_p - n_d)])

    # previous loans attach to a subset of the performance customers
    distinct = np.unique(perf_cust)
    active = distinct[rng.random(len(distinct)) < 0.9] if len(distinct) else distinct
    if n_q and len(active) == 0:
        active = distinct[:1] if len(distinct) else np.arange(min(n_d, 1))
    counts = np.zeros(n_d, dtype=np.int64)
    if n_q:
        # every active customer gets one loan when rows allow, the rest spread by activity
        base = active[: min(len(active), n_q)]
        counts[base] += 1
        remaining = n_q - len(base)
        if remaining:
            activity = rng.gamma(2.0, 1.0, len(active))
            extra = rng.choice(active, remaining, p=activity / activity.sum())
            np.add.at(counts, extra, 1)

    prev_rows = []
    loan_seq = 0
    for c in np.flatnonzero(counts):
        k = int(counts[c])
        start = date(2016, 1, 1) + timedelta(days=int(rng.integers(0, 120)))
        for j in range(k):
            loan_seq += 1
            approved = start + timedelta(days=int(j * 35 + rng.integers(0, 10)))
            creation = approved - timedelta(days=int(rng.integers(0, 2)))
            amount = float(_AMOUNTS[min(j // 2, 3)])
            term = float(_TERMS[min(int(rng.integers(0, 2)) + j // 4, 3)] if j else 30.0)
            due_total = amount * (1.0 + _RATE[term] * 0.5)
            first_due = approved + timedelta(days=int(min(term, 30.0)))
            late = rng.normal(2.0 - 3.0 * discipline[c], 3.0)
            repaid = first_due + timedelta(days=int(round(late)))
            closed = repaid + timedelta(days=int(rng.integers(0, 10)))
            prev_rows.append([
                cust_ids[c], f"P{loan_seq:07d}", float(j + 1), approved, creation, amount, due_total, term,
                closed, first_due, repaid, None,
            ])
    # missingness typical of the real extract
    for row in prev_rows:
        if rng.random() < 0.03:
            row[10] = None
        if rng.random() < 0.05:
            row[11] = cust_ids[int(rng.integers(0, n_d))]
    prev_rows = [tuple(r) for r in prev_rows]

    # performance rows
    z_age = _standardize(age)
    z_lat = _standardize(latitude)
    z_lon = _standardize(longitude)
    cust_logit = AGE_COEF * z_age + LATITUDE_COEF * z_lat + LONGITUDE_COEF * z_lon + DISCIPLINE_COEF * discipline
    logit = cust_logit[perf_cust] if n_p else np.empty(0)
    if n_p:
        logit = logit + _calibrate_intercept(logit, 1.0 - config.bad_rate)
    good = rng.random(n_p) < _sigmoid(logit)

    perf_rows = []
    for i in range(n_p):
        c = int(perf_cust[i])
        loan_number = float(counts[c] + 1)
        amount = float(_AMOUNTS[min(int(counts[c]) // 2 + int(rng.integers(0, 2)), 5)])
        term = float(_TERMS[int(rng.choice(4, p=[0.25, 0.6, 0.1, 0.05]))])
        approved = date(2017, 7, 1) + timedelta(days=int(rng.integers(0, 31)))
        creation = approved - timedelta(days=int(rng.integers(0, 2)))
        referred = cust_ids[int(rng.integers(0, n_d))] if rng.random() < 0.13 else None
        perf_rows.append((
            cust_ids[c], f"L{i:07d}", loan_number, approved, creation, amount,
            amount * (1.0 + _RATE[term] * 0.5), term, referred, "Good" if good[i] else "Bad",
        ))

    return (
        RawTable("demographic", DEMOGRAPHIC_SCHEMA, tuple(demo_rows)),
        RawTable("performance", PERFORMANCE_SCHEMA, tuple(perf_rows)),
        RawTable("previous", PREVIOUS_SCHEMA, tuple(prev_rows)),
    )


def write_tables(tables, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for table, fname in zip(tables, TABLE_FILES):
        path = out_dir / fname
        table.to_csv(path)
        paths.append(path)
    return paths
