"""Command-line pipeline: synth -> prep -> train/cv/gridsearch -> evaluate/importance/roc.

Exit status is 0 on success, 1 on usage errors and 2 on data or schema errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import date
from pathlib import Path

import numpy as np

from loanboost import dataset as ds
from loanboost.booster import BoosterModel, feature_importance, log_loss, predict_proba, train
from loanboost.errors import ConfigError, LoanBoostError
from loanboost.metrics import evaluate, roc_curve
from loanboost.modelselect import cross_validate, grid_search, reports_json, write_reports_csv
from loanboost.params import BoosterParams
from loanboost.plotting import plot_importance, plot_roc, roc_svg
from loanboost.synth import REFERENCE_DATE, TABLE_FILES, SynthConfig, synth_generate, write_tables

logger = logging.getLogger("loanboost")

DEFAULT_SEED = 42
_DEFAULTS = BoosterParams()


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive(value: str) -> int:
    return 1 if value == "good" else 0


def _add_booster_flags(p):
    g = p.add_argument_group("booster parameters")
    g.add_argument("--n-estimators", type=int, default=_DEFAULTS.n_estimators)
    g.add_argument("--learning-rate", type=float, default=_DEFAULTS.learning_rate)
    g.add_argument("--subsample", type=float, default=_DEFAULTS.subsample)
    g.add_argument("--reg-alpha", type=float, default=_DEFAULTS.reg_alpha)
    g.add_argument("--reg-lambda", type=float, default=_DEFAULTS.reg_lambda)
    g.add_argument("--max-depth", type=int, default=_DEFAULTS.max_depth)
    g.add_argument("--min-gain", type=float, default=_DEFAULTS.min_gain)
    g.add_argument("--max-bins", type=int, default=_DEFAULTS.max_bins)
    g.add_argument("--mode", choices=("newton", "friedman"), default=_DEFAULTS.mode)
    g.add_argument("--positive-class-weight", type=float, default=_DEFAULTS.positive_class_weight)


def _params(args) -> BoosterParams:
    return BoosterParams(
        n_estimators=args.n_estimators, learning_rate=args.learning_rate, subsample=args.subsample,
        reg_alpha=args.reg_alpha, reg_lambda=args.reg_lambda, max_depth=args.max_depth,
        min_gain=args.min_gain, max_bins=args.max_bins, mode=args.mode,
        positive_class_weight=args.positive_class_weight, seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loanboost", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per boosting round")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--workers", type=int, default=1, help="threads for split search")
        return p

    p = command("synth", "write synthetic demographic/performance/previous CSVs")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--n-demographic", type=int, default=SynthConfig.n_demographic)
    p.add_argument("--n-performance", type=int, default=SynthConfig.n_performance)
    p.add_argument("--n-previous", type=int, default=SynthConfig.n_previous)
    p.add_argument("--bad-rate", type=float, default=SynthConfig.bad_rate)

    p = command("prep", "join and feature-engineer the three tables")
    p.add_argument("--data-dir", type=Path, help="directory holding " + ", ".join(TABLE_FILES))
    p.add_argument("--demographic", type=Path)
    p.add_argument("--performance", type=Path)
    p.add_argument("--previous", type=Path)
    p.add_argument("--reference-date", type=date.fromisoformat, default=REFERENCE_DATE,
                   help="date used to compute applicant age (YYYY-MM-DD)")
    p.add_argument("--max-levels", type=int, default=ds.DEFAULT_MAX_LEVELS)
    p.add_argument("--encodings", type=Path, help="reuse category codes from an earlier sidecar JSON")
    p.add_argument("--out", required=True, type=Path, help="prepared CSV")
    p.add_argument("--sidecar", type=Path, help="encodings JSON (default: <out>.meta.json)")

    p = command("train", "fit a boosted model")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="model JSON")
    _add_booster_flags(p)

    p = command("predict", "score rows with a trained model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    for name, help_text in (("evaluate", "metrics JSON for a model on labeled data"),
                            ("roc", "ROC curve CSV and SVG")):
        p = command(name, help_text)
        p.add_argument("--model", type=Path)
        p.add_argument("--data", type=Path)
        p.add_argument("--positive-label", choices=("bad", "good"), default="bad")
        p.add_argument("--out", required=True, type=Path)
        if name == "evaluate":
            p.add_argument("--threshold", type=float, default=0.5)
        else:
            p.add_argument("--predictions", type=Path, help="CSV with 'target' and 'probability' columns")
            p.add_argument("--svg", type=Path, help="SVG figure path (default: <out> with .svg)")
            p.add_argument("--figure", type=Path, help="also render a PNG with matplotlib")

    p = command("cv", "stratified k-fold cross-validation")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--positive-label", choices=("bad", "good"), default="bad")
    p.add_argument("--out-dir", required=True, type=Path)
    _add_booster_flags(p)

    p = command("gridsearch", "exhaustive grid search scored by mean CV AUC")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--grid", required=True, action="append", metavar="NAME=V1,V2,...",
                   help="parameter values to try; repeat for several parameters, or pass a JSON file")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--positive-label", choices=("bad", "good"), default="bad")
    p.add_argument("--out-dir", required=True, type=Path)
    _add_booster_flags(p)

    p = command("importance", "ranked feature importance CSV")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--kind", choices=("gain", "split_count"), default="gain")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--top", type=int, default=10, help="bars in the optional figure")
    p.add_argument("--figure", type=Path, help="render a PNG bar chart with matplotlib")
    return parser


def _parse_grid(items: list[str]) -> dict:
    grid = {}
    for item in items:
        if "=" not in item:
            path = Path(item)
            if not path.exists():
                raise UsageError(f"--grid expects NAME=V1,V2 or a JSON file, got {item!r}")
            grid.update(json.loads(path.read_text(encoding="utf-8")))
            continue
        name, values = item.split("=", 1)
        name = name.strip().replace("-", "_")
        parsed = []
        for v in values.split(","):
            v = v.strip()
            try:
                parsed.append(json.loads(v))
            except json.JSONDecodeError:
                parsed.append(v)
        grid[name] = parsed
    return grid


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _cmd_synth(args):
    cfg = SynthConfig(seed=args.seed, n_demographic=args.n_demographic, n_performance=args.n_performance,
                      n_previous=args.n_previous, bad_rate=args.bad_rate)
    for path in write_tables(synth_generate(cfg), args.out_dir):
        logger.info("wrote %s", path)


def _cmd_prep(args):
    paths = {}
    for key, fname in zip(("demographic", "performance", "previous"), TABLE_FILES):
        path = getattr(args, key) or (args.data_dir / fname if args.data_dir else None)
        if path is None:
            raise UsageError(f"prep needs --{key} or --data-dir")
        paths[key] = path
    demo = ds.load_csv(paths["demographic"], ds.DEMOGRAPHIC_SCHEMA, "demographic")
    perf = ds.load_csv(paths["performance"], ds.PERFORMANCE_SCHEMA, "performance")
    prev = ds.load_csv(paths["previous"], ds.PREVIOUS_SCHEMA, "previous")
    encoders = ds.load_encoders(args.encodings) if args.encodings else None
    data = ds.join_and_engineer(demo, perf, prev, args.reference_date, args.max_levels, encoders)
    sidecar = args.sidecar or args.out.with_suffix(".meta.json")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    ds.save_prepared(data, args.out, sidecar)
    logger.info("prepared %d rows x %d features -> %s", data.n_rows, data.n_features, args.out)


def _cmd_train(args):
    data = ds.load_prepared(args.data)
    params = _params(args)
    callback = None
    if args.verbose:
        def callback(t, margins):
            logger.info("round %d: train log-loss %.6f", t, log_loss(data.target, margins))
    model = train(data, params, workers=args.workers, callback=callback)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    model.save(args.out)


def _scored(args):
    if args.model is None or args.data is None:
        raise UsageError(f"{args.command} needs --model and --data")
    model = BoosterModel.load(args.model)
    data = ds.load_prepared(args.data)
    return data.target, predict_proba(model, data)


def _cmd_predict(args):
    model = BoosterModel.load(args.model)
    data = ds.load_prepared(args.data, require_target=False)
    proba = predict_proba(model, data)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        has_target = data.target is not None
        writer.writerow(["row", "probability"] + (["target"] if has_target else []))
        for i, p in enumerate(proba):
            writer.writerow([i, repr(float(p))] + ([int(data.target[i])] if has_target else []))


def _cmd_evaluate(args):
    y, proba = _scored(args)
    _write_json(args.out, evaluate(y, proba, _positive(args.positive_label), args.threshold))


def _read_predictions(path: Path):
    table = ds.load_csv(path, {"target": ds.NUMERIC, "probability": ds.NUMERIC})
    y = np.array(table.column("target"), dtype=float)
    p = np.array(table.column("probability"), dtype=float)
    if np.isnan(y).any() or np.isnan(p).any():
        raise LoanBoostError(f"{path}: missing target or probability values")
    return y.astype(np.int64), p


def _cmd_roc(args):
    if args.predictions is not None:
        y, proba = _read_predictions(args.predictions)
    else:
        y, proba = _scored(args)
    label = _positive(args.positive_label)
    try:
        curve = roc_curve(y, proba if label == 1 else -proba, label)
    except ValueError as exc:
        raise LoanBoostError(str(exc)) from None
    args.out.parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(args.out)
    svg = args.svg or args.out.with_suffix(".svg")
    svg.write_text(roc_svg(curve.fpr, curve.tpr, curve.auc), encoding="utf-8")
    if args.figure:
        plot_roc(curve.fpr, curve.tpr, curve.auc, args.figure)
    logger.info("AUC %.6f", curve.auc)


def _cmd_cv(args):
    data = ds.load_prepared(args.data)
    report = cross_validate(data, _params(args), args.k, args.seed, _positive(args.positive_label), args.workers)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_reports_csv([report], args.out_dir / "cv_folds.csv")
    _write_json(args.out_dir / "cv_summary.json", report.to_dict())
    logger.info("mean AUC %s", report.mean["auc"])


def _cmd_gridsearch(args):
    data = ds.load_prepared(args.data)
    grid = _parse_grid(args.grid)
    best, reports = grid_search(data, grid, args.k, args.seed, _params(args), _positive(args.positive_label),
                                args.workers)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(args.out_dir / "best_params.json", best.to_dict())
    write_reports_csv(reports, args.out_dir / "grid_folds.csv")
    (args.out_dir / "grid_reports.json").write_text(reports_json(reports, best), encoding="utf-8")


def _cmd_importance(args):
    model = BoosterModel.load(args.model)
    ranked = feature_importance(model, args.kind)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "score", "kind"])
        for name, score in ranked:
            writer.writerow([name, repr(score), args.kind])
    if args.figure:
        plot_importance(ranked, args.figure, args.top, args.kind)


COMMANDS = {
    "synth": _cmd_synth,
    "prep": _cmd_prep,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "roc": _cmd_roc,
    "cv": _cmd_cv,
    "gridsearch": _cmd_gridsearch,
    "importance": _cmd_importance,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        parser.print_usage(sys.stderr)
        print("loanboost: error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"loanboost: error: {exc}", file=sys.stderr)
        return 1
    except (LoanBoostError, OSError, ValueError, KeyError) as exc:
        print(f"loanboost: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
