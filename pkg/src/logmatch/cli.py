"""Batch command-line front end.

Commands: ``register`` (align two scans), ``predict`` (basket predictions
for a test manifest), ``evaluate`` (score predictions against truth),
``experiment`` (repeated split/predict/evaluate runs), ``split`` (list the
partitions). Data goes to stdout or ``--output``; progress and errors go to
stderr so the data streams stay machine-parseable. All randomness flows
from ``--seed``.

Exit codes: 0 success, 1 internal numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

from . import dataset as dataset_mod
from . import io as io_mod
from . import metrics as metrics_mod
from . import predictor as predictor_mod
from .errors import InvalidInputError, NumericalError, ParseError
from .metrics import MetricConfig, ScoredPair, ScoreReport
from .predictor import LogRecord, PredictionOutcome
from .registration import IcpConfig, icp_align

PREDICTOR_NAMES = ("icp", "mean", "knn")


def _add_icp_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("alignment")
    group.add_argument("--tau", type=float, default=1e-8,
                       help="convergence threshold on the mse drop, mm^2 (default 1e-8)")
    group.add_argument("--max-iters", type=int, default=50,
                       help="maximum ICP iterations (default 50)")
    group.add_argument("--pre-align", action="store_true",
                       help="translate the moving cloud onto the model centroid before iterating")
    group.add_argument("--stride", type=int, default=1,
                       help="subsample the moving cloud, keeping every m-th point (default 1)")


def _add_metric_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("scoring")
    group.add_argument("--epsilon", type=float, default=1e-6,
                       help="ratio-score guard for zero quantities (default 1e-6)")
    group.add_argument("--no-filter", action="store_true",
                       help="keep products where both real and predicted quantities are zero")


def _add_split_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("partitioning")
    group.add_argument("--train-frac", type=float, default=0.6,
                       help="fraction of records in the training set (default 0.6)")
    group.add_argument("--seed", type=int, default=0,
                       help="partition seed; the only entropy source (default 0)")
    group.add_argument("--runs", type=int, default=10,
                       help="number of repeated partitions (default 10)")
    group.add_argument("--drop-empty", action="store_true",
                       help="remove logs whose basket is all-zero before splitting")


def _add_predictor_flags(parser: argparse.ArgumentParser, multi: bool) -> None:
    group = parser.add_argument_group("prediction")
    if multi:
        group.add_argument("--predictor", default="icp",
                           help="comma-separated predictors to run: icp, mean, knn (default icp)")
    else:
        group.add_argument("--predictor", default="icp", choices=PREDICTOR_NAMES,
                           help="predictor to run (default icp)")
    group.add_argument("--k", type=int, default=3,
                       help="neighbour count for the knn predictor (default 3)")
    group.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker processes for ICP alignments (default: available parallelism)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logmatch",
        description="Register 3D log scans, predict product baskets, score predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_register = sub.add_parser("register", help="align one scan onto another")
    p_register.add_argument("scan_a", help="moving scan file (.xyz, .csv or .ply)")
    p_register.add_argument("scan_b", help="model scan file")
    _add_icp_flags(p_register)
    p_register.add_argument("--trace", metavar="PATH",
                            help="also write the per-iteration mse trace as csv")
    p_register.set_defaults(func=cmd_register)

    p_predict = sub.add_parser("predict", help="predict baskets for a test manifest")
    p_predict.add_argument("manifest_train", help="training manifest csv (id,scan_path)")
    p_predict.add_argument("manifest_test", help="test manifest csv (id,scan_path)")
    p_predict.add_argument("--baskets", metavar="PATH",
                           help="training baskets csv (default: sibling of the training manifest)")
    _add_predictor_flags(p_predict, multi=False)
    _add_icp_flags(p_predict)
    p_predict.add_argument("--output", default="-", help="predictions csv path (default stdout)")
    p_predict.set_defaults(func=cmd_predict)

    p_evaluate = sub.add_parser("evaluate", help="score a predictions file against truth")
    p_evaluate.add_argument("predictions", help="predictions csv from the predict command")
    p_evaluate.add_argument("truth", help="truth baskets csv (id,<product...>)")
    _add_metric_flags(p_evaluate)
    p_evaluate.add_argument("--label", default="eval", help="predictor column value (default 'eval')")
    p_evaluate.add_argument("--output", default="-", help="report path (default stdout)")
    p_evaluate.add_argument("--format", default="csv", choices=("csv", "json"),
                            help="report format (default csv)")
    p_evaluate.set_defaults(func=cmd_evaluate)

    p_experiment = sub.add_parser("experiment", help="repeated split/predict/evaluate runs")
    p_experiment.add_argument("manifest", help="full dataset manifest csv")
    p_experiment.add_argument("--baskets", metavar="PATH",
                              help="baskets csv (default: sibling of the manifest)")
    _add_predictor_flags(p_experiment, multi=True)
    _add_split_flags(p_experiment)
    _add_icp_flags(p_experiment)
    _add_metric_flags(p_experiment)
    p_experiment.add_argument("--output", default="-", help="report path (default stdout)")
    p_experiment.add_argument("--format", default="csv", choices=("csv", "json"),
                              help="report format (default csv)")
    p_experiment.set_defaults(func=cmd_experiment)

    p_split = sub.add_parser("split", help="list train/test partitions without predicting")
    p_split.add_argument("manifest", help="full dataset manifest csv")
    p_split.add_argument("--baskets", metavar="PATH",
                         help="baskets csv (default: sibling of the manifest)")
    _add_split_flags(p_split)
    p_split.add_argument("--run-index", type=int, default=None,
                         help="emit a single run instead of all runs")
    p_split.add_argument("--output", default="-", help="partition csv path (default stdout)")
    p_split.set_defaults(func=cmd_split)

    return parser


def _icp_config(args: argparse.Namespace) -> IcpConfig:
    return IcpConfig(
        tau=args.tau,
        max_iterations=args.max_iters,
        pre_align=args.pre_align,
        stride=args.stride,
    )


def _metric_config(args: argparse.Namespace) -> MetricConfig:
    return MetricConfig(epsilon=args.epsilon, filter_zero_pairs=not args.no_filter)


def cmd_register(args: argparse.Namespace) -> int:
    cfg = _icp_config(args)
    moving = io_mod.load_scan(args.scan_a)
    model = io_mod.load_scan(args.scan_b)
    result, trace = icp_align(moving, model, cfg)
    quat = result.transform.rotation
    translation = result.transform.translation
    payload = {
        "q0": quat.q0, "q1": quat.q1, "q2": quat.q2, "q3": quat.q3,
        "tx": float(translation[0]), "ty": float(translation[1]), "tz": float(translation[2]),
        "mse": result.mse,
        "iterations": len(trace.iterations),
        "terminal_reason": trace.terminal_reason.value,
    }
    json.dump(payload, sys.stdout)
    sys.stdout.write("\n")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as handle:
            handle.write("iteration,mse\n")
            for entry in trace.iterations:
                handle.write(f"{entry.index},{entry.mse!r}\n")
    return 0


def _predict_outcomes(
    name: str,
    train: Sequence[LogRecord],
    queries: Sequence,
    cfg: IcpConfig,
    k: int,
    jobs: int,
) -> list[PredictionOutcome]:
    """Run one predictor over all query scans, in query order."""
    if name == "icp":
        return predictor_mod.icp_nn_predict_batch(train, list(queries), cfg, jobs=jobs)
    if name == "mean":
        basket = predictor_mod.mean_predict(train)
        return [PredictionOutcome(basket) for _ in queries]
    if name == "knn":
        fitted = [
            rec if rec.features is not None else rec.with_features(predictor_mod.extract_features(rec.scan))
            for rec in train
        ]
        return [
            predictor_mod.knn_feature_predict(fitted, predictor_mod.extract_features(query), k)
            for query in queries
        ]
    raise InvalidInputError(f"unknown predictor {name!r}; expected one of {PREDICTOR_NAMES}")


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = _icp_config(args)
    train = io_mod.load_dataset(args.manifest_train, args.baskets)
    if len(train) == 0:
        raise InvalidInputError("training set is empty")
    tests = io_mod.load_scans(args.manifest_test)
    outcomes = _predict_outcomes(
        args.predictor, train.records, [scan for _, scan in tests],
        cfg, args.k, args.jobs,
    )
    rows = [
        io_mod.PredictionRow(log_id, outcome.neighbor_id, outcome.distance, outcome.predicted)
        for (log_id, _), outcome in zip(tests, outcomes)
    ]
    names = train.product_names or tuple(f"p{i + 1}" for i in range(train.product_count))
    io_mod.write_predictions(rows, names, args.output)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _metric_config(args)
    predictions = io_mod.load_predictions(args.predictions)
    truth = io_mod.load_baskets(args.truth)
    predicted_ids = [row.id for row in predictions]
    missing_truth = sorted(set(predicted_ids) - set(truth))
    missing_predictions = sorted(set(truth) - set(predicted_ids))
    if missing_truth or missing_predictions:
        raise InvalidInputError(
            "prediction and truth ids do not match"
            + (f"; missing from truth: {missing_truth}" if missing_truth else "")
            + (f"; missing from predictions: {missing_predictions}" if missing_predictions else "")
        )
    pairs = [ScoredPair(truth[row.id], row.basket) for row in predictions]
    report = metrics_mod.evaluate(pairs, cfg)
    io_mod.write_report(report, args.output, args.format, labels=args.label)
    return 0


def _mean_report(reports: Sequence[ScoreReport]) -> ScoreReport:
    n = len(reports)
    sums = [0.0] * 6
    for report in reports:
        for i, value in enumerate(report.values()):
            sums[i] += value
    return ScoreReport(*(total / n for total in sums),
                       n_evaluated=sum(report.n_evaluated for report in reports))


def _parse_predictors(value: str) -> list[str]:
    names = [name.strip() for name in value.split(",") if name.strip()]
    if not names:
        raise InvalidInputError("no predictor selected")
    for name in names:
        if name not in PREDICTOR_NAMES:
            raise InvalidInputError(f"unknown predictor {name!r}; expected one of {PREDICTOR_NAMES}")
    return names


def cmd_experiment(args: argparse.Namespace) -> int:
    predictors = _parse_predictors(args.predictor)
    spec = dataset_mod.SplitSpec(
        train_fraction=args.train_frac, seed=args.seed, runs=args.runs,
        drop_empty_baskets=args.drop_empty,
    )
    icp_cfg = _icp_config(args)
    metric_cfg = _metric_config(args)
    ds = io_mod.load_dataset(args.manifest, args.baskets)
    if args.drop_empty:
        ds = dataset_mod.drop_empty(ds)
    if "knn" in predictors:
        ds = dataset_mod.Dataset(
            tuple(rec.with_features(predictor_mod.extract_features(rec.scan)) for rec in ds.records),
            ds.product_count, ds.product_names,
        )

    labels: list[str] = []
    reports: list[ScoreReport] = []
    by_predictor: dict[str, list[ScoreReport]] = {name: [] for name in predictors}
    for run in range(spec.runs):
        train, test = dataset_mod.split(ds, spec, run)
        if len(train) == 0 or len(test) == 0:
            raise InvalidInputError(f"run {run} produced an empty train or test set")
        queries = [rec.scan for rec in test.records]
        for name in predictors:
            outcomes = _predict_outcomes(name, train.records, queries, icp_cfg, args.k, args.jobs)
            pairs = [ScoredPair(rec.basket, outcome.predicted)
                     for rec, outcome in zip(test.records, outcomes)]
            report = metrics_mod.evaluate(pairs, metric_cfg)
            labels.append(f"{name}:run{run}")
            reports.append(report)
            by_predictor[name].append(report)
        print(f"run {run + 1}/{spec.runs} done", file=sys.stderr)
    for name in predictors:
        labels.append(f"{name}:mean")
        reports.append(_mean_report(by_predictor[name]))
    io_mod.write_report(reports, args.output, args.format, labels=labels)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    spec = dataset_mod.SplitSpec(
        train_fraction=args.train_frac, seed=args.seed, runs=args.runs,
        drop_empty_baskets=args.drop_empty,
    )
    manifest = io_mod.load_manifest(args.manifest, args.baskets)
    ids = [entry.id for entry in manifest.entries]
    if args.drop_empty:
        baskets_path = args.baskets if args.baskets else io_mod.default_baskets_path(args.manifest)
        table = io_mod.load_baskets(baskets_path)
        ids = [log_id for log_id in ids if not table[log_id].is_empty()]
    runs = range(spec.runs) if args.run_index is None else [args.run_index]
    with io_mod._open_out(args.output) as handle:
        handle.write("run,role,id\n")
        for run in runs:
            train_idx, test_idx = dataset_mod.split_indices(len(ids), spec, run)
            for i in train_idx:
                handle.write(f"{run},train,{ids[i]}\n")
            for i in test_idx:
                handle.write(f"{run},test,{ids[i]}\n")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
