"""Command-line entry point.

One binary, batch-oriented subcommands: ingest, fit, predict,
predict-model, precompute, lookup, partition, report, oracle. Machine
output (JSON or CSV) goes to stdout and is byte-stable for identical
inputs; all human diagnostics go to stderr. Exit codes: 0 success, 1 usage
error, 2 data/validation error, 3 prediction error, 4 I/O error.

The default dataset path may come from the PM2LAT_DATASET environment
variable instead of --dataset.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

from . import __version__
from .aggregate import ErrorCase, build_error_report, predict_model
from .compute import predict_generic, with_component
from .core import COMPUTE_FAMILIES, DType, MatMulShape, TransposeMode
from .curvefit import grid_error_report
from .errors import DataError, PredictionError
from .ingest import (
    kernel_key_to_json_obj,
    load_dataset,
    load_model_graph,
    save_dataset,
)
from .membound import fit
from .nascache import CacheStore, GridSpec, precompute
from .partition import partition_two_device, throughput_estimate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PREDICTION = 3
EXIT_IO = 4

DATASET_ENV_VAR = "PM2LAT_DATASET"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _info(message: str, quiet: bool = False) -> None:
    if not quiet:
        print(message, file=sys.stderr)


def _dataset_path(args) -> str:
    path = getattr(args, "dataset", None) or os.environ.get(DATASET_ENV_VAR)
    if not path:
        raise _UsageError(
            f"a dataset is required (--dataset or ${DATASET_ENV_VAR})")
    return path


def _add_common(parser, dataset=False, output=False):
    if dataset:
        parser.add_argument("--dataset", help=f"dataset JSON (or ${DATASET_ENV_VAR})")
    if output:
        parser.add_argument("--output", help="write the payload to this path")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress diagnostics and warnings")


def build_parser() -> _Parser:
    parser = _Parser(prog="pm2lat",
                     description="Kernel-aware GPU latency prediction.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="validate a dataset file")
    _add_common(p, dataset=True)

    p = sub.add_parser("fit", help="fit memory-bound models from dataset records")
    _add_common(p, dataset=True, output=True)

    p = sub.add_parser("predict", help="predict one compute kernel's latency")
    _add_common(p, dataset=True)
    p.add_argument("--family", required=True,
                   choices=sorted(COMPUTE_FAMILIES))
    p.add_argument("--dtype", required=True, choices=[d.value for d in DType])
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--transpose", choices=[t.value for t in TransposeMode],
                   help="default: tn for linear, nn otherwise")

    p = sub.add_parser("predict-model", help="predict a whole model graph")
    _add_common(p, dataset=True)
    p.add_argument("--graph", required=True, help="model graph JSON")
    p.add_argument("--floor-us", type=float, default=2.0,
                   help="kernel launch-time floor for utility layers")

    p = sub.add_parser("precompute", help="fill a lookup store over a grid")
    _add_common(p, dataset=True)
    p.add_argument("--grid", required=True, help="grid spec JSON")
    p.add_argument("--output", required=True, help="store file to write")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel shards (output is identical regardless)")
    p.add_argument("--skip-unresolved", action="store_true",
                   help="drop unresolvable points instead of aborting")

    p = sub.add_parser("lookup", help="read one point from a store")
    _add_common(p, dataset=True)
    p.add_argument("--store", required=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)

    p = sub.add_parser("partition", help="split a model across two devices")
    p.add_argument("--graph", required=True)
    p.add_argument("--dataset-a", required=True, help="input-side device dataset")
    p.add_argument("--dataset-b", required=True)
    p.add_argument("--requests", type=int,
                   help="also estimate total time for N pipelined requests")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("report", help="error reports")
    report_sub = p.add_subparsers(dest="report_kind", metavar="KIND")
    pe = report_sub.add_parser("errors", help="measured-vs-predicted report")
    pe.add_argument("--records", required=True,
                    help="JSON list of {case_id, measured_us, predicted_us, axis_value}")
    pe.add_argument("--bins", type=int, default=100)
    pe.add_argument("--format", choices=["json", "csv"], default="json")
    _add_common(pe, output=True)
    pg = report_sub.add_parser("grid", help="interpolation-grid audit "
                                            "against planted curves")
    pg.add_argument("--config", required=True, help="synthetic device config JSON")
    _add_common(pg, dataset=True, output=True)

    p = sub.add_parser("oracle", help="synthetic device fixtures")
    oracle_sub = p.add_subparsers(dest="oracle_kind", metavar="KIND")
    po = oracle_sub.add_parser("emit", help="write a fixture dataset")
    group = po.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset", choices=["fp32", "bf16", "generic"])
    group.add_argument("--config", help="synthetic device config JSON")
    po.add_argument("--output", required=True)
    po.add_argument("--seed", type=int, default=7)
    po.add_argument("--noise", type=float, default=0.0,
                    help="relative measurement-noise sigma")
    po.add_argument("--membound", action="store_true",
                    help="include synthetic utility-kernel records")
    po.add_argument("--quiet", action="store_true")

    return parser


def _cmd_ingest(args) -> int:
    dataset = load_dataset(_dataset_path(args))
    _emit({
        "device_id": dataset.device.device_id,
        "schema_version": dataset.schema_version,
        "curves": len(dataset.curves),
        "config_records": len(dataset.config_map),
        "membound_records": len(dataset.membound_records),
        "membound_models": len(dataset.membound_models),
    })
    return EXIT_OK


def _cmd_fit(args) -> int:
    from dataclasses import replace

    dataset = load_dataset(_dataset_path(args))
    groups = {}
    for record in dataset.membound_records:
        groups.setdefault((record.kernel_name, record.dtype), []).append(
            (record.features, record.latency_us))
    fitted, summaries = [], []
    for (name, dtype), records in sorted(groups.items(),
                                         key=lambda kv: (kv[0][0], kv[0][1].value)):
        try:
            model = fit(records, name, dtype,
                        train_device_id=dataset.device.device_id)
        except Exception as exc:
            _info(f"skipping {name}/{dtype.value}: {exc}", args.quiet)
            continue
        fitted.append(model)
        summaries.append({
            "kernel_name": name, "dtype": dtype.value,
            "records": len(records),
            "max_rel_err": model.max_rel_err,
            "mean_rel_err": model.mean_rel_err,
        })
    if args.output:
        updated = replace(dataset, membound_models=tuple(fitted))
        save_dataset(updated, args.output)
        _info(f"wrote {len(fitted)} fitted models to {args.output}", args.quiet)
    _emit({"fitted": summaries})
    return EXIT_OK


def _cmd_predict(args) -> int:
    dataset = load_dataset(_dataset_path(args))
    from .aggregate import ModelPredictor, default_transpose

    predictor = ModelPredictor(dataset)
    shape = MatMulShape(batch=args.batch, m=args.m, n=args.n, k=args.k)
    dtype = DType.parse(args.dtype)
    transpose = (TransposeMode.parse(args.transpose) if args.transpose
                 else default_transpose(args.family))
    resolved = predictor.resolver.resolve(args.family, dtype, transpose, shape)
    curve = dataset.curves.get(resolved.key)
    if curve is None:
        raise PredictionError(
            f"resolved kernel (algo={resolved.key.algorithm_id}) has no "
            f"throughput curve in the dataset")
    pred = predict_generic(shape, resolved.key, curve, predictor.wm)
    pred = with_component(pred, "config_match", resolved.match)
    _emit({
        "latency_us": pred.latency_us,
        "kernel": kernel_key_to_json_obj(pred.kernel),
        "components": dict(pred.components),
    })
    return EXIT_OK


def _cmd_predict_model(args) -> int:
    dataset = load_dataset(_dataset_path(args))
    graph = load_model_graph(args.graph)
    result = predict_model(graph, dataset, membound_floor_us=args.floor_us)
    _emit(result.to_json_obj())
    return EXIT_OK


def _cmd_precompute(args) -> int:
    dataset = load_dataset(_dataset_path(args))
    with open(args.grid, "r", encoding="utf-8") as fh:
        grid = GridSpec.from_json_obj(json.load(fh))
    summary = precompute(grid, dataset, None, args.output, jobs=args.jobs,
                         skip_unresolved=args.skip_unresolved)
    _info(
        f"{summary.entries_written}/{summary.total_points} points in "
        f"{summary.elapsed_s:.3f}s "
        f"({summary.mean_us_per_prediction:.2f} us/prediction, "
        f"{summary.backend} backend)", args.quiet)
    _emit({
        "total_points": summary.total_points,
        "entries_written": summary.entries_written,
        "skipped": summary.skipped,
        "store": args.output,
    })
    return EXIT_OK


def _cmd_lookup(args) -> int:
    with CacheStore(args.store) as store:
        if getattr(args, "dataset", None) or os.environ.get(DATASET_ENV_VAR):
            store.verify(dataset=load_dataset(_dataset_path(args)))
        value = store.lookup(args.batch, args.m, args.n, args.k)
    _emit({"latency_us": value,
           "point": {"batch": args.batch, "m": args.m, "n": args.n, "k": args.k}})
    return EXIT_OK


def _cmd_partition(args) -> int:
    graph = load_model_graph(args.graph)
    ds_a = load_dataset(args.dataset_a)
    ds_b = load_dataset(args.dataset_b)
    plan = partition_two_device(graph, ds_a, ds_b)
    payload = plan.to_json_obj()
    if args.requests:
        payload["requests"] = args.requests
        payload["estimated_total_us"] = throughput_estimate(plan, args.requests)
    _emit(payload)
    return EXIT_OK


def _cmd_report_errors(args) -> int:
    with open(args.records, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    cases = [
        ErrorCase(case_id=str(obj["case_id"]),
                  measured_us=float(obj["measured_us"]),
                  predicted_us=float(obj["predicted_us"]),
                  axis_value=float(obj.get("axis_value", 0.0)))
        for obj in raw
    ]
    report = build_error_report(cases, bins=args.bins)
    payload = report.to_csv() if args.format == "csv" else (
        json.dumps(report.to_json_obj(), sort_keys=True) + "\n")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
    sys.stdout.write(payload)
    return EXIT_OK


def _cmd_report_grid(args) -> int:
    from .oracle import device_from_config_obj, emit_fixture

    with open(args.config, "r", encoding="utf-8") as fh:
        device = device_from_config_obj(json.load(fh))
    if getattr(args, "dataset", None) or os.environ.get(DATASET_ENV_VAR):
        dataset = load_dataset(_dataset_path(args))
    else:
        dataset = emit_fixture(device)
    reports = []
    for plan in device.plans:
        curve = dataset.curves.get(plan.key)
        if curve is None:
            _info(f"no curve for planted kernel algo={plan.key.algorithm_id}; "
                  f"skipped", args.quiet)
            continue
        report = grid_error_report(curve, plan.curve)
        reports.append({"kernel": kernel_key_to_json_obj(plan.key),
                        **report.to_json_obj()})
    payload = json.dumps({"grid_reports": reports}, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload)
    sys.stdout.write(payload)
    return EXIT_OK


def _cmd_oracle_emit(args) -> int:
    from . import oracle

    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            device = oracle.device_from_config_obj(json.load(fh))
    elif args.preset == "fp32":
        device = oracle.fp32_device(seed=args.seed, noise_rel_sigma=args.noise)
    elif args.preset == "bf16":
        device = oracle.bf16_device(seed=args.seed, noise_rel_sigma=args.noise)
    else:
        device = oracle.generic_device(seed=args.seed)
    dataset = oracle.emit_fixture(device)
    if args.membound:
        dataset = oracle.with_membound_fixture(dataset, seed=args.seed,
                                               noise_rel_sigma=args.noise)
    save_dataset(dataset, args.output)
    _emit({
        "device_id": dataset.device.device_id,
        "curves": len(dataset.curves),
        "config_records": len(dataset.config_map),
        "membound_records": len(dataset.membound_records),
        "output": args.output,
    })
    return EXIT_OK


_HANDLERS = {
    "ingest": _cmd_ingest,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "predict-model": _cmd_predict_model,
    "precompute": _cmd_precompute,
    "lookup": _cmd_lookup,
    "partition": _cmd_partition,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise _UsageError("a subcommand is required")
        if args.command == "report":
            if args.report_kind == "errors":
                handler = _cmd_report_errors
            elif args.report_kind == "grid":
                handler = _cmd_report_grid
            else:
                raise _UsageError("report needs a kind: errors | grid")
        elif args.command == "oracle":
            if args.oracle_kind != "emit":
                raise _UsageError("oracle needs a kind: emit")
            handler = _cmd_oracle_emit
        else:
            handler = _HANDLERS[args.command]
        if getattr(args, "quiet", False):
            warnings.simplefilter("ignore")
        return handler(args)
    except _UsageError as exc:
        print(f"pm2lat: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"pm2lat: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PredictionError as exc:
        print(f"pm2lat: prediction error: {exc}", file=sys.stderr)
        return EXIT_PREDICTION
    except OSError as exc:
        print(f"pm2lat: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
