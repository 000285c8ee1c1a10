"""Collector command line: compute | membound | configmap.

Each subcommand writes one dataset JSON file in the predictor's ingest
schema. Real collection needs a CUDA device and a locked clock
(--locked-freq-mhz); --dry-run exercises everything except device calls
and emits a schema-valid skeleton.
"""

from __future__ import annotations

import argparse
import json
import sys

from .compute import collect_compute
from .configmap import record_config_map
from .gpuinfo import DeviceUnavailable, FrequencyUnlocked
from .membound import ProfilerUnavailable, collect_membound
from .plan import (
    DEFAULT_K_GRID,
    CollectionPlan,
    ConfigMapPlan,
    MemBoundPlan,
    PlanError,
)


def _add_shared(parser):
    parser.add_argument("--output", required=True, help="dataset JSON to write")
    parser.add_argument("--dry-run", action="store_true",
                        help="no device calls; emit a schema-valid skeleton")
    parser.add_argument("--locked-freq-mhz", type=float,
                        help="the GPU clock you locked (required unless --dry-run)")
    parser.add_argument("--allow-low-quality", action="store_true",
                        help="permit repetitions/runtime below the default floors")
    parser.add_argument("--quiet", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pm2lat-collect",
        description="GPU microbenchmark collector for pm2lat datasets.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("compute", help="pinned-configuration GEMM sweep")
    _add_shared(p)
    p.add_argument("--dtypes", default="fp32", help="comma list: fp32,bf16")
    p.add_argument("--families", default="matmul",
                   help="comma list: matmul,batched_matmul,linear")
    p.add_argument("--k-grid", default=",".join(str(k) for k in DEFAULT_K_GRID),
                   help="comma list of K values (powers of two recommended)")
    p.add_argument("--waves", default="1", help="comma list of wave targets")
    p.add_argument("--repetitions", type=int, default=25)
    p.add_argument("--min-total-ms", type=float, default=500.0)
    p.add_argument("--warmup-reps", type=int, default=5)

    p = sub.add_parser("membound", help="utility-kernel metric capture")
    _add_shared(p)
    p.add_argument("--kernels", default="relu,gelu,softmax,add,mul,dropout")
    p.add_argument("--dtypes", default="fp32")
    p.add_argument("--repetitions", type=int, default=25)
    p.add_argument("--warmup-reps", type=int, default=5)

    p = sub.add_parser("configmap", help="record the library's kernel choices")
    _add_shared(p)
    p.add_argument("--dtypes", default="fp32")
    p.add_argument("--transpose-modes", default="nn,tn")

    return parser


def _csv(text):
    return tuple(part for part in text.split(",") if part)


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "compute":
            plan = CollectionPlan(
                dtypes=_csv(args.dtypes), families=_csv(args.families),
                k_grid=tuple(int(k) for k in _csv(args.k_grid)),
                wave_targets=tuple(int(w) for w in _csv(args.waves)),
                repetitions=args.repetitions, min_total_ms=args.min_total_ms,
                warmup_reps=args.warmup_reps,
                allow_low_quality=args.allow_low_quality)
            builder = collect_compute(plan, dry_run=args.dry_run,
                                      locked_freq_mhz=args.locked_freq_mhz,
                                      quiet=args.quiet)
        elif args.command == "membound":
            plan = MemBoundPlan(
                kernels=_csv(args.kernels), dtypes=_csv(args.dtypes),
                repetitions=args.repetitions, warmup_reps=args.warmup_reps,
                allow_low_quality=args.allow_low_quality)
            builder = collect_membound(plan, dry_run=args.dry_run,
                                       locked_freq_mhz=args.locked_freq_mhz,
                                       quiet=args.quiet)
        else:
            plan = ConfigMapPlan(dtypes=_csv(args.dtypes),
                                 transpose_modes=_csv(args.transpose_modes))
            builder = record_config_map(plan, dry_run=args.dry_run,
                                        locked_freq_mhz=args.locked_freq_mhz,
                                        quiet=args.quiet)
    except PlanError as exc:
        print(f"pm2lat-collect: refused: {exc}", file=sys.stderr)
        return 1
    except (DeviceUnavailable, FrequencyUnlocked, ProfilerUnavailable) as exc:
        print(f"pm2lat-collect: {exc}", file=sys.stderr)
        return 2
    builder.write(args.output)
    summary = {
        "output": args.output,
        "curves": len(builder.curves),
        "config_records": len(builder.config_map),
        "membound_records": len(builder.membound_records),
        "dry_run": bool(args.dry_run),
    }
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
