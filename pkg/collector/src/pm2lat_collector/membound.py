"""Utility-kernel metric capture.

Proxy metrics (instruction counts, memory traffic) come from Nsight
Compute's CSV export; latency comes from device-event timing. The NCU
invocation and its CSV parser live here so the parser is unit-testable
with canned profiler output, no GPU needed.
"""

from __future__ import annotations

import csv
import io
import shutil
import subprocess
import sys
from typing import Dict, List, Optional

from .emit import DatasetBuilder, skeleton
from .gpuinfo import check_frequency_lock, device_profile, require_gpu
from .plan import MemBoundPlan

# NCU metric names -> dataset feature fields. FMA counts twice (one
# multiply plus one add).
NCU_METRICS = {
    "smsp__sass_thread_inst_executed_op_ffma_pred_on.sum": ("flops", 2.0),
    "smsp__sass_thread_inst_executed_op_fadd_pred_on.sum": ("flops", 1.0),
    "smsp__sass_thread_inst_executed_op_fmul_pred_on.sum": ("flops", 1.0),
    "smsp__sass_thread_inst_executed_op_integer_pred_on.sum": ("int_ops", 1.0),
    "dram__bytes_read.sum": ("bytes_loaded", 1.0),
    "dram__bytes_write.sum": ("bytes_stored", 1.0),
    "dram__bytes.sum": ("total_bytes_accessed", 1.0),
}


class ProfilerUnavailable(RuntimeError):
    pass


def ncu_command(output_csv_target: List[str], metrics=None) -> List[str]:
    metric_list = ",".join(metrics or NCU_METRICS)
    return ["ncu", "--csv", "--metrics", metric_list, *output_csv_target]


def require_ncu() -> str:
    path = shutil.which("ncu")
    if path is None:
        raise ProfilerUnavailable(
            "Nsight Compute (ncu) is not on PATH; install the CUDA profiling "
            "tools or run with --dry-run")
    return path


def parse_ncu_csv(text: str) -> Dict[str, Dict[str, float]]:
    """Per-kernel feature accumulation from `ncu --csv` output.

    NCU prints one row per (launch, metric); values may carry thousands
    separators. Rows before the header (banner lines starting with ==) are
    skipped. Returns {kernel_name: feature_field: value} summed over
    launches of the same kernel.
    """
    lines = [line for line in text.splitlines()
             if line and not line.startswith("==")]
    if not lines:
        return {}
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    needed = {"Kernel Name", "Metric Name", "Metric Value"}
    if not reader.fieldnames or not needed.issubset(set(reader.fieldnames)):
        raise ProfilerUnavailable(
            f"unrecognized ncu CSV header: {reader.fieldnames}")
    features: Dict[str, Dict[str, float]] = {}
    for row in reader:
        metric = row["Metric Name"]
        if metric not in NCU_METRICS:
            continue
        field, weight = NCU_METRICS[metric]
        raw = (row["Metric Value"] or "0").replace(",", "")
        try:
            value = float(raw)
        except ValueError:
            continue
        per_kernel = features.setdefault(row["Kernel Name"], {
            "flops": 0.0, "int_ops": 0.0, "bytes_loaded": 0.0,
            "bytes_stored": 0.0, "total_bytes_accessed": 0.0})
        per_kernel[field] += weight * value
    return features


_OPS = {
    "relu": lambda torch, x, _: torch.nn.functional.relu(x),
    "gelu": lambda torch, x, _: torch.nn.functional.gelu(x),
    "softmax": lambda torch, x, _: torch.softmax(x, dim=-1),
    "add": lambda torch, x, y: x + y,
    "mul": lambda torch, x, y: x * y,
    "dropout": lambda torch, x, _: torch.nn.functional.dropout(x, 0.1),
}


def _profile_features(kernel: str, dtype: str, batch: int, features_n: int,
                      quiet: bool) -> Optional[dict]:
    """Run one case under ncu in a child process and parse its metrics."""
    require_ncu()
    script = (
        "import torch\n"
        f"x = torch.randn({batch}, {features_n}, dtype=torch."
        f"{'float32' if dtype == 'fp32' else 'bfloat16'}, device='cuda')\n"
        "y = torch.randn_like(x)\n"
        f"op = {_OP_SOURCES[kernel]}\n"
        "op(x, y); torch.cuda.synchronize()\n"
    )
    cmd = ncu_command([sys.executable, "-c", script])
    try:
        out = subprocess.run(cmd, capture_output=True, text=True, timeout=600,
                             check=True)
    except (subprocess.SubprocessError, OSError) as exc:
        if not quiet:
            print(f"ncu failed for {kernel} {batch}x{features_n}: {exc}",
                  file=sys.stderr)
        return None
    parsed = parse_ncu_csv(out.stdout)
    if not parsed:
        return None
    # the op's own kernel dominates; take the launch with the most traffic
    name = max(parsed, key=lambda k: parsed[k]["total_bytes_accessed"])
    return parsed[name]


_OP_SOURCES = {
    "relu": "lambda x, y: torch.nn.functional.relu(x)",
    "gelu": "lambda x, y: torch.nn.functional.gelu(x)",
    "softmax": "lambda x, y: torch.softmax(x, dim=-1)",
    "add": "lambda x, y: x + y",
    "mul": "lambda x, y: x * y",
    "dropout": "lambda x, y: torch.nn.functional.dropout(x, 0.1)",
}


def collect_membound(plan: MemBoundPlan, dry_run: bool = False,
                     locked_freq_mhz: Optional[float] = None,
                     quiet: bool = False) -> DatasetBuilder:
    """Profile each (kernel, size) case: NCU metrics + event-timed latency."""
    if dry_run:
        if not quiet:
            cases = len(plan.kernels) * len(plan.dtypes) * len(plan.sizes)
            print(f"[dry-run] would profile {cases} utility-kernel cases "
                  f"({', '.join(plan.kernels)}) with ncu + event timing",
                  file=sys.stderr)
        return skeleton()

    torch = require_gpu()
    require_ncu()
    freq = check_frequency_lock(locked_freq_mhz)
    builder = DatasetBuilder(device=device_profile(collection_freq_mhz=freq))
    for dtype in plan.dtypes:
        tdt = torch.float32 if dtype == "fp32" else torch.bfloat16
        for kernel in plan.kernels:
            op = _OPS[kernel]
            for batch, features_n in plan.sizes:
                features = _profile_features(kernel, dtype, batch, features_n,
                                             quiet)
                if features is None:
                    continue
                x = torch.randn(batch, features_n, dtype=tdt, device="cuda")
                y = torch.randn_like(x)
                for _ in range(plan.warmup_reps):
                    op(torch, x, y)
                torch.cuda.synchronize()
                start = torch.cuda.Event(enable_timing=True)
                end = torch.cuda.Event(enable_timing=True)
                start.record()
                for _ in range(plan.repetitions):
                    op(torch, x, y)
                end.record()
                torch.cuda.synchronize()
                latency_us = start.elapsed_time(end) * 1000.0 / plan.repetitions
                builder.add_membound_record(kernel, dtype, features, latency_us)
    return builder
