"""Pinned-configuration GEMM sweeps.

Protocol per kernel: warm up, then time the kernel at each K in the plan's
grid with the tile size and wave count held fixed (M, N and batch are
chosen to fill complete tiles and complete waves), repeating until both
the repetition floor and the minimum total runtime are met. Throughput is
the measured FLOP rate; the reference point is the largest K in the grid.

The launched kernel's name (captured through the profiler) provides the
kernel identity; sweeps where the library switches kernels mid-grid are
discarded, since mixing two kernels in one curve would poison it.
"""

from __future__ import annotations

import sys
import time
from typing import List, Optional, Tuple

from .emit import DatasetBuilder, skeleton
from .gpuinfo import check_frequency_lock, device_profile, require_gpu
from .kernels import parse_kernel_name
from .plan import CollectionPlan

_TORCH_DTYPES = {"fp32": "float32", "bf16": "bfloat16"}


def _log(message: str, quiet: bool) -> None:
    if not quiet:
        print(message, file=sys.stderr)


def _kernel_name_for(torch, op, *tensors) -> Optional[str]:
    """Name of the hottest CUDA kernel the op launches."""
    from torch.profiler import ProfilerActivity, profile

    with profile(activities=[ProfilerActivity.CUDA]) as prof:
        op(*tensors)
        torch.cuda.synchronize()
    candidates = [e for e in prof.key_averages() if e.device_time_total > 0]
    if not candidates:
        return None
    return max(candidates, key=lambda e: e.device_time_total).key


def _time_op_us(torch, op, tensors, repetitions: int, min_total_ms: float,
                warmup_reps: int) -> float:
    for _ in range(warmup_reps):
        op(*tensors)
    torch.cuda.synchronize()
    reps_done = 0
    total_ms = 0.0
    durations: List[float] = []
    while reps_done < repetitions or total_ms < min_total_ms:
        start = torch.cuda.Event(enable_timing=True)
        end = torch.cuda.Event(enable_timing=True)
        start.record()
        op(*tensors)
        end.record()
        torch.cuda.synchronize()
        elapsed_ms = start.elapsed_time(end)
        durations.append(elapsed_ms)
        total_ms += elapsed_ms
        reps_done += 1
        if reps_done > 100 * repetitions:   # runaway guard for huge kernels
            break
    return 1000.0 * sum(durations) / len(durations)


def _operands(torch, family: str, dtype: str, batch: int, m: int, n: int,
              k: int, transpose: str):
    tdt = getattr(torch, _TORCH_DTYPES[dtype])
    device = "cuda"
    if family == "batched_matmul":
        a = torch.randn(batch, m, k, dtype=tdt, device=device)
        b = torch.randn(batch, k, n, dtype=tdt, device=device)
        return torch.bmm, (a, b)
    if family == "linear" or transpose == "tn":
        a = torch.randn(k, m, dtype=tdt, device=device)
        b = torch.randn(k, n, dtype=tdt, device=device)
        return (lambda x, y: torch.matmul(x.t(), y)), (a, b)
    a = torch.randn(m, k, dtype=tdt, device=device)
    b = torch.randn(k, n, dtype=tdt, device=device)
    return torch.matmul, (a, b)


def collect_compute(plan: CollectionPlan, dry_run: bool = False,
                    locked_freq_mhz: Optional[float] = None,
                    tile_hint: Tuple[int, int] = (128, 128),
                    quiet: bool = False) -> DatasetBuilder:
    """Run the sweep and return a dataset builder ready to write.

    Dry-run walks the full plan (shape selection, curve assembly paths)
    without touching a device and returns an empty-curve skeleton.
    """
    if dry_run:
        for dtype in plan.dtypes:
            for family in plan.families:
                _log(f"[dry-run] would sweep {family}/{dtype} over "
                     f"K={list(plan.k_grid)} at wave targets "
                     f"{list(plan.wave_targets)}, {plan.repetitions} reps, "
                     f">= {plan.min_total_ms} ms each", quiet)
        return skeleton()

    torch = require_gpu()
    freq = check_frequency_lock(locked_freq_mhz)
    builder = DatasetBuilder(device=device_profile(collection_freq_mhz=freq))
    sm_count = builder.device["sm_count"]
    tile_m, tile_n = tile_hint

    for dtype in plan.dtypes:
        if dtype == "bf16" and "bf16_tflops" not in builder.device:
            _log(f"skipping {dtype}: device does not support it", quiet)
            continue
        for family in plan.families:
            for waves in plan.wave_targets:
                batch = 2 if family == "batched_matmul" else 1
                # complete blocks and complete waves: tiles exactly fill
                # `waves` rounds of the SM array
                tiles = waves * sm_count // batch
                grid_m = max(1, int(tiles ** 0.5))
                while tiles % grid_m:
                    grid_m -= 1
                m, n = tile_m * grid_m, tile_n * (tiles // grid_m)
                transpose = "tn" if family == "linear" else "nn"
                samples = []
                kernel_names = set()
                for k in plan.k_grid:
                    op, tensors = _operands(torch, family, dtype, batch, m, n, k,
                                            transpose)
                    name = _kernel_name_for(torch, op, *tensors)
                    if name:
                        kernel_names.add(name)
                    mean_us = _time_op_us(torch, op, tensors, plan.repetitions,
                                          plan.min_total_ms, plan.warmup_reps)
                    flops = 2.0 * batch * m * n * k
                    samples.append((k, flops / (mean_us * 1000.0)))
                    if k == plan.ref_k:
                        ref_duration_us = mean_us
                if len(kernel_names) != 1:
                    _log(f"discarding {family}/{dtype} wave={waves}: library "
                         f"switched kernels across K ({sorted(kernel_names)})",
                         quiet)
                    continue
                key = parse_kernel_name(kernel_names.pop(), family, dtype,
                                        default_transpose=transpose)
                if key is None:
                    _log(f"discarding {family}/{dtype}: kernel name carries "
                         f"no tile info", quiet)
                    continue
                builder.add_curve(key, samples, ref_dim_value=plan.ref_k,
                                  ref_duration_us=ref_duration_us,
                                  ref_waves=waves)
                for k, _ in samples:
                    builder.add_config_record(family, dtype, transpose,
                                              (batch, m, n, k), key)
    return builder
