"""Configuration-map recording.

The vendor library picks a kernel per (operation, shape, dtype, transpose)
on the target device. There is no offline query for that choice, so it is
recorded by running each shape once and identifying the launched kernel by
name. Shapes whose kernel name cannot be parsed are skipped with a note;
dtypes the device does not support are skipped rather than guessed.
"""

from __future__ import annotations

import sys
from typing import Optional

from .emit import DatasetBuilder, skeleton
from .gpuinfo import check_frequency_lock, device_profile, require_gpu
from .kernels import parse_kernel_name
from .plan import ConfigMapPlan


def record_config_map(plan: ConfigMapPlan, dry_run: bool = False,
                      locked_freq_mhz: Optional[float] = None,
                      quiet: bool = False) -> DatasetBuilder:
    if dry_run:
        if not quiet:
            shapes = sum(1 for _ in plan.shapes())
            print(f"[dry-run] would record the chosen kernel for {shapes} "
                  f"shapes x {len(plan.dtypes)} dtypes x "
                  f"{len(plan.transpose_modes)} transpose modes",
                  file=sys.stderr)
        return skeleton()

    torch = require_gpu()
    from .compute import _kernel_name_for, _operands

    freq = check_frequency_lock(locked_freq_mhz)
    builder = DatasetBuilder(device=device_profile(collection_freq_mhz=freq))
    for dtype in plan.dtypes:
        if dtype == "bf16" and "bf16_tflops" not in builder.device:
            if not quiet:
                print(f"skipping {dtype}: device does not support it",
                      file=sys.stderr)
            continue
        for transpose in plan.transpose_modes:
            family = "linear" if transpose == "tn" else "matmul"
            for shape in plan.shapes():
                batch, m, n, k = shape
                op, tensors = _operands(torch, family, dtype, batch, m, n, k,
                                        transpose)
                name = _kernel_name_for(torch, op, *tensors)
                key = (parse_kernel_name(name, family, dtype, transpose)
                       if name else None)
                if key is None:
                    if not quiet:
                        print(f"skipping shape {shape}: unparseable kernel "
                              f"{name!r}", file=sys.stderr)
                    continue
                builder.add_config_record(family, dtype, transpose, shape, key)
    return builder
