"""Writers for the predictor's dataset JSON schema (version 1).

This module is the collector's half of the contract with the predictor:
field names and units here must match the ingest schema exactly. It is
deliberately dependency-free — the collector never imports the predictor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

SCHEMA_VERSION = "1"

PLACEHOLDER_DEVICE = {
    "device_id": "dry-run-device",
    "max_freq_ghz": 1.0,
    "fp32_tflops": 1.0,
    "dram_bw_gbs": 1.0,
    "mem_gb": 1.0,
    "l2_mb": 1.0,
    "sm_count": 1,
    "cuda_cores": 1,
    "power_w": 1.0,
    "collection_freq_mhz": 1.0,
}

KEY_FIELDS = ("family", "dtype", "library", "algorithm_id", "tile_m", "tile_n",
              "split_k", "swizzle", "reduction_scheme", "stages", "transpose_mode")


def kernel_key_obj(family: str, dtype: str, library: str, algorithm_id: int,
                   tile_m: int, tile_n: int, transpose_mode: str,
                   split_k: int = 1, swizzle: int = 0, reduction_scheme: int = 0,
                   stages: int = 0) -> dict:
    return {
        "family": family, "dtype": dtype, "library": library,
        "algorithm_id": algorithm_id, "tile_m": tile_m, "tile_n": tile_n,
        "split_k": split_k, "swizzle": swizzle,
        "reduction_scheme": reduction_scheme, "stages": stages,
        "transpose_mode": transpose_mode,
    }


@dataclass
class DatasetBuilder:
    """Accumulates collected measurements and serializes the bundle."""

    device: dict
    curves: List[dict] = field(default_factory=list)
    config_map: List[dict] = field(default_factory=list)
    membound_records: List[dict] = field(default_factory=list)

    def add_curve(self, kernel: dict, samples, ref_dim_value: int,
                  ref_duration_us: float, ref_waves: int,
                  varying_dim_name: str = "K") -> None:
        missing = [f for f in KEY_FIELDS if f not in kernel]
        if missing:
            raise ValueError(f"kernel key is missing fields {missing}")
        self.curves.append({
            "kernel": kernel,
            "varying_dim_name": varying_dim_name,
            "device_id": self.device["device_id"],
            "samples": [{"dim_value": int(dim), "throughput_gflops": float(thr)}
                        for dim, thr in samples],
            "ref_dim_value": int(ref_dim_value),
            "ref_duration_us": float(ref_duration_us),
            "ref_waves": int(ref_waves),
        })

    def add_config_record(self, family: str, dtype: str, transpose_mode: str,
                          shape, chosen_key: dict) -> None:
        batch, m, n, k = shape
        self.config_map.append({
            "family": family, "dtype": dtype, "transpose_mode": transpose_mode,
            "shape": {"batch": int(batch), "m": int(m), "n": int(n), "k": int(k)},
            "chosen_key": chosen_key,
        })

    def add_membound_record(self, kernel_name: str, dtype: str, features: dict,
                            latency_us: float) -> None:
        for name in ("flops", "int_ops", "bytes_loaded", "bytes_stored",
                     "total_bytes_accessed"):
            if name not in features:
                raise ValueError(f"features missing {name!r}")
        self.membound_records.append({
            "kernel_name": kernel_name, "dtype": dtype,
            "features": {k: float(v) for k, v in features.items()},
            "latency_us": float(latency_us),
        })

    def to_obj(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "device": self.device,
            "curves": list(self.curves),
            "config_map": list(self.config_map),
            "membound_records": list(self.membound_records),
        }

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def skeleton(device: Optional[dict] = None) -> DatasetBuilder:
    """Empty, schema-valid bundle (the dry-run output)."""
    return DatasetBuilder(device=dict(device or PLACEHOLDER_DEVICE))
