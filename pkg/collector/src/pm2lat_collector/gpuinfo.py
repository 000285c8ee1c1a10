"""Target-device introspection and the frequency-lock gate.

Throughput curves are only meaningful at a fixed clock, so real collection
refuses to start unless the operator states the locked frequency and the
reported SM clock agrees with it. Dry-run mode skips device calls
entirely.
"""

from __future__ import annotations

import shutil
import subprocess
from typing import Optional


class DeviceUnavailable(RuntimeError):
    pass


class FrequencyUnlocked(RuntimeError):
    pass


def torch_module():
    try:
        import torch
        return torch
    except ImportError:
        return None


def require_gpu():
    torch = torch_module()
    if torch is None:
        raise DeviceUnavailable(
            "torch is not installed; install pm2lat-collector[gpu] or use --dry-run")
    if not torch.cuda.is_available():
        raise DeviceUnavailable("no CUDA device visible; use --dry-run")
    return torch


def query_smi(fields: str) -> Optional[str]:
    smi = shutil.which("nvidia-smi")
    if smi is None:
        return None
    try:
        out = subprocess.run(
            [smi, f"--query-gpu={fields}", "--format=csv,noheader,nounits"],
            capture_output=True, text=True, timeout=10, check=True)
    except (subprocess.SubprocessError, OSError):
        return None
    return out.stdout.strip().splitlines()[0] if out.stdout.strip() else None


def current_sm_clock_mhz() -> Optional[float]:
    raw = query_smi("clocks.sm")
    try:
        return float(raw) if raw else None
    except ValueError:
        return None


def check_frequency_lock(locked_freq_mhz: Optional[float],
                         tolerance_mhz: float = 30.0) -> float:
    """Gate for real collection: the operator must state the locked clock.

    Collection at an unlocked clock silently corrupts every curve, so this
    aborts with instructions instead of proceeding.
    """
    if locked_freq_mhz is None:
        raise FrequencyUnlocked(
            "collection requires a locked GPU clock. Lock it (e.g. "
            "`nvidia-smi -lgc <mhz>,<mhz>`) and pass --locked-freq-mhz <mhz>.")
    observed = current_sm_clock_mhz()
    if observed is not None and abs(observed - locked_freq_mhz) > tolerance_mhz:
        raise FrequencyUnlocked(
            f"SM clock reads {observed:.0f} MHz but --locked-freq-mhz says "
            f"{locked_freq_mhz:.0f} MHz; re-lock the clock before collecting.")
    return locked_freq_mhz


def device_profile(collection_freq_mhz: float) -> dict:
    """Dataset device section from the live device (best effort for fields
    the driver does not expose; those come from the operator via flags)."""
    torch = require_gpu()
    props = torch.cuda.get_device_properties(0)
    mem_gb = props.total_memory / 2 ** 30
    l2_mb = getattr(props, "L2_cache_size", 0) / 2 ** 20 or 1.0
    cores_per_sm = 128 if props.major >= 8 else 64
    max_freq_ghz = None
    raw = query_smi("clocks.max.sm")
    if raw:
        try:
            max_freq_ghz = float(raw) / 1000.0
        except ValueError:
            pass
    fp32_tflops = (props.multi_processor_count * cores_per_sm * 2
                   * (max_freq_ghz or 1.0)) / 1000.0
    profile = {
        "device_id": props.name.replace(" ", "-").lower(),
        "max_freq_ghz": max_freq_ghz or 1.0,
        "fp32_tflops": fp32_tflops,
        "dram_bw_gbs": 1.0,      # not driver-reported; operator may override
        "mem_gb": mem_gb,
        "l2_mb": l2_mb,
        "sm_count": props.multi_processor_count,
        "cuda_cores": props.multi_processor_count * cores_per_sm,
        "power_w": 1.0,
        "collection_freq_mhz": collection_freq_mhz,
    }
    if getattr(torch.cuda, "is_bf16_supported", lambda: False)():
        profile["bf16_tflops"] = 2 * fp32_tflops
    return profile
