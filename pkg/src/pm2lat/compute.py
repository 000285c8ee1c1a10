"""Latency prediction for compute-intensive kernels.

The model: a kernel's duration at its reference point (largest collected
varying-dimension value, fixed wave count) is rescaled to a new problem by
three factors,

    duration = ref_duration * (v / ref_v) * (ref_throughput / throughput(v))
               * (waves / ref_waves)

where ``v`` is the varying dimension (K for GEMM families, vector length or
sequence length for row-block families), ``throughput(v)`` is linearly
interpolated between the collected samples, and the wave count comes from
the tile schedule: partially-filled tiles cost a full block and a
partially-filled final wave costs a full wave, so both are ceilings.

Out-of-range varying-dim values clamp to the nearest curve endpoint (the
curve saturates beyond the cap; below the smallest sample there is no
data), and the clamp is flagged in the prediction breakdown rather than
silently extrapolated.

The arithmetic below is the canonical evaluation order; the compiled batch
kernel in ``_kernels.pyx`` mirrors it operation for operation so bulk
predictions are bit-identical to scalar ones.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

from .core import (
    MATMUL_FAMILIES,
    ROWBLOCK_FAMILIES,
    VARYING_DIM_NAME,
    DType,
    KernelKey,
    MatMulShape,
    Prediction,
    ThroughputCurve,
    TransposeMode,
    is_utility_family,
)
from .errors import CurveMismatch, InvalidTile, NoConfigAvailable, UnknownFamily

CLAMP_BELOW = "below_range"
CLAMP_ABOVE = "above_range"

MATCH_EXACT = "exact"
MATCH_NEAREST = "nearest"


@dataclass(frozen=True)
class WaveModel:
    """How many thread blocks one wave holds: the SM count times the
    blocks resident per SM (occupancy; default 1, overridable per curve)."""

    sm_count: int
    blocks_per_sm: int = 1

    def __post_init__(self):
        if self.sm_count < 1 or self.blocks_per_sm < 1:
            raise InvalidTile(
                f"wave model needs sm_count and blocks_per_sm >= 1, got "
                f"{self.sm_count}/{self.blocks_per_sm}")

    @property
    def blocks_per_wave(self) -> int:
        return self.sm_count * self.blocks_per_sm

    def for_curve(self, curve: ThroughputCurve) -> "WaveModel":
        if curve.blocks_per_sm is None or curve.blocks_per_sm == self.blocks_per_sm:
            return self
        return WaveModel(self.sm_count, curve.blocks_per_sm)


def block_count(family: str, shape: MatMulShape, key: KernelKey) -> int:
    """Thread blocks launched for one kernel instance.

    GEMM families tile the output matrix: a partially-filled tile still
    occupies a whole block, and split-K multiplies the block count. Row-block
    families launch one block per ``tile_m`` rows/elements of the varying
    dimension, with the fixed outer dimensions folded into ``shape.batch``.
    """
    if family in MATMUL_FAMILIES:
        if key.tile_m < 1 or key.tile_n < 1:
            raise InvalidTile(f"kernel for {family} has tile "
                              f"{key.tile_m}x{key.tile_n}")
        tiles_m = -(-shape.m // key.tile_m)
        tiles_n = -(-shape.n // key.tile_n)
        return shape.batch * tiles_m * tiles_n * key.split_k
    if family in ROWBLOCK_FAMILIES:
        if key.tile_m < 1:
            raise InvalidTile(f"kernel for {family} has block size {key.tile_m}")
        return -(-(shape.batch * shape.k) // key.tile_m)
    if is_utility_family(family):
        raise UnknownFamily(f"{family} is not a compute family")
    raise UnknownFamily(f"no block model for family {family!r}")


def wave_count(shape: MatMulShape, key: KernelKey, wm: WaveModel) -> int:
    """Sequential waves needed to run all blocks; the final, possibly
    partial wave counts in full."""
    blocks = block_count(key.family, shape, key)
    return -(-blocks // wm.blocks_per_wave)


def _interpolate_detail(curve: ThroughputCurve, new_dim: int) -> Tuple[float, Optional[str]]:
    """Throughput at ``new_dim`` with the clamp flag (None when interior)."""
    dims = curve.dim_values()
    if new_dim < dims[0]:
        return curve.samples[0].throughput_gflops, CLAMP_BELOW
    if new_dim > dims[-1]:
        return curve.samples[-1].throughput_gflops, CLAMP_ABOVE
    idx = bisect_left(dims, new_dim)
    if dims[idx] == new_dim:
        return curve.samples[idx].throughput_gflops, None
    k1, thr1 = dims[idx - 1], curve.samples[idx - 1].throughput_gflops
    k3, thr3 = dims[idx], curve.samples[idx].throughput_gflops
    t = (new_dim - k1) / (k3 - k1)
    return thr1 + t * (thr3 - thr1), None


def interpolate_throughput(curve: ThroughputCurve, new_dim: int) -> float:
    """Linearly interpolated throughput between the two samples bracketing
    ``new_dim``; exact at sample points, clamped past either end."""
    value, _ = _interpolate_detail(curve, new_dim)
    return value


def _rescale(curve: ThroughputCurve, varying_value: int, waves: int):
    """Canonical scalar arithmetic shared with the compiled kernel."""
    thr_new, clamp = _interpolate_detail(curve, varying_value)
    ref_thr = curve.ref_throughput
    base = curve.ref_duration_us * (varying_value / curve.ref_dim_value) * (ref_thr / thr_new)
    latency = base * (waves / curve.ref_waves)
    return latency, base, thr_new, ref_thr, clamp


def predict_compute(shape: MatMulShape, key: KernelKey, curve: ThroughputCurve,
                    wm: WaveModel) -> Prediction:
    """Predict one GEMM-family kernel's latency from its throughput curve."""
    if key.family not in MATMUL_FAMILIES:
        raise UnknownFamily(
            f"predict_compute handles GEMM families only, got {key.family!r}")
    return _predict(shape, key, curve, wm)


def predict_generic(shape: MatMulShape, key: KernelKey, curve: ThroughputCurve,
                    wm: WaveModel) -> Prediction:
    """Predict any compute-family kernel (GEMM, vector, attention).

    Row-block families interpret ``shape`` as: ``k`` = varying dimension
    value (vector length / sequence length), ``batch`` = product of the
    fixed outer dimensions.
    """
    if key.family not in MATMUL_FAMILIES and key.family not in ROWBLOCK_FAMILIES:
        raise UnknownFamily(f"no compute predictor for family {key.family!r}")
    return _predict(shape, key, curve, wm)


def _predict(shape: MatMulShape, key: KernelKey, curve: ThroughputCurve,
             wm: WaveModel) -> Prediction:
    if curve.kernel != key:
        raise CurveMismatch(
            f"curve belongs to {curve.kernel.family} algo="
            f"{curve.kernel.algorithm_id}, not {key.family} algo={key.algorithm_id}")
    expected_dim = VARYING_DIM_NAME[key.family]
    if curve.varying_dim_name != expected_dim:
        raise CurveMismatch(
            f"curve varies {curve.varying_dim_name!r} but family {key.family} "
            f"varies {expected_dim!r}")
    wm_eff = wm.for_curve(curve)
    waves = wave_count(shape, key, wm_eff)
    latency, base, thr_new, ref_thr, clamp = _rescale(curve, shape.k, waves)
    return Prediction(
        latency_us=latency,
        kernel=key,
        components={
            "base_us": base,
            "ref_duration_us": curve.ref_duration_us,
            "varying_value": shape.k,
            "ref_dim_value": curve.ref_dim_value,
            "new_throughput_gflops": thr_new,
            "ref_throughput_gflops": ref_thr,
            "waves": waves,
            "ref_waves": curve.ref_waves,
            "wave_scale": waves / curve.ref_waves,
            "blocks_per_wave": wm_eff.blocks_per_wave,
            "clamp": clamp,
        },
    )


def with_component(pred: Prediction, name: str, value) -> Prediction:
    return replace(pred, components={**pred.components, name: value})


# --------------------------------------------------------------------------
# configuration resolution


@dataclass(frozen=True)
class ResolvedConfig:
    key: KernelKey
    match: str           # MATCH_EXACT or MATCH_NEAREST
    distance: float      # 0.0 for exact matches


class ConfigResolver:
    """Replays recorded configuration choices.

    Lookups are exact on (family, dtype, transpose, batch, m, n, k); a miss
    falls back to the nearest recorded shape of the same (family, dtype,
    transpose) by Chebyshev distance in (log2 m, log2 n, log2 k), ties going
    to the smaller (m, n, k, batch). The fallback is always reported as
    approximate; resolution is deterministic either way.
    """

    def __init__(self, records):
        self._exact: Dict[tuple, KernelKey] = {}
        self._by_triple: Dict[tuple, List[tuple]] = {}
        for record in records:
            query = (record.family, record.dtype, record.transpose_mode,
                     record.shape.as_tuple())
            previous = self._exact.get(query)
            if previous is not None and previous != record.chosen_key:
                from .errors import ValidationError
                raise ValidationError(
                    f"ambiguous config map: shape {record.shape.as_tuple()} of "
                    f"({record.family}, {record.dtype.value}, "
                    f"{record.transpose_mode.value}) recorded with two different "
                    f"kernels")
            self._exact[query] = record.chosen_key
            triple = (record.family, record.dtype, record.transpose_mode)
            shape = record.shape
            entry = (
                (math.log2(shape.m), math.log2(shape.n), math.log2(shape.k)),
                (shape.m, shape.n, shape.k, shape.batch),
                record.chosen_key,
            )
            self._by_triple.setdefault(triple, []).append(entry)
        # Deterministic scan order regardless of record order in the file.
        for entries in self._by_triple.values():
            entries.sort(key=lambda entry: entry[1])

    def __len__(self) -> int:
        return len(self._exact)

    def resolve(self, family: str, dtype: DType, transpose_mode: TransposeMode,
                shape: MatMulShape) -> ResolvedConfig:
        exact = self._exact.get((family, dtype, transpose_mode, shape.as_tuple()))
        if exact is not None:
            return ResolvedConfig(key=exact, match=MATCH_EXACT, distance=0.0)
        entries = self._by_triple.get((family, dtype, transpose_mode))
        if not entries:
            raise NoConfigAvailable(
                f"no recorded configuration for ({family}, {dtype.value}, "
                f"{transpose_mode.value})")
        qm, qn, qk = math.log2(shape.m), math.log2(shape.n), math.log2(shape.k)
        best = None
        best_dist = math.inf
        for (lm, ln, lk), lex, key in entries:
            dist = max(abs(lm - qm), abs(ln - qn), abs(lk - qk))
            if dist < best_dist:
                best, best_dist = key, dist
        return ResolvedConfig(key=best, match=MATCH_NEAREST, distance=best_dist)


def resolve_config(family: str, dtype: DType, transpose_mode: TransposeMode,
                   shape: MatMulShape, resolver: ConfigResolver) -> KernelKey:
    """The recorded kernel choice for this operation and shape (nearest
    recorded shape when the exact one was never recorded)."""
    return resolver.resolve(family, dtype, transpose_mode, shape).key
