"""Deterministic synthetic SIMT device.

Serves two purposes: (1) ground truth — durations generated from planted
rational throughput curves composed with the tile/wave schedule, so the
prediction pipeline can be checked end to end without hardware; (2) fixture
generation — schema-valid datasets that look like real collection runs
(powers-of-two sampling, reference point at the cap, config map entries for
every collected shape, optional multiplicative measurement noise averaged
over repetitions).

Planted curve parameters are fixture metadata chosen to be monotone
increasing and saturating; they are not measurements of any real device.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .compute import WaveModel, wave_count
from .core import (
    FAMILY_BATCHED_MATMUL,
    FAMILY_CUTLASS_ATTENTION,
    FAMILY_FLASH_ATTENTION,
    FAMILY_LINEAR,
    FAMILY_MATMUL,
    FAMILY_TRITON_MM,
    FAMILY_TRITON_VEC,
    MATMUL_FAMILIES,
    VARYING_DIM_NAME,
    CurveSample,
    DeviceProfile,
    DType,
    KernelKey,
    Library,
    MatMulShape,
    MemBoundFeatures,
    ThroughputCurve,
    TransposeMode,
)
from .errors import UnknownKernel, ValidationError
from .ingest import ConfigRecord, Dataset, MemBoundRecord

DEFAULT_SAMPLE_DIMS = tuple(2 ** p for p in range(5, 14))   # 32 .. 8192


@dataclass(frozen=True)
class PlantedCurve:
    """Planted throughput trend y = (a*x + b)/(c*x + d), required positive
    over [1, 2*ref] so fixtures can probe past the cap."""

    a: float
    b: float
    c: float
    d: float

    def __call__(self, dim) -> float:
        return (self.a * dim + self.b) / (self.c * dim + self.d)

    def validate(self, ref_dim: int) -> None:
        for x in (1, 2 * ref_dim):
            if self.c * x + self.d <= 0 or self(x) <= 0:
                raise ValidationError(
                    f"planted curve not positive over [1, {2 * ref_dim}]: "
                    f"(a,b,c,d)=({self.a},{self.b},{self.c},{self.d})")


@dataclass(frozen=True)
class KernelPlan:
    """Sampling plan for one kernel: which dims to collect and the fixed
    collection shape (chosen so block and wave counts are under control)."""

    key: KernelKey
    curve: PlantedCurve
    sample_dims: Tuple[int, ...] = DEFAULT_SAMPLE_DIMS
    collect_batch: int = 1
    collect_m: int = 0          # 0 = one full tile (tile_m); rowblock families ignore
    collect_n: int = 0
    repetitions: int = 25

    def __post_init__(self):
        object.__setattr__(self, "sample_dims", tuple(sorted(self.sample_dims)))
        if len(self.sample_dims) < 2:
            raise ValidationError("kernel plan needs >= 2 sample dims")
        if len(set(self.sample_dims)) != len(self.sample_dims):
            raise ValidationError("kernel plan sample dims must be unique")
        self.curve.validate(self.sample_dims[-1])

    @property
    def ref_dim(self) -> int:
        return self.sample_dims[-1]

    def collection_shape(self, dim: int) -> MatMulShape:
        if self.key.family in MATMUL_FAMILIES:
            m = self.collect_m or self.key.tile_m
            n = self.collect_n or self.key.tile_n
            return MatMulShape(batch=self.collect_batch, m=m, n=n, k=dim)
        return MatMulShape(batch=self.collect_batch, m=1, n=1, k=dim)


@dataclass(frozen=True)
class SyntheticDevice:
    """A fake GPU: a device profile plus planted curves per kernel."""

    profile: DeviceProfile
    plans: Tuple[KernelPlan, ...]
    noise_seed: int = 0
    noise_rel_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "plans", tuple(self.plans))
        if self.noise_rel_sigma < 0:
            raise ValidationError("noise_rel_sigma must be >= 0")
        seen = set()
        for plan in self.plans:
            if plan.key in seen:
                raise ValidationError("duplicate kernel key in synthetic device")
            seen.add(plan.key)

    def plan_for(self, key: KernelKey) -> KernelPlan:
        for plan in self.plans:
            if plan.key == key:
                return plan
        raise UnknownKernel(
            f"synthetic device has no planted curve for {key.family} "
            f"algo={key.algorithm_id} tile={key.tile_m}x{key.tile_n}")

    def wave_model(self) -> WaveModel:
        return WaveModel(sm_count=self.profile.sm_count)


def _per_wave_workload_coeff(key: KernelKey, wm: WaveModel) -> float:
    """GFLOP-equivalents one full wave performs per unit of the varying
    dimension. GEMM blocks each compute 2*tile_m*tile_n MACs per K step
    (split across split_k blocks); row-block kernels process tile_m
    rows/elements per block with unit work each."""
    if key.family in MATMUL_FAMILIES:
        per_block = 2.0 * key.tile_m * key.tile_n / key.split_k
    else:
        per_block = float(key.tile_m)
    return per_block * wm.blocks_per_wave


def _noise_rng(device: SyntheticDevice, key: KernelKey, shape: MatMulShape):
    material = json.dumps(
        [device.noise_seed,
         [key.family, key.dtype.value, key.library.value, key.algorithm_id,
          key.tile_m, key.tile_n, key.split_k, key.swizzle,
          key.reduction_scheme, key.stages, key.transpose_mode.value],
         list(shape.as_tuple())],
        separators=(",", ":"))
    digest = hashlib.blake2b(material.encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


def _noise_multipliers(device: SyntheticDevice, key: KernelKey,
                       shape: MatMulShape, count: int) -> np.ndarray:
    rng = _noise_rng(device, key, shape)
    return np.exp(rng.normal(0.0, device.noise_rel_sigma, size=count))


def true_duration(device: SyntheticDevice, key: KernelKey, shape: MatMulShape,
                  wm: WaveModel) -> float:
    """Ground-truth duration in microseconds for one kernel launch.

    duration = per_wave_workload(v) / throughput(v) * waves, with the same
    full-cost partial-tile and partial-wave ceilings the predictor uses.
    Multiplicative log-normal noise (when enabled) is drawn from a stream
    keyed by (kernel, shape), so repeated calls are reproducible.
    """
    plan = device.plan_for(key)
    waves = wave_count(shape, key, wm)
    thr = plan.curve(shape.k)
    duration = (_per_wave_workload_coeff(key, wm) * shape.k * waves) / (thr * 1000.0)
    if device.noise_rel_sigma > 0:
        duration *= float(_noise_multipliers(device, key, shape, 1)[0])
    return duration


def _exact_duration(device: SyntheticDevice, plan: KernelPlan, shape: MatMulShape,
                    wm: WaveModel) -> float:
    waves = wave_count(shape, plan.key, wm)
    thr = plan.curve(shape.k)
    return (_per_wave_workload_coeff(plan.key, wm) * shape.k * waves) / (thr * 1000.0)


def emit_fixture(device: SyntheticDevice, wm: Optional[WaveModel] = None) -> Dataset:
    """Run the synthetic collection protocol and return a schema-valid
    dataset: per-plan throughput samples (noise-averaged over the plan's
    repetitions), the reference point at the cap dim, and config-map
    entries so every collected shape resolves exactly."""
    wm = wm or device.wave_model()
    curves: Dict[KernelKey, ThroughputCurve] = {}
    config_map: List[ConfigRecord] = []
    seen_queries = set()
    for plan in device.plans:
        key = plan.key
        samples = []
        for dim in plan.sample_dims:
            shape = plan.collection_shape(dim)
            if device.noise_rel_sigma > 0:
                mults = _noise_multipliers(device, key, shape, plan.repetitions)
                mean_duration = _exact_duration(device, plan, shape, wm) * float(np.mean(mults))
                waves = wave_count(shape, key, wm)
                workload = _per_wave_workload_coeff(key, wm) * dim * waves
                thr = workload / (mean_duration * 1000.0)
            else:
                thr = plan.curve(dim)
            samples.append(CurveSample(dim_value=dim, throughput_gflops=thr))
            query = (key.family, key.dtype, key.transpose_mode, shape.as_tuple())
            if query in seen_queries:
                raise ValidationError(
                    f"two plans collect the identical shape {shape.as_tuple()} "
                    f"for ({key.family}, {key.dtype.value}, "
                    f"{key.transpose_mode.value}); vary collect_batch")
            seen_queries.add(query)
            config_map.append(ConfigRecord(
                family=key.family, dtype=key.dtype,
                transpose_mode=key.transpose_mode, shape=shape, chosen_key=key))
        ref_shape = plan.collection_shape(plan.ref_dim)
        if device.noise_rel_sigma > 0:
            mults = _noise_multipliers(device, key, ref_shape, plan.repetitions)
            ref_duration = _exact_duration(device, plan, ref_shape, wm) * float(np.mean(mults))
        else:
            ref_duration = _exact_duration(device, plan, ref_shape, wm)
        curves[key] = ThroughputCurve(
            kernel=key,
            varying_dim_name=VARYING_DIM_NAME[key.family],
            samples=tuple(samples),
            ref_dim_value=plan.ref_dim,
            ref_duration_us=ref_duration,
            ref_waves=wave_count(ref_shape, key, wm),
            device_id=device.profile.device_id,
        )
    return Dataset(
        device=device.profile,
        curves=curves,
        config_map=tuple(config_map),
        membound_records=(),
    )


# --------------------------------------------------------------------------
# planted linear models for memory-bound fixtures


@dataclass(frozen=True)
class PlantedLinear:
    """Ground-truth linear latency model for one utility kernel."""

    kernel_name: str
    dtype: DType
    weights: Tuple[float, float, float, float, float]
    intercept: float

    def latency(self, features: MemBoundFeatures) -> float:
        return float(np.dot(self.weights, features.as_vector())) + self.intercept


def synth_features(rng: np.random.Generator, elem_bytes: int = 4,
                   log10_lo: float = 5.0, log10_hi: float = 7.0) -> MemBoundFeatures:
    """A plausible profiled feature vector for an elementwise-ish kernel."""
    elements = float(10 ** rng.uniform(log10_lo, log10_hi))
    loaded = elements * elem_bytes * rng.uniform(1.0, 2.0)
    stored = elements * elem_bytes
    # cache-line overfetch keeps total traffic above the load+store sum (and
    # the feature columns linearly independent)
    total = (loaded + stored) * rng.uniform(1.0, 1.3)
    return MemBoundFeatures(
        flops=elements * rng.uniform(0.5, 4.0),
        int_ops=elements * rng.uniform(0.1, 1.0),
        bytes_loaded=loaded,
        bytes_stored=stored,
        total_bytes_accessed=total,
    )


def emit_membound_records(planted: PlantedLinear, count: int, seed: int,
                          noise_rel_sigma: float = 0.0) -> Tuple[MemBoundRecord, ...]:
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(count):
        features = synth_features(rng)
        latency = planted.latency(features)
        if noise_rel_sigma > 0:
            latency *= float(np.exp(rng.normal(0.0, noise_rel_sigma)))
        records.append(MemBoundRecord(
            kernel_name=planted.kernel_name, dtype=planted.dtype,
            features=features, latency_us=latency))
    return tuple(records)


# --------------------------------------------------------------------------
# preset devices: enough kernels to mimic one real collection run


def standard_profile(device_id: str = "synth-gpu-a",
                     sm_count: int = 30) -> DeviceProfile:
    return DeviceProfile(
        device_id=device_id,
        max_freq_ghz=2.0,
        fp32_tflops=16.0,
        bf16_tflops=32.0,
        dram_bw_gbs=336.0,
        mem_gb=8.0,
        l2_mb=4.0,
        sm_count=sm_count,
        cuda_cores=3840,
        power_w=130.0,
        collection_freq_mhz=1200.0,
    )


_FP32_TILES = [
    (128, 128), (128, 64), (64, 128), (64, 64), (256, 128), (128, 256),
    (32, 32), (64, 32), (32, 64), (256, 64), (64, 256), (32, 128), (128, 32),
]

# Family layout of the FP32 preset: 6 plain GEMM, 4 linear (TN), 3 batched.
_FP32_FAMILY_SPLIT = (
    (FAMILY_MATMUL, TransposeMode.NN, 6),
    (FAMILY_LINEAR, TransposeMode.TN, 4),
    (FAMILY_BATCHED_MATMUL, TransposeMode.NN, 3),
)

_BF16_FAMILY_SPLIT = (
    (FAMILY_MATMUL, TransposeMode.NN, 60),
    (FAMILY_LINEAR, TransposeMode.TN, 24),
    (FAMILY_BATCHED_MATMUL, TransposeMode.NN, 16),
)


def _planted_params(rng: np.random.Generator, peak_gflops: float) -> PlantedCurve:
    saturated = peak_gflops * rng.uniform(0.55, 0.95)
    knee = rng.uniform(80.0, 1500.0)
    low_frac = rng.uniform(0.05, 0.35)
    return PlantedCurve(a=saturated, b=saturated * low_frac * knee, c=1.0, d=knee)


def _gemm_plans(dtype: DType, split: Sequence[Tuple[str, TransposeMode, int]],
                peak_gflops: float, seed: int,
                sample_dims: Tuple[int, ...] = DEFAULT_SAMPLE_DIMS) -> List[KernelPlan]:
    rng = np.random.default_rng(seed)
    plans: List[KernelPlan] = []
    used_shapes = set()
    index = 0
    for family, transpose, count in split:
        for algo in range(count):
            tile_m, tile_n = _FP32_TILES[index % len(_FP32_TILES)]
            library = Library.CUBLAS if index % 3 else Library.CUTLASS
            split_k = 2 if index % 5 == 4 else 1
            key = KernelKey(
                family=family, dtype=dtype, library=library,
                algorithm_id=algo, tile_m=tile_m, tile_n=tile_n,
                transpose_mode=transpose, split_k=split_k,
                swizzle=index % 2, reduction_scheme=1 if split_k > 1 else 0,
                stages=2 + index % 3,
            )
            batch = 2 if family == FAMILY_BATCHED_MATMUL else 1
            mult_m = 1 + algo % 3
            mult_n = 1 + (algo // 3) % 3
            while (family, transpose, batch, tile_m * mult_m, tile_n * mult_n) in used_shapes:
                batch += 1
            used_shapes.add((family, transpose, batch, tile_m * mult_m, tile_n * mult_n))
            plans.append(KernelPlan(
                key=key,
                curve=_planted_params(rng, peak_gflops),
                sample_dims=sample_dims,
                collect_batch=batch,
                collect_m=tile_m * mult_m,
                collect_n=tile_n * mult_n,
            ))
            index += 1
    return plans


def generic_plans(dtype: DType, peak_gflops: float, seed: int) -> List[KernelPlan]:
    """One kernel each for the non-GEMM compute families."""
    rng = np.random.default_rng(seed)
    plans = [
        KernelPlan(
            key=KernelKey(family=FAMILY_TRITON_MM, dtype=dtype,
                          library=Library.TRITON, algorithm_id=0,
                          tile_m=64, tile_n=64, transpose_mode=TransposeMode.NN),
            curve=_planted_params(rng, peak_gflops),
            collect_m=128, collect_n=128,
        ),
        KernelPlan(
            key=KernelKey(family=FAMILY_TRITON_VEC, dtype=dtype,
                          library=Library.TRITON, algorithm_id=0,
                          tile_m=1024, tile_n=1, transpose_mode=TransposeMode.NN),
            curve=_planted_params(rng, peak_gflops * 0.05),
            sample_dims=tuple(2 ** p for p in range(12, 21)),   # 4096 .. 1M elements
        ),
        KernelPlan(
            key=KernelKey(family=FAMILY_FLASH_ATTENTION, dtype=dtype,
                          library=Library.CUTLASS, algorithm_id=0,
                          tile_m=64, tile_n=1, transpose_mode=TransposeMode.NN),
            curve=_planted_params(rng, peak_gflops * 0.6),
            sample_dims=tuple(2 ** p for p in range(6, 14)),    # 64 .. 8192 tokens
            collect_batch=96,                                    # batch x heads
        ),
        KernelPlan(
            key=KernelKey(family=FAMILY_CUTLASS_ATTENTION, dtype=dtype,
                          library=Library.CUTLASS, algorithm_id=1,
                          tile_m=128, tile_n=1, transpose_mode=TransposeMode.NN),
            curve=_planted_params(rng, peak_gflops * 0.6),
            sample_dims=tuple(2 ** p for p in range(6, 14)),
            collect_batch=96,
        ),
    ]
    return plans


def fp32_device(seed: int = 7, noise_rel_sigma: float = 0.0,
                device_id: str = "synth-gpu-a") -> SyntheticDevice:
    """Preset with the typical FP32 configuration count (13 GEMM kernels)."""
    profile = standard_profile(device_id)
    plans = _gemm_plans(DType.FP32, _FP32_FAMILY_SPLIT,
                        profile.fp32_tflops * 1000.0, seed)
    return SyntheticDevice(profile=profile, plans=tuple(plans),
                           noise_seed=seed, noise_rel_sigma=noise_rel_sigma)


def bf16_device(seed: int = 11, noise_rel_sigma: float = 0.0,
                device_id: str = "synth-gpu-a") -> SyntheticDevice:
    """Preset with the much larger BF16 configuration count (100 kernels)."""
    profile = standard_profile(device_id)
    plans = _gemm_plans(DType.BF16, _BF16_FAMILY_SPLIT,
                        profile.bf16_tflops * 1000.0, seed)
    return SyntheticDevice(profile=profile, plans=tuple(plans),
                           noise_seed=seed, noise_rel_sigma=noise_rel_sigma)


def generic_device(seed: int = 13, dtype: DType = DType.FP32,
                   device_id: str = "synth-gpu-a") -> SyntheticDevice:
    profile = standard_profile(device_id)
    peak = (profile.bf16_tflops if dtype == DType.BF16 else profile.fp32_tflops) * 1000.0
    return SyntheticDevice(profile=profile,
                           plans=tuple(generic_plans(dtype, peak, seed)),
                           noise_seed=seed)


DEFAULT_PLANTED_LINEARS = (
    PlantedLinear("softmax", DType.FP32,
                  (1.2e-6, 4.0e-7, 2.1e-6, 2.6e-6, 9.0e-7), 3.0),
    PlantedLinear("gelu", DType.FP32,
                  (2.0e-6, 2.0e-7, 1.8e-6, 2.2e-6, 7.5e-7), 2.5),
    PlantedLinear("add", DType.FP32,
                  (4.0e-7, 3.0e-7, 1.6e-6, 2.0e-6, 6.0e-7), 2.2),
)


def with_membound_fixture(dataset: Dataset, count: int = 32, seed: int = 23,
                          noise_rel_sigma: float = 0.0,
                          planted: Iterable[PlantedLinear] = DEFAULT_PLANTED_LINEARS,
                          ) -> Dataset:
    """Return a copy of ``dataset`` with synthetic utility-kernel records."""
    records: List[MemBoundRecord] = list(dataset.membound_records)
    for i, model in enumerate(planted):
        records.extend(emit_membound_records(model, count, seed + i, noise_rel_sigma))
    return Dataset(
        device=dataset.device,
        curves=dict(dataset.curves),
        config_map=dataset.config_map,
        membound_records=tuple(records),
        membound_models=dataset.membound_models,
        schema_version=dataset.schema_version,
    )


# --------------------------------------------------------------------------
# JSON config for the CLI (`oracle emit`)


def device_from_config_obj(obj) -> SyntheticDevice:
    from .ingest import device_from_json_obj, kernel_key_from_json_obj

    profile = device_from_json_obj(obj["device"], "/device")
    plans = []
    for i, plan_obj in enumerate(obj.get("kernels", [])):
        params = plan_obj["curve_params"]
        plans.append(KernelPlan(
            key=kernel_key_from_json_obj(plan_obj["key"], f"/kernels/{i}/key"),
            curve=PlantedCurve(a=float(params["a"]), b=float(params["b"]),
                               c=float(params["c"]), d=float(params["d"])),
            sample_dims=tuple(int(d) for d in plan_obj.get(
                "sample_dims", DEFAULT_SAMPLE_DIMS)),
            collect_batch=int(plan_obj.get("collect_batch", 1)),
            collect_m=int(plan_obj.get("collect_m", 0)),
            collect_n=int(plan_obj.get("collect_n", 0)),
            repetitions=int(plan_obj.get("repetitions", 25)),
        ))
    return SyntheticDevice(
        profile=profile,
        plans=tuple(plans),
        noise_seed=int(obj.get("noise_seed", 0)),
        noise_rel_sigma=float(obj.get("noise_rel_sigma", 0.0)),
    )


def device_to_config_obj(device: SyntheticDevice) -> dict:
    from .ingest import device_to_json_obj, kernel_key_to_json_obj

    return {
        "device": device_to_json_obj(device.profile),
        "noise_seed": device.noise_seed,
        "noise_rel_sigma": device.noise_rel_sigma,
        "kernels": [
            {
                "key": kernel_key_to_json_obj(plan.key),
                "curve_params": {"a": plan.curve.a, "b": plan.curve.b,
                                 "c": plan.curve.c, "d": plan.curve.d},
                "sample_dims": list(plan.sample_dims),
                "collect_batch": plan.collect_batch,
                "collect_m": plan.collect_m,
                "collect_n": plan.collect_n,
                "repetitions": plan.repetitions,
            }
            for plan in device.plans
        ],
    }
