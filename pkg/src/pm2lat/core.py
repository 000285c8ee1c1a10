"""Shared domain types for kernel-aware GPU latency prediction.

The central idea is kernel differentiation: every distinct configuration
tuple (family, library, algorithm, tile sizes, split-K, swizzle, reduction
scheme, stages, transpose mode, dtype) is its own :class:`KernelKey` with
its own performance data. Two kernels that perform identical FLOP counts
but differ in any configuration field are treated as different kernels.

All types here are immutable after construction and safe to share across
threads. Latencies are microseconds; throughput is GFLOP-equivalents per
second at the dataset's recorded collection frequency.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple, Union

from .errors import ValidationError


class DType(enum.Enum):
    """Numeric precision of a kernel. FP32 runs on CUDA cores, BF16 on
    tensor cores; the two have disjoint kernel configuration spaces."""

    FP32 = "fp32"
    BF16 = "bf16"

    @classmethod
    def parse(cls, text: str) -> "DType":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValidationError(f"unknown dtype {text!r}") from None


class Library(enum.Enum):
    CUBLAS = "cublas"
    CUTLASS = "cutlass"
    TRITON = "triton"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, text: str) -> "Library":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValidationError(f"unknown library {text!r}") from None


class TransposeMode(enum.Enum):
    NN = "nn"
    TN = "tn"
    NT = "nt"
    TT = "tt"

    @classmethod
    def parse(cls, text: str) -> "TransposeMode":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValidationError(f"unknown transpose mode {text!r}") from None


# Kernel families. Utility kernels are identified as "utility:<name>"
# (e.g. "utility:softmax") so that one identity scheme covers everything.
FAMILY_MATMUL = "matmul"
FAMILY_BATCHED_MATMUL = "batched_matmul"
FAMILY_LINEAR = "linear"
FAMILY_TRITON_MM = "triton_mm"
FAMILY_TRITON_VEC = "triton_vec"
FAMILY_FLASH_ATTENTION = "flash_attention"
FAMILY_CUTLASS_ATTENTION = "cutlass_attention"
UTILITY_PREFIX = "utility:"

# Families whose block count follows the output-tile GEMM formula.
MATMUL_FAMILIES = frozenset(
    {FAMILY_MATMUL, FAMILY_BATCHED_MATMUL, FAMILY_LINEAR, FAMILY_TRITON_MM}
)
# Families scheduled as one block per slab of rows/elements.
ROWBLOCK_FAMILIES = frozenset(
    {FAMILY_TRITON_VEC, FAMILY_FLASH_ATTENTION, FAMILY_CUTLASS_ATTENTION}
)
COMPUTE_FAMILIES = MATMUL_FAMILIES | ROWBLOCK_FAMILIES

# Dimension each compute family varies during data collection.
VARYING_DIM_NAME = {
    FAMILY_MATMUL: "K",
    FAMILY_BATCHED_MATMUL: "K",
    FAMILY_LINEAR: "K",
    FAMILY_TRITON_MM: "K",
    FAMILY_TRITON_VEC: "length",
    FAMILY_FLASH_ATTENTION: "seq_len",
    FAMILY_CUTLASS_ATTENTION: "seq_len",
}


def is_utility_family(family: str) -> bool:
    return family.startswith(UTILITY_PREFIX)


def utility_family(kernel_name: str) -> str:
    """Family string for a memory-bound utility kernel, e.g. ``softmax``."""
    if not kernel_name:
        raise ValidationError("utility kernel name must be non-empty")
    return UTILITY_PREFIX + kernel_name


def utility_kernel_name(family: str) -> str:
    if not is_utility_family(family):
        raise ValidationError(f"{family!r} is not a utility family")
    return family[len(UTILITY_PREFIX):]


def check_family(family: str) -> str:
    if family in COMPUTE_FAMILIES or is_utility_family(family):
        return family
    raise ValidationError(f"unknown kernel family {family!r}")


def _require_positive(name: str, value) -> None:
    if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
        raise ValidationError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class DeviceProfile:
    """Static hardware descriptors plus the frequency the data was
    collected at. ``bf16_tflops`` is None for devices without BF16 units."""

    device_id: str
    max_freq_ghz: float
    fp32_tflops: float
    dram_bw_gbs: float
    mem_gb: float
    l2_mb: float
    sm_count: int
    cuda_cores: int
    power_w: float
    collection_freq_mhz: float
    bf16_tflops: Optional[float] = None

    def __post_init__(self):
        if not self.device_id:
            raise ValidationError("device_id must be non-empty")
        for name in ("max_freq_ghz", "fp32_tflops", "dram_bw_gbs", "mem_gb",
                     "l2_mb", "power_w", "collection_freq_mhz"):
            _require_positive(name, getattr(self, name))
        if self.bf16_tflops is not None:
            _require_positive("bf16_tflops", self.bf16_tflops)
        for name in ("sm_count", "cuda_cores"):
            value = getattr(self, name)
            if not (isinstance(value, int) and value > 0):
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class KernelKey:
    """Identity of one distinct kernel.

    Equality and hashing are structural over every field: this is what
    makes two same-purpose kernels with different configurations distinct.
    Tile fields are meaningful for compute families and stored as zero for
    utility kernels.
    """

    family: str
    dtype: DType
    library: Library
    algorithm_id: int
    tile_m: int
    tile_n: int
    transpose_mode: TransposeMode
    split_k: int = 1
    swizzle: int = 0
    reduction_scheme: int = 0
    stages: int = 0

    def __post_init__(self):
        check_family(self.family)
        if is_utility_family(self.family):
            if self.tile_m != 0 or self.tile_n != 0:
                raise ValidationError(
                    f"utility kernel {self.family!r} must carry zero tile fields")
        else:
            if self.tile_m < 1 or self.tile_n < 1:
                raise ValidationError(
                    f"compute kernel {self.family!r} needs tile_m/tile_n >= 1, "
                    f"got {self.tile_m}x{self.tile_n}")
            if self.split_k < 1:
                raise ValidationError(f"split_k must be >= 1, got {self.split_k}")

    @classmethod
    def for_utility(cls, kernel_name: str, dtype: DType) -> "KernelKey":
        """Degenerate key for a memory-bound utility kernel."""
        return cls(
            family=utility_family(kernel_name),
            dtype=dtype,
            library=Library.CUSTOM,
            algorithm_id=0,
            tile_m=0,
            tile_n=0,
            transpose_mode=TransposeMode.NN,
            split_k=1,
        )


@dataclass(frozen=True)
class MatMulShape:
    """Dense GEMM problem size: ``batch`` independent (m x k) @ (k x n)
    products. ``batch`` is 1 for non-batched operations.

    Row-block kernel families (vector and attention kernels) reuse this
    container with the convention: ``k`` holds the varying dimension
    (vector length / sequence length), ``batch`` the product of fixed
    outer dimensions, and ``m``/``n`` are 1.
    """

    batch: int
    m: int
    n: int
    k: int

    def __post_init__(self):
        for name in ("batch", "m", "n", "k"):
            value = getattr(self, name)
            if not (isinstance(value, int) and value >= 1):
                raise ValidationError(f"shape.{name} must be an integer >= 1, got {value!r}")

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.batch, self.m, self.n, self.k)


def flop_count(shape: MatMulShape) -> int:
    """Dense GEMM floating-point operation count: 2 * batch * m * n * k."""
    return 2 * shape.batch * shape.m * shape.n * shape.k


@dataclass(frozen=True)
class CurveSample:
    """One measured point: varying-dimension value -> achieved throughput."""

    dim_value: int
    throughput_gflops: float

    def __post_init__(self):
        if not (isinstance(self.dim_value, int) and self.dim_value >= 1):
            raise ValidationError(f"dim_value must be an integer >= 1, got {self.dim_value!r}")
        _require_positive("throughput_gflops", self.throughput_gflops)


@dataclass(frozen=True)
class ThroughputCurve:
    """Sampled throughput of one kernel along its varying dimension.

    ``ref_dim_value`` is the saturation cap (the largest sampled value,
    conventionally 8192) and ``ref_duration_us`` the measured duration
    there; ``ref_waves`` records how many waves the collection shape
    produced so predictions can rescale to other wave counts.
    """

    kernel: KernelKey
    varying_dim_name: str
    samples: Tuple[CurveSample, ...]
    ref_dim_value: int
    ref_duration_us: float
    ref_waves: int
    device_id: str
    blocks_per_sm: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if len(self.samples) < 2:
            raise ValidationError(
                f"curve for {self.kernel.family} needs >= 2 samples, got {len(self.samples)}")
        dims = [s.dim_value for s in self.samples]
        for lo, hi in zip(dims, dims[1:]):
            if hi <= lo:
                raise ValidationError(
                    f"curve samples must be strictly ascending in dim_value "
                    f"({lo} then {hi})")
        if self.ref_dim_value != dims[-1]:
            raise ValidationError(
                f"ref_dim_value {self.ref_dim_value} must equal the largest "
                f"sampled dim {dims[-1]}")
        _require_positive("ref_duration_us", self.ref_duration_us)
        if not (isinstance(self.ref_waves, int) and self.ref_waves >= 1):
            raise ValidationError(f"ref_waves must be an integer >= 1, got {self.ref_waves!r}")
        if not self.device_id:
            raise ValidationError("curve device_id must be non-empty")
        if self.blocks_per_sm is not None and self.blocks_per_sm < 1:
            raise ValidationError(f"blocks_per_sm must be >= 1, got {self.blocks_per_sm}")

    @property
    def min_dim_value(self) -> int:
        return self.samples[0].dim_value

    @property
    def ref_throughput(self) -> float:
        """Throughput at the cap point (largest sampled dim)."""
        return self.samples[-1].throughput_gflops

    def dim_values(self) -> Tuple[int, ...]:
        return tuple(s.dim_value for s in self.samples)


@dataclass(frozen=True)
class MemBoundFeatures:
    """Proxy metrics that drive memory-bound kernel latency: instruction
    counts and memory traffic, as reported by a hardware profiler."""

    flops: float
    int_ops: float
    bytes_loaded: float
    bytes_stored: float
    total_bytes_accessed: float

    FIELD_ORDER = ("flops", "int_ops", "bytes_loaded", "bytes_stored",
                   "total_bytes_accessed")

    def __post_init__(self):
        for name in self.FIELD_ORDER:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
                raise ValidationError(f"features.{name} must be finite and >= 0, got {value!r}")

    def as_vector(self) -> Tuple[float, ...]:
        return tuple(float(getattr(self, name)) for name in self.FIELD_ORDER)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a model graph. Compute layers carry a shape; utility
    layers carry a profiled feature vector."""

    layer_id: str
    family: str
    dtype: DType
    shape: Optional[MatMulShape] = None
    features: Optional[MemBoundFeatures] = None
    transpose_mode: Optional[TransposeMode] = None
    resolved_key: Optional[KernelKey] = None

    def __post_init__(self):
        if not self.layer_id:
            raise ValidationError("layer_id must be non-empty")
        if self.shape is None and self.features is None:
            raise ValidationError(f"layer {self.layer_id!r} needs a shape or features")


@dataclass(frozen=True)
class ModelGraph:
    """Ordered layer list; execution is sequential in list order."""

    model_name: str
    layers: Tuple[LayerSpec, ...]
    batch_size: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValidationError(f"model {self.model_name!r} has no layers")
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            raise ValidationError(f"batch_size must be an integer >= 1, got {self.batch_size!r}")
        seen = set()
        for layer in self.layers:
            if layer.layer_id in seen:
                raise ValidationError(f"duplicate layer_id {layer.layer_id!r}")
            seen.add(layer.layer_id)


@dataclass(frozen=True)
class Prediction:
    """A predicted kernel latency plus an auditable per-term breakdown."""

    latency_us: float
    kernel: KernelKey
    components: Mapping[str, Union[float, int, str, bool, None]] = field(
        default_factory=dict)

    def __post_init__(self):
        if not (self.latency_us > 0 and math.isfinite(self.latency_us)):
            raise ValidationError(
                f"latency_us must be finite and > 0, got {self.latency_us!r}")
