"""Collection plans and their statistical-quality gates.

Timing noise on GPUs is tamed by repetition: every kernel must run at
least 25 times with at least 500 ms of total execution, after a warm-up.
Those floors are enforced here and can only be lowered with an explicit
override flag, never silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

MIN_REPETITIONS = 25
MIN_TOTAL_MS = 500.0
DEFAULT_WARMUP_REPS = 5
DEFAULT_K_GRID = tuple(2 ** p for p in range(5, 14))    # 32 .. 8192

DTYPES = ("fp32", "bf16")
COMPUTE_FAMILIES = ("matmul", "batched_matmul", "linear")


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class CollectionPlan:
    """What to collect and how carefully."""

    dtypes: Tuple[str, ...] = ("fp32",)
    families: Tuple[str, ...] = ("matmul",)
    k_grid: Tuple[int, ...] = DEFAULT_K_GRID
    wave_targets: Tuple[int, ...] = (1,)
    repetitions: int = MIN_REPETITIONS
    min_total_ms: float = MIN_TOTAL_MS
    warmup_reps: int = DEFAULT_WARMUP_REPS
    allow_low_quality: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dtypes", tuple(self.dtypes))
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "k_grid", tuple(sorted(set(self.k_grid))))
        object.__setattr__(self, "wave_targets", tuple(self.wave_targets))
        for dtype in self.dtypes:
            if dtype not in DTYPES:
                raise PlanError(f"unknown dtype {dtype!r}")
        for family in self.families:
            if family not in COMPUTE_FAMILIES:
                raise PlanError(f"unknown family {family!r}")
        if not self.k_grid or self.k_grid[0] < 1:
            raise PlanError("k_grid must be non-empty positive integers")
        if self.warmup_reps < 0:
            raise PlanError("warmup_reps must be >= 0")
        if not self.allow_low_quality:
            if self.repetitions < MIN_REPETITIONS:
                raise PlanError(
                    f"repetitions={self.repetitions} is below the minimum "
                    f"{MIN_REPETITIONS}; pass --allow-low-quality to override")
            if self.min_total_ms < MIN_TOTAL_MS:
                raise PlanError(
                    f"min_total_ms={self.min_total_ms} is below the minimum "
                    f"{MIN_TOTAL_MS}; pass --allow-low-quality to override")

    @property
    def ref_k(self) -> int:
        return self.k_grid[-1]


DEFAULT_UTILITY_KERNELS = ("relu", "gelu", "softmax", "add", "mul", "dropout")


@dataclass(frozen=True)
class MemBoundPlan:
    """Utility-kernel capture plan: which kernels over which tensor sizes."""

    kernels: Tuple[str, ...] = DEFAULT_UTILITY_KERNELS
    dtypes: Tuple[str, ...] = ("fp32",)
    sizes: Tuple[Tuple[int, int], ...] = field(
        default_factory=lambda: tuple(
            (batch, features)
            for batch in (1, 8, 64, 512)
            for features in (256, 1024, 4096, 16384)))
    repetitions: int = MIN_REPETITIONS
    warmup_reps: int = DEFAULT_WARMUP_REPS
    allow_low_quality: bool = False

    def __post_init__(self):
        if not self.allow_low_quality and self.repetitions < MIN_REPETITIONS:
            raise PlanError(
                f"repetitions={self.repetitions} is below the minimum "
                f"{MIN_REPETITIONS}; pass --allow-low-quality to override")


@dataclass(frozen=True)
class ConfigMapPlan:
    """Shape grid over which the library's chosen kernel is recorded."""

    dtypes: Tuple[str, ...] = ("fp32",)
    transpose_modes: Tuple[str, ...] = ("nn", "tn")
    m_values: Tuple[int, ...] = (64, 128, 256, 512, 1024, 2048, 4096, 8192)
    n_values: Tuple[int, ...] = (64, 128, 256, 512, 1024, 2048, 4096, 8192)
    k_values: Tuple[int, ...] = DEFAULT_K_GRID

    def shapes(self):
        for m in self.m_values:
            for n in self.n_values:
                for k in self.k_values:
                    yield (1, m, n, k)
