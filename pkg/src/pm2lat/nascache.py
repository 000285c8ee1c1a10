"""Grid precomputation and the binary lookup store.

Architecture-search preprocessing predicts latency for every point of a
declared configuration grid once and serves lookups from a store file. The
store is reproducible byte for byte: records are fixed-width (four
big-endian u64 coordinates + one big-endian IEEE-754 latency), sorted by
key bytes — which is exactly the nested ascending enumeration order — and
the header carries content fingerprints of the producing dataset and grid
so stale caches are detected instead of silently served.

The per-point prediction is the hot loop (grids reach 1e8 points), so it
runs through the batch backend: a compiled kernel when available, a
pure-Python loop otherwise, both bit-identical to the scalar predictor.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import mmap
import struct
import time
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .compute import ConfigResolver, WaveModel
from .core import (
    COMPUTE_FAMILIES,
    MATMUL_FAMILIES,
    DType,
    KernelKey,
    ThroughputCurve,
    TransposeMode,
    check_family,
)
from .errors import (
    CacheFormatError,
    MissingEntry,
    StaleCache,
    UnresolvedPoint,
    ValidationError,
)
from .ingest import Dataset

MAGIC = b"PM2L"
FORMAT_VERSION = 1
AXIS_ORDER = ("batch", "m", "n", "k")
_KEY_STRUCT = struct.Struct(">QQQQ")
_REC_STRUCT = struct.Struct(">QQQQd")
RECORD_SIZE = _REC_STRUCT.size

# Coordinates must fit 16 bits for the packed exact-match table used by the
# compiled kernel; larger grids take the pure-Python path.
FAST_COORD_LIMIT = 1 << 16


@dataclass(frozen=True)
class GridSpec:
    """Explicit value lists per axis (auditable cardinality), one compute
    family and dtype per grid."""

    family: str
    dtype: DType
    transpose_mode: TransposeMode
    axes: Dict[str, Tuple[int, ...]]

    def __post_init__(self):
        check_family(self.family)
        if self.family not in COMPUTE_FAMILIES:
            raise ValidationError(
                f"grids cover compute families only, got {self.family!r}")
        normalized = {}
        for name in AXIS_ORDER:
            values = self.axes.get(name, (1,))
            values = tuple(sorted(int(v) for v in values))
            if not values:
                raise ValidationError(f"axis {name!r} must be non-empty")
            if len(set(values)) != len(values):
                raise ValidationError(f"axis {name!r} has duplicate values")
            if values[0] < 1:
                raise ValidationError(f"axis {name!r} values must be >= 1")
            normalized[name] = values
        unknown = set(self.axes) - set(AXIS_ORDER)
        if unknown:
            raise ValidationError(f"unknown grid axes {sorted(unknown)}")
        object.__setattr__(self, "axes", normalized)

    @property
    def cardinality(self) -> int:
        total = 1
        for name in AXIS_ORDER:
            total *= len(self.axes[name])
        return total

    def iter_points(self) -> Iterator[Tuple[int, int, int, int]]:
        return itertools.product(*(self.axes[name] for name in AXIS_ORDER))

    def to_json_obj(self) -> dict:
        return {
            "family": self.family,
            "dtype": self.dtype.value,
            "transpose_mode": self.transpose_mode.value,
            "axes": {name: list(self.axes[name]) for name in AXIS_ORDER},
        }

    @classmethod
    def from_json_obj(cls, obj) -> "GridSpec":
        try:
            axes = {name: tuple(values) for name, values in obj["axes"].items()}
            family = obj["family"]
            default_transpose = "tn" if family == "linear" else "nn"
            return cls(
                family=family,
                dtype=DType.parse(obj["dtype"]),
                transpose_mode=TransposeMode.parse(
                    obj.get("transpose_mode", default_transpose)),
                axes=axes,
            )
        except KeyError as exc:
            raise ValidationError(f"grid spec missing field {exc.args[0]!r}") from None

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


class PreparedGrid:
    """Everything the batch backends need, resolved once per grid.

    Holds the scalar-path objects (resolver, curves, wave model) for the
    pure-Python backend and flat numpy tables for the compiled kernel. A
    config record whose chosen kernel has no throughput curve stays in the
    tables with curve index -1: points resolving to it come out NaN and are
    reported as unresolved.
    """

    def __init__(self, dataset: Dataset, grid: GridSpec, wm: WaveModel):
        self.grid = grid
        self.wm = wm
        self.dataset = dataset
        self.resolver = ConfigResolver(dataset.config_map)
        triple = (grid.family, grid.dtype, grid.transpose_mode)
        records = [r for r in dataset.config_map
                   if (r.family, r.dtype, r.transpose_mode) == triple]
        # Deterministic candidate order shared with ConfigResolver.
        records.sort(key=lambda r: (r.shape.m, r.shape.n, r.shape.k, r.shape.batch))
        self.records = records
        self.curve_list: List[Optional[ThroughputCurve]] = []
        self._curve_index: Dict[KernelKey, int] = {}
        self.record_curve_idx: List[int] = []
        for record in records:
            key = record.chosen_key
            if key not in self._curve_index:
                self._curve_index[key] = len(self.curve_list)
                self.curve_list.append(dataset.curves.get(key))
            self.record_curve_idx.append(
                self._curve_index[key] if self.curve_list[self._curve_index[key]]
                is not None else -1)

        max_coord = 0
        for record in records:
            max_coord = max(max_coord, *record.shape.as_tuple())
        for name in AXIS_ORDER:
            max_coord = max(max_coord, grid.axes[name][-1])
        self.fast_path_ok = bool(records) and max_coord < FAST_COORD_LIMIT
        self._tables = None

    def has_candidates(self) -> bool:
        return bool(self.records)

    def tables(self) -> dict:
        """Flat arrays for the compiled kernel (built lazily)."""
        if self._tables is not None:
            return self._tables
        if not self.fast_path_ok:
            raise ValidationError("fast-path tables unavailable for this grid")
        n_rec = len(self.records)
        packed = np.empty(n_rec, dtype=np.uint64)
        log_m = np.empty(n_rec, dtype=np.float64)
        log_n = np.empty(n_rec, dtype=np.float64)
        log_k = np.empty(n_rec, dtype=np.float64)
        rec_curve = np.array(self.record_curve_idx, dtype=np.int64)
        for i, record in enumerate(self.records):
            b, m, n, k = record.shape.as_tuple()
            packed[i] = (b << 48) | (m << 32) | (n << 16) | k
            log_m[i] = np.log2(np.float64(m))
            log_n[i] = np.log2(np.float64(n))
            log_k[i] = np.log2(np.float64(k))
        order = np.argsort(packed, kind="stable")
        exact_keys = packed[order]
        exact_curve = rec_curve[order.astype(np.int64)]

        n_curves = len(self.curve_list)
        sample_offsets = np.zeros(n_curves + 1, dtype=np.int64)
        dims_flat: List[float] = []
        thrs_flat: List[float] = []
        ref_dim = np.zeros(n_curves, dtype=np.float64)
        ref_dur = np.zeros(n_curves, dtype=np.float64)
        ref_thr = np.zeros(n_curves, dtype=np.float64)
        ref_waves = np.zeros(n_curves, dtype=np.float64)
        tile_m = np.zeros(n_curves, dtype=np.uint64)
        tile_n = np.zeros(n_curves, dtype=np.uint64)
        split_k = np.zeros(n_curves, dtype=np.uint64)
        blocks_per_wave = np.zeros(n_curves, dtype=np.uint64)
        family_rowblock = np.zeros(n_curves, dtype=np.uint8)
        for ci, curve in enumerate(self.curve_list):
            if curve is None:
                sample_offsets[ci + 1] = sample_offsets[ci]
                continue
            for sample in curve.samples:
                dims_flat.append(float(sample.dim_value))
                thrs_flat.append(sample.throughput_gflops)
            sample_offsets[ci + 1] = len(dims_flat)
            ref_dim[ci] = float(curve.ref_dim_value)
            ref_dur[ci] = curve.ref_duration_us
            ref_thr[ci] = curve.ref_throughput
            ref_waves[ci] = float(curve.ref_waves)
            key = curve.kernel
            tile_m[ci] = key.tile_m
            tile_n[ci] = key.tile_n
            split_k[ci] = key.split_k
            blocks_per_wave[ci] = self.wm.for_curve(curve).blocks_per_wave
            family_rowblock[ci] = 0 if key.family in MATMUL_FAMILIES else 1
        self._tables = {
            "exact_keys": exact_keys,
            "exact_curve": exact_curve,
            "log_m": log_m, "log_n": log_n, "log_k": log_k,
            "cand_curve": rec_curve,
            "sample_offsets": sample_offsets,
            "sample_dims": np.array(dims_flat, dtype=np.float64),
            "sample_thrs": np.array(thrs_flat, dtype=np.float64),
            "ref_dim": ref_dim, "ref_dur": ref_dur, "ref_thr": ref_thr,
            "ref_waves": ref_waves,
            "tile_m": tile_m, "tile_n": tile_n, "split_k": split_k,
            "blocks_per_wave": blocks_per_wave,
            "family_rowblock": family_rowblock,
        }
        return self._tables

    def axis_arrays(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.array(self.grid.axes[name], dtype=np.uint64)
                     for name in AXIS_ORDER)


@dataclass(frozen=True)
class PrecomputeSummary:
    total_points: int
    entries_written: int
    skipped: int
    elapsed_s: float
    mean_us_per_prediction: float
    backend: str

    def to_json_obj(self) -> dict:
        return {
            "total_points": self.total_points,
            "entries_written": self.entries_written,
            "skipped": self.skipped,
            "elapsed_s": self.elapsed_s,
            "mean_us_per_prediction": self.mean_us_per_prediction,
            "backend": self.backend,
        }


def _point_at(grid: GridSpec, flat_index: int) -> Tuple[int, int, int, int]:
    sizes = [len(grid.axes[name]) for name in AXIS_ORDER]
    coords = []
    remaining = flat_index
    for size in reversed(sizes):
        coords.append(remaining % size)
        remaining //= size
    coords.reverse()
    return tuple(grid.axes[name][idx]
                 for name, idx in zip(AXIS_ORDER, coords))


def precompute(grid: GridSpec, dataset: Dataset, wm: Optional[WaveModel],
               out_path, jobs: int = 1,
               skip_unresolved: bool = False) -> PrecomputeSummary:
    """Predict every grid point and write the store.

    The output is deterministic: independent of evaluation order, job count
    and backend. Unresolved points abort the run (naming the first
    offending coordinates) unless ``skip_unresolved``, in which case they
    are left out of the store.
    """
    from . import backend

    wm = wm or WaveModel(sm_count=dataset.device.sm_count)
    prep = PreparedGrid(dataset, grid, wm)
    start = time.perf_counter()
    latencies = backend.predict_grid(prep, jobs=jobs)
    elapsed = time.perf_counter() - start

    nan_mask = np.isnan(latencies)
    skipped = int(np.count_nonzero(nan_mask))
    if skipped and not skip_unresolved:
        first = int(np.argmax(nan_mask))
        batch, m, n, k = _point_at(grid, first)
        raise UnresolvedPoint(
            f"grid point batch={batch} m={m} n={n} k={k} "
            f"({grid.family}, {grid.dtype.value}, {grid.transpose_mode.value}) "
            f"has no usable kernel configuration")

    total = grid.cardinality
    header = {
        "device_id": dataset.device.device_id,
        "dataset_fingerprint": dataset.fingerprint(),
        "grid_fingerprint": grid.fingerprint(),
        "entry_count": total - skipped,
        "grid": grid.to_json_obj(),
        "coord_order": list(AXIS_ORDER),
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(out_path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">H", FORMAT_VERSION))
        fh.write(struct.pack(">I", len(header_bytes)))
        fh.write(header_bytes)
        buffer = bytearray()
        for index, point in enumerate(grid.iter_points()):
            value = latencies[index]
            if np.isnan(value):
                continue
            buffer += _REC_STRUCT.pack(*point, float(value))
            if len(buffer) >= 1 << 20:
                fh.write(buffer)
                buffer.clear()
        fh.write(buffer)

    return PrecomputeSummary(
        total_points=total,
        entries_written=total - skipped,
        skipped=skipped,
        elapsed_s=elapsed,
        mean_us_per_prediction=elapsed / total * 1e6 if total else 0.0,
        backend=backend.active_backend(),
    )


class CacheStore:
    """Read side of the store: memory-mapped binary search over sorted
    fixed-width records."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "rb")
        try:
            magic = self._fh.read(4)
            if magic != MAGIC:
                raise CacheFormatError(f"{path}: bad magic {magic!r}")
            (version,) = struct.unpack(">H", self._fh.read(2))
            if version != FORMAT_VERSION:
                raise CacheFormatError(f"{path}: unsupported format version {version}")
            (header_len,) = struct.unpack(">I", self._fh.read(4))
            self.header = json.loads(self._fh.read(header_len).decode("utf-8"))
            self._records_at = 4 + 2 + 4 + header_len
            self._fh.seek(0, 2)
            size = self._fh.tell() - self._records_at
            if size % RECORD_SIZE:
                raise CacheFormatError(f"{path}: truncated record section")
            self.entry_count = size // RECORD_SIZE
            if self.entry_count != self.header.get("entry_count"):
                raise CacheFormatError(
                    f"{path}: header claims {self.header.get('entry_count')} "
                    f"entries, file has {self.entry_count}")
            if self.entry_count:
                self._mm = mmap.mmap(self._fh.fileno(), 0, access=mmap.ACCESS_READ)
            else:
                self._mm = None
        except Exception:
            self._fh.close()
            raise

    def close(self):
        if self._mm is not None:
            self._mm.close()
            self._mm = None
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self):
        return self.entry_count

    def verify(self, dataset: Optional[Dataset] = None,
               grid: Optional[GridSpec] = None) -> None:
        if dataset is not None and dataset.fingerprint() != self.header.get(
                "dataset_fingerprint"):
            raise StaleCache(
                f"{self.path}: store was built from a different dataset")
        if grid is not None and grid.fingerprint() != self.header.get(
                "grid_fingerprint"):
            raise StaleCache(f"{self.path}: store was built from a different grid")

    def _key_at(self, index: int) -> bytes:
        offset = self._records_at + index * RECORD_SIZE
        return self._mm[offset:offset + _KEY_STRUCT.size]

    def lookup(self, batch: int, m: int, n: int, k: int) -> float:
        """Stored latency for a grid point; raises MissingEntry otherwise."""
        needle = _KEY_STRUCT.pack(batch, m, n, k)
        lo, hi = 0, self.entry_count
        while lo < hi:
            mid = (lo + hi) // 2
            key = self._key_at(mid)
            if key < needle:
                lo = mid + 1
            elif key > needle:
                hi = mid
            else:
                offset = self._records_at + mid * RECORD_SIZE + _KEY_STRUCT.size
                (value,) = struct.unpack(">d", self._mm[offset:offset + 8])
                return value
        raise MissingEntry(
            f"point batch={batch} m={m} n={n} k={k} is not in the store")

    def iter_entries(self) -> Iterator[Tuple[Tuple[int, int, int, int], float]]:
        for index in range(self.entry_count):
            offset = self._records_at + index * RECORD_SIZE
            *point, value = _REC_STRUCT.unpack(self._mm[offset:offset + RECORD_SIZE])
            yield tuple(point), value


def lookup(store: CacheStore, point: Sequence[int]) -> float:
    batch, m, n, k = (int(v) for v in point)
    return store.lookup(batch, m, n, k)
