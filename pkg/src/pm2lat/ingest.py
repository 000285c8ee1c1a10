"""Dataset and model-graph I/O: the only module that touches data files.

Datasets are UTF-8 JSON (schema version "1") bundling a device profile,
per-kernel throughput curves, a recorded configuration map, memory-bound
training records, and optionally fitted memory-bound models. One file may
bundle everything or fragments may be merged with :func:`merge_datasets`.

Every error carries a locator (JSON-pointer-ish path or record index) so a
bad record in a large bundle can be found. Unknown fields are ignored with
a warning for forward compatibility.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from typing import Dict, List, Tuple

from .core import (
    CurveSample,
    DeviceProfile,
    DType,
    KernelKey,
    LayerSpec,
    Library,
    MatMulShape,
    MemBoundFeatures,
    ModelGraph,
    ThroughputCurve,
    TransposeMode,
    check_family,
)
from .errors import ConflictError, DeviceMismatch, ParseError, SchemaError, ValidationError

SCHEMA_VERSION = "1"

_DEVICE_FIELDS = {
    "device_id": str,
    "max_freq_ghz": (int, float),
    "fp32_tflops": (int, float),
    "dram_bw_gbs": (int, float),
    "mem_gb": (int, float),
    "l2_mb": (int, float),
    "sm_count": int,
    "cuda_cores": int,
    "power_w": (int, float),
    "collection_freq_mhz": (int, float),
}

_KEY_FIELDS = {
    "family": str,
    "dtype": str,
    "library": str,
    "algorithm_id": int,
    "tile_m": int,
    "tile_n": int,
    "split_k": int,
    "swizzle": int,
    "reduction_scheme": int,
    "stages": int,
    "transpose_mode": str,
}


@dataclass(frozen=True)
class ConfigRecord:
    """Replay of one recorded answer of the vendor configuration heuristic:
    for this operation and shape, this kernel was chosen."""

    family: str
    dtype: DType
    transpose_mode: TransposeMode
    shape: MatMulShape
    chosen_key: KernelKey

    def __post_init__(self):
        check_family(self.family)
        key = self.chosen_key
        if (key.family, key.dtype, key.transpose_mode) != (
                self.family, self.dtype, self.transpose_mode):
            raise ValidationError(
                f"config record for ({self.family}, {self.dtype.value}, "
                f"{self.transpose_mode.value}) chose an inconsistent key "
                f"({key.family}, {key.dtype.value}, {key.transpose_mode.value})")


@dataclass(frozen=True)
class MemBoundRecord:
    """One profiled utility-kernel case: features plus measured latency."""

    kernel_name: str
    dtype: DType
    features: MemBoundFeatures
    latency_us: float

    def __post_init__(self):
        if not self.kernel_name:
            raise ValidationError("membound record kernel_name must be non-empty")
        if not self.latency_us > 0:
            raise ValidationError(
                f"membound record latency_us must be > 0, got {self.latency_us!r}")


@dataclass(frozen=True)
class Dataset:
    """Validated in-memory form of one device's collected data."""

    device: DeviceProfile
    curves: Dict[KernelKey, ThroughputCurve]
    config_map: Tuple[ConfigRecord, ...]
    membound_records: Tuple[MemBoundRecord, ...]
    membound_models: Tuple["MemBoundModel", ...] = ()
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "config_map", tuple(self.config_map))
        object.__setattr__(self, "membound_records", tuple(self.membound_records))
        object.__setattr__(self, "membound_models", tuple(self.membound_models))
        for key, curve in self.curves.items():
            if curve.kernel != key:
                raise ValidationError("curve map key does not match curve.kernel")
            if curve.device_id != self.device.device_id:
                raise ValidationError(
                    f"curve for {key.family} was collected on "
                    f"{curve.device_id!r}, dataset device is "
                    f"{self.device.device_id!r}")

    def fingerprint(self) -> str:
        """Stable content hash used to detect stale caches."""
        payload = json.dumps(dataset_to_json_obj(self), sort_keys=True,
                             separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# low-level helpers


def _expect(obj, path: str, name: str, types):
    if not isinstance(obj, dict):
        raise SchemaError(f"expected an object, got {type(obj).__name__}", path)
    if name not in obj:
        raise SchemaError(f"missing required field {name!r}", path)
    value = obj[name]
    if types is int:
        # bool is an int subclass; reject it, and accept exact floats.
        if isinstance(value, bool) or not (
                isinstance(value, int) or (isinstance(value, float) and value.is_integer())):
            raise SchemaError(f"field {name!r} must be an integer, got {value!r}", path)
        return int(value)
    if not isinstance(value, types) or isinstance(value, bool):
        raise SchemaError(
            f"field {name!r} must be {getattr(types, '__name__', types)}, got {value!r}",
            path)
    return value


def _warn_unknown(obj: dict, known, path: str) -> None:
    extra = sorted(set(obj) - set(known))
    if extra:
        warnings.warn(f"{path}: ignoring unknown fields {extra}", stacklevel=3)


def _located(exc: ValidationError, path: str) -> ValidationError:
    return ValidationError(f"{path}: {exc}")


# --------------------------------------------------------------------------
# per-type encode/decode


def device_to_json_obj(device: DeviceProfile) -> dict:
    obj = {name: getattr(device, name) for name in _DEVICE_FIELDS}
    if device.bf16_tflops is not None:
        obj["bf16_tflops"] = device.bf16_tflops
    return obj


def device_from_json_obj(obj, path: str = "/device") -> DeviceProfile:
    kwargs = {name: _expect(obj, path, name, types)
              for name, types in _DEVICE_FIELDS.items()}
    if "bf16_tflops" in obj and obj["bf16_tflops"] is not None:
        kwargs["bf16_tflops"] = _expect(obj, path, "bf16_tflops", (int, float))
    _warn_unknown(obj, list(_DEVICE_FIELDS) + ["bf16_tflops"], path)
    try:
        return DeviceProfile(**kwargs)
    except ValidationError as exc:
        raise _located(exc, path) from None


def kernel_key_to_json_obj(key: KernelKey) -> dict:
    return {
        "family": key.family,
        "dtype": key.dtype.value,
        "library": key.library.value,
        "algorithm_id": key.algorithm_id,
        "tile_m": key.tile_m,
        "tile_n": key.tile_n,
        "split_k": key.split_k,
        "swizzle": key.swizzle,
        "reduction_scheme": key.reduction_scheme,
        "stages": key.stages,
        "transpose_mode": key.transpose_mode.value,
    }


def kernel_key_from_json_obj(obj, path: str = "/kernel") -> KernelKey:
    raw = {name: _expect(obj, path, name, types) for name, types in _KEY_FIELDS.items()}
    _warn_unknown(obj, _KEY_FIELDS, path)
    try:
        return KernelKey(
            family=check_family(raw["family"]),
            dtype=DType.parse(raw["dtype"]),
            library=Library.parse(raw["library"]),
            algorithm_id=raw["algorithm_id"],
            tile_m=raw["tile_m"],
            tile_n=raw["tile_n"],
            split_k=raw["split_k"],
            swizzle=raw["swizzle"],
            reduction_scheme=raw["reduction_scheme"],
            stages=raw["stages"],
            transpose_mode=TransposeMode.parse(raw["transpose_mode"]),
        )
    except ValidationError as exc:
        raise _located(exc, path) from None


def shape_to_json_obj(shape: MatMulShape) -> dict:
    return {"batch": shape.batch, "m": shape.m, "n": shape.n, "k": shape.k}


def shape_from_json_obj(obj, path: str = "/shape") -> MatMulShape:
    kwargs = {name: _expect(obj, path, name, int) for name in ("batch", "m", "n", "k")}
    _warn_unknown(obj, ("batch", "m", "n", "k"), path)
    try:
        return MatMulShape(**kwargs)
    except ValidationError as exc:
        raise _located(exc, path) from None


def curve_to_json_obj(curve: ThroughputCurve) -> dict:
    obj = {
        "kernel": kernel_key_to_json_obj(curve.kernel),
        "varying_dim_name": curve.varying_dim_name,
        "device_id": curve.device_id,
        "samples": [
            {"dim_value": s.dim_value, "throughput_gflops": s.throughput_gflops}
            for s in curve.samples
        ],
        "ref_dim_value": curve.ref_dim_value,
        "ref_duration_us": curve.ref_duration_us,
        "ref_waves": curve.ref_waves,
    }
    if curve.blocks_per_sm is not None:
        obj["blocks_per_sm"] = curve.blocks_per_sm
    return obj


def curve_from_json_obj(obj, path: str = "/curves/0") -> ThroughputCurve:
    kernel = kernel_key_from_json_obj(_expect(obj, path, "kernel", dict), path + "/kernel")
    raw_samples = _expect(obj, path, "samples", list)
    samples = []
    for i, sample_obj in enumerate(raw_samples):
        sample_path = f"{path}/samples/{i}"
        dim = _expect(sample_obj, sample_path, "dim_value", int)
        thr = _expect(sample_obj, sample_path, "throughput_gflops", (int, float))
        _warn_unknown(sample_obj, ("dim_value", "throughput_gflops"), sample_path)
        try:
            samples.append(CurveSample(dim_value=dim, throughput_gflops=float(thr)))
        except ValidationError as exc:
            raise _located(exc, sample_path) from None
    kwargs = dict(
        kernel=kernel,
        varying_dim_name=_expect(obj, path, "varying_dim_name", str),
        device_id=_expect(obj, path, "device_id", str),
        samples=tuple(samples),
        ref_dim_value=_expect(obj, path, "ref_dim_value", int),
        ref_duration_us=float(_expect(obj, path, "ref_duration_us", (int, float))),
        ref_waves=_expect(obj, path, "ref_waves", int),
    )
    if "blocks_per_sm" in obj:
        kwargs["blocks_per_sm"] = _expect(obj, path, "blocks_per_sm", int)
    _warn_unknown(obj, ("kernel", "varying_dim_name", "device_id", "samples",
                        "ref_dim_value", "ref_duration_us", "ref_waves",
                        "blocks_per_sm"), path)
    try:
        return ThroughputCurve(**kwargs)
    except ValidationError as exc:
        raise _located(exc, path) from None


def config_record_to_json_obj(record: ConfigRecord) -> dict:
    return {
        "family": record.family,
        "dtype": record.dtype.value,
        "transpose_mode": record.transpose_mode.value,
        "shape": shape_to_json_obj(record.shape),
        "chosen_key": kernel_key_to_json_obj(record.chosen_key),
    }


def config_record_from_json_obj(obj, path: str) -> ConfigRecord:
    _warn_unknown(obj, ("family", "dtype", "transpose_mode", "shape", "chosen_key"), path)
    try:
        return ConfigRecord(
            family=check_family(_expect(obj, path, "family", str)),
            dtype=DType.parse(_expect(obj, path, "dtype", str)),
            transpose_mode=TransposeMode.parse(_expect(obj, path, "transpose_mode", str)),
            shape=shape_from_json_obj(_expect(obj, path, "shape", dict), path + "/shape"),
            chosen_key=kernel_key_from_json_obj(
                _expect(obj, path, "chosen_key", dict), path + "/chosen_key"),
        )
    except ValidationError as exc:
        if str(exc).startswith(path):
            raise
        raise _located(exc, path) from None


def features_to_json_obj(features: MemBoundFeatures) -> dict:
    return {name: getattr(features, name) for name in MemBoundFeatures.FIELD_ORDER}


def features_from_json_obj(obj, path: str) -> MemBoundFeatures:
    kwargs = {name: float(_expect(obj, path, name, (int, float)))
              for name in MemBoundFeatures.FIELD_ORDER}
    _warn_unknown(obj, MemBoundFeatures.FIELD_ORDER, path)
    try:
        return MemBoundFeatures(**kwargs)
    except ValidationError as exc:
        raise _located(exc, path) from None


def membound_record_to_json_obj(record: MemBoundRecord) -> dict:
    return {
        "kernel_name": record.kernel_name,
        "dtype": record.dtype.value,
        "features": features_to_json_obj(record.features),
        "latency_us": record.latency_us,
    }


def membound_record_from_json_obj(obj, path: str) -> MemBoundRecord:
    _warn_unknown(obj, ("kernel_name", "dtype", "features", "latency_us"), path)
    try:
        return MemBoundRecord(
            kernel_name=_expect(obj, path, "kernel_name", str),
            dtype=DType.parse(_expect(obj, path, "dtype", str)),
            features=features_from_json_obj(
                _expect(obj, path, "features", dict), path + "/features"),
            latency_us=float(_expect(obj, path, "latency_us", (int, float))),
        )
    except ValidationError as exc:
        if str(exc).startswith(path):
            raise
        raise _located(exc, path) from None


# --------------------------------------------------------------------------
# whole-dataset encode/decode


def dataset_to_json_obj(dataset: Dataset) -> dict:
    from .membound import membound_model_to_json_obj  # local import, avoids cycle

    # Every section is emitted in a canonical order so that serialized form,
    # fingerprints and merge results are independent of in-memory ordering.
    def canonical(objs):
        return sorted(objs, key=lambda o: json.dumps(o, sort_keys=True))

    obj = {
        "schema_version": dataset.schema_version,
        "device": device_to_json_obj(dataset.device),
        "curves": canonical([curve_to_json_obj(c) for c in dataset.curves.values()]),
        "config_map": canonical([config_record_to_json_obj(r)
                                 for r in dataset.config_map]),
        "membound_records": canonical([membound_record_to_json_obj(r)
                                       for r in dataset.membound_records]),
    }
    if dataset.membound_models:
        obj["membound_models"] = canonical([membound_model_to_json_obj(m)
                                            for m in dataset.membound_models])
    return obj


def dataset_from_json_obj(obj, path: str = "") -> Dataset:
    from .membound import membound_model_from_json_obj

    version = _expect(obj, path or "/", "schema_version", str)
    if version.split(".")[0] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}", path or "/")
    device = device_from_json_obj(_expect(obj, path or "/", "device", dict),
                                  path + "/device")
    curves: Dict[KernelKey, ThroughputCurve] = {}
    for i, curve_obj in enumerate(_expect(obj, path or "/", "curves", list)):
        curve = curve_from_json_obj(curve_obj, f"{path}/curves/{i}")
        if curve.kernel in curves:
            raise ValidationError(
                f"{path}/curves/{i}: duplicate curve for kernel "
                f"{curve.kernel.family} algo={curve.kernel.algorithm_id} "
                f"tile={curve.kernel.tile_m}x{curve.kernel.tile_n}")
        curves[curve.kernel] = curve
    config_map = [
        config_record_from_json_obj(rec_obj, f"{path}/config_map/{i}")
        for i, rec_obj in enumerate(_expect(obj, path or "/", "config_map", list))
    ]
    membound_records = [
        membound_record_from_json_obj(rec_obj, f"{path}/membound_records/{i}")
        for i, rec_obj in enumerate(_expect(obj, path or "/", "membound_records", list))
    ]
    membound_models = []
    if "membound_models" in obj:
        for i, model_obj in enumerate(_expect(obj, path or "/", "membound_models", list)):
            membound_models.append(
                membound_model_from_json_obj(model_obj, f"{path}/membound_models/{i}"))
    _warn_unknown(obj, ("schema_version", "device", "curves", "config_map",
                        "membound_records", "membound_models"), path or "/")
    try:
        return Dataset(
            device=device,
            curves=curves,
            config_map=tuple(config_map),
            membound_records=tuple(membound_records),
            membound_models=tuple(membound_models),
            schema_version=version,
        )
    except ValidationError as exc:
        raise _located(exc, path or "/") from None


def load_dataset(path) -> Dataset:
    """Load and fully validate a dataset bundle from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        return dataset_from_json_obj(obj)
    except SchemaError as exc:
        raise SchemaError(str(exc), path=str(path)) from None
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_json_obj(dataset), fh, indent=2, sort_keys=True)
        fh.write("\n")


def merge_datasets(a: Dataset, b: Dataset) -> Dataset:
    """Union of two collection runs for the same device.

    Identical duplicate curves/records dedupe silently; the same kernel with
    different measurements is a hard conflict.
    """
    if a.device.device_id != b.device.device_id:
        raise DeviceMismatch(
            f"cannot merge datasets for {a.device.device_id!r} and "
            f"{b.device.device_id!r}")
    if a.schema_version != b.schema_version:
        raise DeviceMismatch(
            f"cannot merge schema versions {a.schema_version!r} and "
            f"{b.schema_version!r}")
    curves = dict(a.curves)
    for key, curve in b.curves.items():
        if key in curves and curves[key] != curve:
            raise ConflictError(
                f"conflicting measurements for kernel {key.family} "
                f"algo={key.algorithm_id} tile={key.tile_m}x{key.tile_n} "
                f"split_k={key.split_k} ({key.dtype.value})")
        curves[key] = curve

    def dedupe(items):
        seen, out = set(), []
        for item in items:
            if item not in seen:
                seen.add(item)
                out.append(item)
        return tuple(out)

    config_map = dedupe(list(a.config_map) + list(b.config_map))
    by_query: Dict[tuple, ConfigRecord] = {}
    for record in config_map:
        query = (record.family, record.dtype, record.transpose_mode,
                 record.shape.as_tuple())
        if query in by_query and by_query[query] != record:
            raise ConflictError(
                f"conflicting config recordings for {record.family} "
                f"shape={record.shape.as_tuple()}")
        by_query[query] = record

    return Dataset(
        device=a.device,
        curves=curves,
        config_map=config_map,
        membound_records=dedupe(list(a.membound_records) + list(b.membound_records)),
        membound_models=dedupe(list(a.membound_models) + list(b.membound_models)),
        schema_version=a.schema_version,
    )


# --------------------------------------------------------------------------
# model graphs


def load_model_graph(path) -> ModelGraph:
    """Load an ordered layer list. Kernel resolution happens at predict time,
    so ``resolved_key`` is always left empty here."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    return model_graph_from_json_obj(obj)


def model_graph_from_json_obj(obj) -> ModelGraph:
    name = _expect(obj, "/", "model_name", str)
    batch_size = _expect(obj, "/", "batch_size", int)
    layers: List[LayerSpec] = []
    for i, layer_obj in enumerate(_expect(obj, "/", "layers", list)):
        path = f"/layers/{i}"
        layer_id = _expect(layer_obj, path, "layer_id", str)
        family = _expect(layer_obj, path, "family", str)
        dtype = DType.parse(_expect(layer_obj, path, "dtype", str))
        shape = features = transpose = None
        if "shape" in layer_obj:
            shape = shape_from_json_obj(layer_obj["shape"], path + "/shape")
        if "features" in layer_obj:
            features = features_from_json_obj(layer_obj["features"], path + "/features")
        if "transpose_mode" in layer_obj:
            transpose = TransposeMode.parse(_expect(layer_obj, path, "transpose_mode", str))
        _warn_unknown(layer_obj, ("layer_id", "family", "dtype", "shape",
                                  "features", "transpose_mode"), path)
        if shape is None and features is None:
            raise SchemaError("layer needs a 'shape' or 'features' object", path)
        try:
            layers.append(LayerSpec(layer_id=layer_id, family=family, dtype=dtype,
                                    shape=shape, features=features,
                                    transpose_mode=transpose))
        except ValidationError as exc:
            raise _located(exc, path) from None
    _warn_unknown(obj, ("model_name", "batch_size", "layers"), "/")
    try:
        return ModelGraph(model_name=name, layers=tuple(layers), batch_size=batch_size)
    except ValidationError as exc:
        raise _located(exc, "/") from None


def model_graph_to_json_obj(graph: ModelGraph) -> dict:
    layers = []
    for layer in graph.layers:
        layer_obj = {"layer_id": layer.layer_id, "family": layer.family,
                     "dtype": layer.dtype.value}
        if layer.shape is not None:
            layer_obj["shape"] = shape_to_json_obj(layer.shape)
        if layer.features is not None:
            layer_obj["features"] = features_to_json_obj(layer.features)
        if layer.transpose_mode is not None:
            layer_obj["transpose_mode"] = layer.transpose_mode.value
        layers.append(layer_obj)
    return {"model_name": graph.model_name, "batch_size": graph.batch_size,
            "layers": layers}
