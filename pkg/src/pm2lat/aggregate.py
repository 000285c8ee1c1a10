"""Whole-model latency prediction and error reporting.

Kernels execute sequentially, so a model's latency is the sum of its
layers' predictions. Each layer dispatches by family: GEMM/vector/attention
families go through config resolution and throughput interpolation, utility
families through the fitted memory-bound models. The per-layer list keeps
graph order; the total is the correctly-rounded sum of the per-layer
latencies (math.fsum), which makes it deterministic, independent of layer
order, and exactly equal to the rounded sum of any regrouping of the same
layers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .compute import (
    MATCH_NEAREST,
    ConfigResolver,
    WaveModel,
    predict_generic,
    with_component,
)
from .core import (
    COMPUTE_FAMILIES,
    FAMILY_LINEAR,
    DType,
    LayerSpec,
    ModelGraph,
    Prediction,
    TransposeMode,
    is_utility_family,
    utility_kernel_name,
)
from .errors import (
    EmptyInput,
    InsufficientData,
    PredictionError,
    UnresolvedLayer,
    ZeroMeasured,
)
from .ingest import Dataset
from .membound import (
    DEFAULT_LAUNCH_FLOOR_US,
    MemBoundModel,
    fit,
    predict_membound,
)

PREDICTOR_COMPUTE = "compute"
PREDICTOR_MEMBOUND = "membound"

# Framework convention: linear layers run transposed-weight GEMMs.
DEFAULT_TRANSPOSE = {FAMILY_LINEAR: TransposeMode.TN}


@dataclass(frozen=True)
class LayerPrediction:
    layer_id: str
    prediction: Prediction
    predictor_kind: str


@dataclass(frozen=True)
class ModelPrediction:
    """Per-layer predictions in execution order plus their exact sum.
    ``flags`` lists layers whose prediction needed a fallback (clamped
    interpolation range, nearest-config match, launch-time floor)."""

    model_name: str
    total_latency_us: float
    per_layer: Tuple[LayerPrediction, ...]
    flags: Tuple[Tuple[str, str], ...]

    def to_json_obj(self) -> dict:
        return {
            "model_name": self.model_name,
            "total_latency_us": self.total_latency_us,
            "per_layer": [
                {"layer_id": lp.layer_id, "latency_us": lp.prediction.latency_us,
                 "predictor_kind": lp.predictor_kind,
                 "components": dict(lp.prediction.components)}
                for lp in self.per_layer
            ],
            "flags": [{"layer_id": layer_id, "flag": flag}
                      for layer_id, flag in self.flags],
        }


def default_transpose(family: str) -> TransposeMode:
    return DEFAULT_TRANSPOSE.get(family, TransposeMode.NN)


class ModelPredictor:
    """Bundles a dataset with the lookup structures prediction needs.

    Memory-bound models come from the dataset's fitted-model section when
    present; otherwise they are fitted on demand from the raw records.
    """

    def __init__(self, dataset: Dataset, wm: Optional[WaveModel] = None,
                 membound_floor_us: float = DEFAULT_LAUNCH_FLOOR_US):
        self.dataset = dataset
        self.wm = wm or WaveModel(sm_count=dataset.device.sm_count)
        self.floor_us = membound_floor_us
        self.resolver = ConfigResolver(dataset.config_map)
        self._membound: Dict[Tuple[str, DType], MemBoundModel] = {
            (m.kernel_name, m.dtype): m for m in dataset.membound_models}
        self._membound_fitted_here: set = set()

    def membound_model(self, kernel_name: str, dtype: DType) -> MemBoundModel:
        cached = self._membound.get((kernel_name, dtype))
        if cached is not None:
            return cached
        records = [
            (r.features, r.latency_us)
            for r in self.dataset.membound_records
            if r.kernel_name == kernel_name and r.dtype == dtype
        ]
        if not records:
            raise UnresolvedLayer(
                f"no fitted model or records for utility kernel "
                f"{kernel_name!r} ({dtype.value})")
        try:
            model = fit(records, kernel_name, dtype,
                        train_device_id=self.dataset.device.device_id)
        except InsufficientData as exc:
            raise UnresolvedLayer(str(exc)) from None
        self._membound[(kernel_name, dtype)] = model
        self._membound_fitted_here.add((kernel_name, dtype))
        return model

    def predict_layer(self, layer: LayerSpec) -> Tuple[Prediction, str, List[str]]:
        """Returns (prediction, predictor_kind, fallback flags)."""
        flags: List[str] = []
        if is_utility_family(layer.family):
            if layer.features is None:
                raise UnresolvedLayer(
                    f"utility layer {layer.layer_id!r} carries no features")
            model = self.membound_model(utility_kernel_name(layer.family), layer.dtype)
            pred = predict_membound(model, layer.features, floor_us=self.floor_us)
            if pred.components.get("floored"):
                flags.append("floored")
            return pred, PREDICTOR_MEMBOUND, flags
        if layer.family not in COMPUTE_FAMILIES:
            raise UnresolvedLayer(
                f"layer {layer.layer_id!r}: no predictor for family "
                f"{layer.family!r}")
        if layer.shape is None:
            raise UnresolvedLayer(f"compute layer {layer.layer_id!r} carries no shape")
        transpose = layer.transpose_mode or default_transpose(layer.family)
        resolved = self.resolver.resolve(layer.family, layer.dtype, transpose,
                                         layer.shape)
        curve = self.dataset.curves.get(resolved.key)
        if curve is None:
            raise UnresolvedLayer(
                f"layer {layer.layer_id!r}: resolved kernel has no throughput "
                f"curve (family={layer.family}, algo={resolved.key.algorithm_id})")
        pred = predict_generic(layer.shape, resolved.key, curve, self.wm)
        pred = with_component(pred, "config_match", resolved.match)
        if resolved.match == MATCH_NEAREST:
            flags.append("nearest_config")
        clamp = pred.components.get("clamp")
        if clamp:
            flags.append(str(clamp))
        return pred, PREDICTOR_COMPUTE, flags


def predict_model(graph: ModelGraph, dataset: Dataset,
                  wm: Optional[WaveModel] = None,
                  membound_floor_us: float = DEFAULT_LAUNCH_FLOOR_US) -> ModelPrediction:
    """Predict every layer and sum in execution order. An unresolvable
    layer aborts the whole prediction, naming the layer."""
    predictor = ModelPredictor(dataset, wm, membound_floor_us)
    per_layer: List[LayerPrediction] = []
    flags: List[Tuple[str, str]] = []
    for layer in graph.layers:
        try:
            pred, kind, layer_flags = predictor.predict_layer(layer)
        except UnresolvedLayer:
            raise
        except PredictionError as exc:
            raise type(exc)(f"layer {layer.layer_id!r}: {exc}") from None
        per_layer.append(LayerPrediction(layer_id=layer.layer_id,
                                         prediction=pred, predictor_kind=kind))
        flags.extend((layer.layer_id, flag) for flag in layer_flags)
    return ModelPrediction(
        model_name=graph.model_name,
        total_latency_us=math.fsum(lp.prediction.latency_us for lp in per_layer),
        per_layer=tuple(per_layer),
        flags=tuple(flags),
    )


# --------------------------------------------------------------------------
# error reporting (measured vs predicted)


def relative_error(measured_us: float, predicted_us: float) -> float:
    """Signed relative error (predicted - measured) / measured; positive
    means over-prediction."""
    if measured_us <= 0:
        raise ZeroMeasured(f"measured latency must be > 0, got {measured_us!r}")
    return (predicted_us - measured_us) / measured_us


@dataclass(frozen=True)
class ErrorCase:
    case_id: str
    measured_us: float
    predicted_us: float
    axis_value: float = 0.0


@dataclass(frozen=True)
class BinMax:
    lo: float
    hi: float
    count: int
    max_abs_rel_err: Optional[float]    # None marks an empty bin


HISTOGRAM_BUCKET_WIDTH = 0.05
HISTOGRAM_OVERFLOW = 0.95               # last bucket collects |err| > 95%


@dataclass(frozen=True)
class ErrorReport:
    """Evaluation-style error summary: signed per-case errors, the mean of
    their absolute values, per-bin worst cases over an input-domain axis
    (empty bins stay empty rather than reading as zero error), and a
    5%-bucket histogram with an overflow bucket past 95%."""

    records: Tuple[Tuple[str, float, float, float], ...]   # id, measured, predicted, rel
    mean_abs_rel_err: float
    binned_max: Tuple[BinMax, ...]
    histogram: Tuple[int, ...]
    axis_min: float
    axis_max: float

    def to_json_obj(self) -> dict:
        return {
            "mean_abs_rel_err": self.mean_abs_rel_err,
            "axis_min": self.axis_min,
            "axis_max": self.axis_max,
            "records": [
                {"case_id": cid, "measured_us": m, "predicted_us": p,
                 "signed_rel_err": e}
                for cid, m, p, e in self.records
            ],
            "binned_max": [
                {"lo": b.lo, "hi": b.hi, "count": b.count,
                 "max_abs_rel_err": b.max_abs_rel_err}
                for b in self.binned_max
            ],
            "histogram": {
                "bucket_width": HISTOGRAM_BUCKET_WIDTH,
                "overflow_from": HISTOGRAM_OVERFLOW,
                "counts": list(self.histogram),
            },
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case_id", "measured_us", "predicted_us", "signed_rel_err"])
        for cid, measured, predicted, rel in self.records:
            writer.writerow([cid, repr(measured), repr(predicted), repr(rel)])
        return buf.getvalue()


def build_error_report(cases: Sequence[ErrorCase],
                       axis: Callable[[ErrorCase], float] = lambda c: c.axis_value,
                       bins: int = 100) -> ErrorReport:
    """Bin the input domain into ``bins`` equal-width bins and keep only the
    worst |relative error| per bin, plus the error distribution histogram."""
    if not cases:
        raise EmptyInput("error report needs at least one case")
    rels = [relative_error(c.measured_us, c.predicted_us) for c in cases]
    axes = [float(axis(c)) for c in cases]
    lo, hi = min(axes), max(axes)
    width = (hi - lo) / bins

    bin_counts = [0] * bins
    bin_max: List[Optional[float]] = [None] * bins
    for value, rel in zip(axes, rels):
        if width == 0.0:
            idx = 0
        else:
            idx = min(int((value - lo) / width), bins - 1)
        bin_counts[idx] += 1
        err = abs(rel)
        if bin_max[idx] is None or err > bin_max[idx]:
            bin_max[idx] = err

    binned = tuple(
        BinMax(lo=lo + i * width, hi=(hi if i == bins - 1 else lo + (i + 1) * width),
               count=bin_counts[i], max_abs_rel_err=bin_max[i])
        for i in range(bins)
    )

    n_buckets = int(round(HISTOGRAM_OVERFLOW / HISTOGRAM_BUCKET_WIDTH)) + 1
    hist = [0] * n_buckets
    for rel in rels:
        err = abs(rel)
        if err > HISTOGRAM_OVERFLOW:
            hist[-1] += 1
        else:
            hist[min(int(err / HISTOGRAM_BUCKET_WIDTH), n_buckets - 2)] += 1

    mean_abs = sum(abs(r) for r in rels) / len(rels)
    return ErrorReport(
        records=tuple((c.case_id, c.measured_us, c.predicted_us, rel)
                      for c, rel in zip(cases, rels)),
        mean_abs_rel_err=mean_abs,
        binned_max=binned,
        histogram=tuple(hist),
        axis_min=lo,
        axis_max=hi,
    )
