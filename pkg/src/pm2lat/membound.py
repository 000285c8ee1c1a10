"""Latency prediction for memory-bound utility kernels (GeLU, ReLU,
Softmax, Add, Mul, Dropout, Pooling, ...).

These kernels are governed by memory bandwidth, and cache bandwidths are
not observable, so latency is modelled from proxy metrics a profiler can
measure: FLOPs, integer ops, bytes loaded/stored and total bytes accessed.
One ordinary-least-squares model is fitted per (kernel name, dtype) —
same-purpose kernels with different implementations behave differently, so
pooling them into one model is deliberately avoided.

Cross-device transfer scales the feature vector instead of refitting:
byte-typed features by the DRAM bandwidth ratio, instruction-typed features
by the (cores x frequency) ratio. The law is isolated in
:class:`ScalingPolicy` so it can be swapped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .core import DeviceProfile, DType, KernelKey, MemBoundFeatures, Prediction
from .errors import (
    DegenerateDataWarning,
    InsufficientData,
    SchemaError,
    ValidationError,
)

N_FEATURES = len(MemBoundFeatures.FIELD_ORDER)
_BYTE_FIELDS = ("bytes_loaded", "bytes_stored", "total_bytes_accessed")
_INSTR_FIELDS = ("flops", "int_ops")

DEFAULT_LAUNCH_FLOOR_US = 2.0


@dataclass(frozen=True)
class MemBoundModel:
    """Fitted linear map feature-vector -> latency for one utility kernel."""

    kernel_name: str
    dtype: DType
    weights: Tuple[float, ...]          # aligned to MemBoundFeatures.FIELD_ORDER
    intercept: float
    train_device_id: str
    max_rel_err: float
    mean_rel_err: float

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != N_FEATURES:
            raise ValidationError(
                f"model needs {N_FEATURES} weights, got {len(self.weights)}")


@dataclass(frozen=True)
class ScalingPolicy:
    """Feature rescaling between a reference device and a target device."""

    byte_scale: float
    instr_scale: float
    ref_device_id: str = ""
    target_device_id: str = ""

    def __post_init__(self):
        if not (self.byte_scale > 0 and self.instr_scale > 0):
            raise ValidationError(
                f"scales must be > 0, got byte={self.byte_scale} "
                f"instr={self.instr_scale}")


def fit(records: Sequence[Tuple[MemBoundFeatures, float]], kernel_name: str,
        dtype: DType, train_device_id: str = "") -> MemBoundModel:
    """Ordinary least squares over (features, latency_us) records.

    Rank-deficient feature matrices (e.g. an all-zero column) get the
    minimum-norm solution. Needs at least one record more than the number
    of coefficients.
    """
    if len(records) < N_FEATURES + 1:
        raise InsufficientData(
            f"{kernel_name}/{dtype.value}: need >= {N_FEATURES + 1} records "
            f"to fit {N_FEATURES} weights + intercept, got {len(records)}")
    latencies = np.array([lat for _, lat in records], dtype=np.float64)
    if np.any(latencies <= 0):
        raise ValidationError(f"{kernel_name}: latencies must be positive")
    X = np.ones((len(records), N_FEATURES + 1), dtype=np.float64)
    for i, (features, _) in enumerate(records):
        X[i, :N_FEATURES] = features.as_vector()
    if len(records) > 1 and np.ptp(latencies) == 0.0 and np.ptp(X[:, :N_FEATURES]) > 0:
        warnings.warn(
            f"{kernel_name}/{dtype.value}: all latencies identical while "
            f"features vary; the fit will be a constant",
            DegenerateDataWarning, stacklevel=2)
    # Column equilibration: raw profiler counts span many decades against the
    # intercept column, which would otherwise cost ~8 digits of accuracy.
    col_scale = np.max(np.abs(X), axis=0)
    col_scale[col_scale == 0.0] = 1.0
    coef, _, _, _ = np.linalg.lstsq(X / col_scale, latencies, rcond=None)
    coef /= col_scale
    fitted = X @ coef
    rel = np.abs(fitted - latencies) / latencies
    return MemBoundModel(
        kernel_name=kernel_name,
        dtype=dtype,
        weights=tuple(coef[:N_FEATURES]),
        intercept=float(coef[N_FEATURES]),
        train_device_id=train_device_id,
        max_rel_err=float(np.max(rel)),
        mean_rel_err=float(np.mean(rel)),
    )


def predict_membound(model: MemBoundModel, features: MemBoundFeatures,
                     floor_us: float = DEFAULT_LAUNCH_FLOOR_US) -> Prediction:
    """Apply the fitted model, floored at the kernel launch time so
    extrapolation can never go nonpositive."""
    raw = float(np.dot(model.weights, features.as_vector())) + model.intercept
    floored = raw < floor_us
    return Prediction(
        latency_us=floor_us if floored else raw,
        kernel=KernelKey.for_utility(model.kernel_name, model.dtype),
        components={"raw_us": raw, "floor_us": floor_us, "floored": floored},
    )


def scale_features(features: MemBoundFeatures, policy: ScalingPolicy) -> MemBoundFeatures:
    """Rescale profiled metrics from the policy's reference device to its
    target device: byte fields by byte_scale, instruction fields by
    instr_scale."""
    values = {}
    for name in _BYTE_FIELDS:
        values[name] = getattr(features, name) * policy.byte_scale
    for name in _INSTR_FIELDS:
        values[name] = getattr(features, name) * policy.instr_scale
    return MemBoundFeatures(**values)


def derive_policy(ref: DeviceProfile, target: DeviceProfile) -> ScalingPolicy:
    """Scaling between two devices: bandwidth ratio for bytes, cores x
    frequency ratio for instruction throughput."""
    return ScalingPolicy(
        byte_scale=ref.dram_bw_gbs / target.dram_bw_gbs,
        instr_scale=(ref.cuda_cores * ref.max_freq_ghz)
        / (target.cuda_cores * target.max_freq_ghz),
        ref_device_id=ref.device_id,
        target_device_id=target.device_id,
    )


# --------------------------------------------------------------------------
# serialization (datasets may bundle fitted models)


def membound_model_to_json_obj(model: MemBoundModel) -> dict:
    return {
        "kernel_name": model.kernel_name,
        "dtype": model.dtype.value,
        "weights": list(model.weights),
        "intercept": model.intercept,
        "train_device_id": model.train_device_id,
        "residual_stats": {"max_rel_err": model.max_rel_err,
                           "mean_rel_err": model.mean_rel_err},
    }


def membound_model_from_json_obj(obj, path: str = "/membound_models/0") -> MemBoundModel:
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", path)
    try:
        weights = obj["weights"]
        stats = obj.get("residual_stats", {})
        return MemBoundModel(
            kernel_name=obj["kernel_name"],
            dtype=DType.parse(obj["dtype"]),
            weights=tuple(float(w) for w in weights),
            intercept=float(obj["intercept"]),
            train_device_id=str(obj.get("train_device_id", "")),
            max_rel_err=float(stats.get("max_rel_err", 0.0)),
            mean_rel_err=float(stats.get("mean_rel_err", 0.0)),
        )
    except KeyError as exc:
        raise SchemaError(f"missing required field {exc.args[0]!r}", path) from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), path) from None
