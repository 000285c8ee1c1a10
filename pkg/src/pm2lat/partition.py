"""Two-device pipeline partitioning.

A sequential model split across two devices has a single cut point; with
pipelining the steady-state throughput is bounded by the slower stage, so
the optimizer exhaustively scans every cut and keeps the one minimizing the
bottleneck (the maximum per-stage latency). Inter-device transfer cost is
off by default but a per-cut transfer term can be supplied; it is charged
to the downstream stage.

Stage sums are evaluated left-to-right per cut so an exhaustive external
check reproduces them bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .aggregate import ModelPrediction, predict_model
from .compute import WaveModel
from .core import ModelGraph
from .errors import UnresolvedLayer, ValidationError
from .ingest import Dataset


@dataclass(frozen=True)
class PartitionPlan:
    """Chosen cut: layers [0, cut) run on device A (the input side),
    layers [cut, L) on device B."""

    cut_after_layer_index: int
    stage_a_us: float
    stage_b_us: float
    bottleneck_us: float
    device_a_id: str
    device_b_id: str
    prediction_a: ModelPrediction
    prediction_b: ModelPrediction
    transfer_us: float = 0.0

    def to_json_obj(self) -> dict:
        return {
            "cut_after_layer_index": self.cut_after_layer_index,
            "stage_a_us": self.stage_a_us,
            "stage_b_us": self.stage_b_us,
            "bottleneck_us": self.bottleneck_us,
            "transfer_us": self.transfer_us,
            "device_a": self.device_a_id,
            "device_b": self.device_b_id,
        }


def _ltr_sum(values) -> float:
    total = 0.0
    for value in values:
        total += value
    return total


def partition_two_device(graph: ModelGraph, ds_a: Dataset, ds_b: Dataset,
                         wm_a: Optional[WaveModel] = None,
                         wm_b: Optional[WaveModel] = None,
                         transfer_us: Optional[Callable[[int], float]] = None,
                         ) -> PartitionPlan:
    """Exhaustively choose the cut minimizing max(stage A, stage B).

    Every layer must be predictable on both devices. Ties go to the smaller
    cut index. ``transfer_us(cut)``, when given, is added to stage B.
    """
    try:
        pred_a = predict_model(graph, ds_a, wm_a)
    except UnresolvedLayer as exc:
        raise UnresolvedLayer(f"device {ds_a.device.device_id!r}: {exc}") from None
    try:
        pred_b = predict_model(graph, ds_b, wm_b)
    except UnresolvedLayer as exc:
        raise UnresolvedLayer(f"device {ds_b.device.device_id!r}: {exc}") from None

    lat_a = [lp.prediction.latency_us for lp in pred_a.per_layer]
    lat_b = [lp.prediction.latency_us for lp in pred_b.per_layer]
    n_layers = len(lat_a)

    best = None
    for cut in range(n_layers + 1):
        stage_a = _ltr_sum(lat_a[:cut])
        stage_b = _ltr_sum(lat_b[cut:])
        extra = transfer_us(cut) if transfer_us is not None else 0.0
        stage_b += extra
        bottleneck = max(stage_a, stage_b)
        if best is None or bottleneck < best[0]:
            best = (bottleneck, cut, stage_a, stage_b, extra)

    bottleneck, cut, stage_a, stage_b, extra = best
    return PartitionPlan(
        cut_after_layer_index=cut,
        stage_a_us=stage_a,
        stage_b_us=stage_b,
        bottleneck_us=bottleneck,
        device_a_id=ds_a.device.device_id,
        device_b_id=ds_b.device.device_id,
        prediction_a=pred_a,
        prediction_b=pred_b,
        transfer_us=extra,
    )


def throughput_estimate(plan: PartitionPlan, num_requests: int) -> float:
    """Steady-state two-stage pipeline completion time for a request batch:
    fill the pipe once, then one bottleneck period per remaining request."""
    if num_requests < 1:
        raise ValidationError(f"num_requests must be >= 1, got {num_requests}")
    return plan.stage_a_us + plan.stage_b_us + (num_requests - 1) * plan.bottleneck_us


def link_transfer(bytes_at_cut: Callable[[int], float],
                  link_gbs: float) -> Callable[[int], float]:
    """Build a per-cut transfer term from activation bytes and link
    bandwidth (GB/s); returns microseconds."""
    if link_gbs <= 0:
        raise ValidationError(f"link bandwidth must be > 0, got {link_gbs}")
    return lambda cut: bytes_at_cut(cut) / (link_gbs * 1000.0)
