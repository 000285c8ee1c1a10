"""Kernel-aware latency prediction for DNN workloads on SIMT GPUs.

Predicts per-kernel and whole-model execution latency from collected
throughput datasets: compute-bound kernels via throughput interpolation
over a tile/wave schedule, memory-bound utility kernels via linear
regression on profiled proxy metrics. Includes grid precomputation with a
binary lookup store for architecture-search preprocessing and a two-device
pipeline partitioner.
"""

__version__ = "0.1.0"

from .core import (
    DeviceProfile,
    DType,
    KernelKey,
    LayerSpec,
    Library,
    MatMulShape,
    MemBoundFeatures,
    ModelGraph,
    Prediction,
    ThroughputCurve,
    TransposeMode,
    flop_count,
)
from .compute import (
    ConfigResolver,
    WaveModel,
    interpolate_throughput,
    predict_compute,
    predict_generic,
    resolve_config,
    wave_count,
)
from .ingest import (
    ConfigRecord,
    Dataset,
    MemBoundRecord,
    load_dataset,
    load_model_graph,
    merge_datasets,
    save_dataset,
)
from .membound import (
    MemBoundModel,
    ScalingPolicy,
    derive_policy,
    fit,
    predict_membound,
    scale_features,
)
from .curvefit import RationalFit, fit_rational, grid_error_report
from .aggregate import (
    ErrorCase,
    ErrorReport,
    ModelPrediction,
    build_error_report,
    predict_model,
    relative_error,
)
from .nascache import CacheStore, GridSpec, PrecomputeSummary, lookup, precompute
from .partition import PartitionPlan, partition_two_device, throughput_estimate

__all__ = [name for name in dir() if not name.startswith("_")]
