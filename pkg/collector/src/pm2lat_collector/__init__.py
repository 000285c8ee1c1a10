"""Microbenchmark collector for the pm2lat latency predictor.

Runs pinned-configuration GEMM sweeps, utility-kernel metric capture and
configuration-map recording on NVIDIA GPUs, and writes dataset files in the
pm2lat ingest JSON schema. The collector contains no prediction logic and
does not import the predictor; the JSON schema is the only contract
between the two.

Every operation has a --dry-run mode that exercises the full pipeline
except device calls and emits a schema-valid skeleton, so the plumbing is
CI-testable without a GPU.
"""

__version__ = "0.1.0"
