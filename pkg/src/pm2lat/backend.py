"""Batch-prediction backend selection.

The grid precompute loop is the only hot path in the package. At import
time this module picks the compiled kernel (``pm2lat._kernels``, built from
Cython) when it is importable, and otherwise a pure-Python loop over the
scalar predictor. Both produce bit-identical latencies — the compiled
kernel mirrors the scalar arithmetic operation for operation — so the
choice only affects speed. Set ``PM2LAT_FORCE_PYTHON=1`` to pin the
fallback (useful for benchmarking the two against each other).
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING

import numpy as np

from .compute import _predict
from .core import MatMulShape
from .errors import NoConfigAvailable

if TYPE_CHECKING:
    from .nascache import PreparedGrid

try:
    if os.environ.get("PM2LAT_FORCE_PYTHON"):
        _kernels = None
    else:
        from . import _kernels
except ImportError:
    _kernels = None


def active_backend() -> str:
    return "python" if _kernels is None else "cython"


def compiled_available() -> bool:
    try:
        from . import _kernels as mod  # noqa: F401
        return True
    except ImportError:
        return False


def predict_grid(prep: "PreparedGrid", jobs: int = 1,
                 force_python: bool = False) -> np.ndarray:
    """Latency (µs) for every grid point in canonical (batch, m, n, k)
    nested ascending order; NaN marks unresolved points."""
    if _kernels is not None and not force_python and prep.fast_path_ok:
        return _predict_grid_compiled(prep, jobs)
    return _predict_grid_python(prep)


def _predict_grid_compiled(prep: "PreparedGrid", jobs: int) -> np.ndarray:
    tables = prep.tables()
    batch_vals, m_vals, n_vals, k_vals = prep.axis_arrays()
    out = np.empty(prep.grid.cardinality, dtype=np.float64)
    inner = len(m_vals) * len(n_vals) * len(k_vals)

    def run(lo: int, hi: int) -> None:
        _kernels.predict_grid_slice(
            batch_vals, m_vals, n_vals, k_vals, lo, hi,
            tables["exact_keys"], tables["exact_curve"],
            tables["log_m"], tables["log_n"], tables["log_k"],
            tables["cand_curve"],
            tables["sample_offsets"], tables["sample_dims"], tables["sample_thrs"],
            tables["ref_dim"], tables["ref_dur"], tables["ref_thr"],
            tables["ref_waves"],
            tables["tile_m"], tables["tile_n"], tables["split_k"],
            tables["blocks_per_wave"], tables["family_rowblock"],
            out[lo * inner:hi * inner],
        )

    jobs = max(1, min(jobs, len(batch_vals)))
    if jobs == 1:
        run(0, len(batch_vals))
    else:
        bounds = np.linspace(0, len(batch_vals), jobs + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run, int(lo), int(hi))
                       for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            for future in futures:
                future.result()
    return out


def _predict_grid_python(prep: "PreparedGrid") -> np.ndarray:
    grid = prep.grid
    out = np.empty(grid.cardinality, dtype=np.float64)
    curves = prep.dataset.curves
    resolver = prep.resolver
    family, dtype, transpose = grid.family, grid.dtype, grid.transpose_mode
    index = 0
    for batch, m, n, k in itertools.product(
            *(grid.axes[name] for name in ("batch", "m", "n", "k"))):
        shape = MatMulShape(batch=batch, m=m, n=n, k=k)
        try:
            key = resolver.resolve(family, dtype, transpose, shape).key
        except NoConfigAvailable:
            out[index] = np.nan
            index += 1
            continue
        curve = curves.get(key)
        if curve is None:
            out[index] = np.nan
        else:
            out[index] = _predict(shape, key, curve, prep.wm).latency_us
        index += 1
    return out
