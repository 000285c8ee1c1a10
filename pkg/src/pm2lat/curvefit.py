"""Diagnostics for throughput curves.

Measured kernel throughput versus the varying dimension follows a rational
trend y = (a*x + b) / (c*x + d). The prediction path deliberately uses
piecewise-linear interpolation over a powers-of-two grid instead of this
fit; the fit lives here as a diagnostic and as the planted ground truth for
synthetic fixtures, and :func:`grid_error_report` quantifies how much the
interpolation loses against a known curve so a grid resolution can be
audited per dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .compute import interpolate_throughput
from .core import ThroughputCurve
from .errors import PoleInRange, SingularSystem, ValidationError

_MAX_REFINE_STEPS = 50
_COEF_BLOWUP = 1e12


@dataclass(frozen=True)
class RationalFit:
    """Coefficients of y = (a*x + b)/(c*x + d), normalized by pinning d=1
    (or c=1 when the d=1 gauge degenerates)."""

    a: float
    b: float
    c: float
    d: float
    normalization: str          # "d" or "c"
    rms_rel_err: float

    def __call__(self, x) -> float:
        return (self.a * x + self.b) / (self.c * x + self.d)


def _check_pole(c: float, d: float, x_lo: float, x_hi: float) -> None:
    # Denominator is linear: positivity at both ends covers the interval.
    if c * x_lo + d <= 0 or c * x_hi + d <= 0:
        raise PoleInRange(
            f"denominator {c:.6g}*x + {d:.6g} is not positive over "
            f"[{x_lo:.6g}, {x_hi:.6g}]")


def _linearized(x: np.ndarray, y: np.ndarray, pin: str) -> np.ndarray:
    """Least-squares init on y*(c*x + d) = a*x + b with one coefficient pinned."""
    if pin == "d":
        design = np.column_stack([x, np.ones_like(x), -x * y])
        target = y
    else:
        design = np.column_stack([x, np.ones_like(x), -y])
        target = x * y
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise SingularSystem("linearized rational fit produced non-finite coefficients")
    return coef


def _refine(x: np.ndarray, y: np.ndarray, params: np.ndarray, pin: str) -> np.ndarray:
    """Gauss-Newton on the true residuals, with step halving; the linearized
    init over-weights high-y samples, which this corrects."""

    def unpack(p):
        if pin == "d":
            return p[0], p[1], p[2], 1.0
        return p[0], p[1], 1.0, p[2]

    def residuals(p):
        a, b, c, d = unpack(p)
        return (a * x + b) / (c * x + d) - y

    best = params.copy()
    best_sse = float(np.sum(residuals(best) ** 2))
    current = best.copy()
    for _ in range(_MAX_REFINE_STEPS):
        a, b, c, d = unpack(current)
        denom = c * x + d
        if np.any(denom == 0) or not np.all(np.isfinite(denom)):
            break
        r = (a * x + b) / denom - y
        if pin == "d":
            jac = np.column_stack([x / denom, 1.0 / denom,
                                   -x * (a * x + b) / denom ** 2])
        else:
            jac = np.column_stack([x / denom, 1.0 / denom,
                                   -(a * x + b) / denom ** 2])
        try:
            step, _, _, _ = np.linalg.lstsq(jac, -r, rcond=None)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        improved = False
        scale = 1.0
        for _ in range(8):
            trial = current + scale * step
            tr = residuals(trial)
            if np.all(np.isfinite(tr)):
                sse = float(np.sum(tr ** 2))
                if sse < best_sse:
                    best, best_sse = trial.copy(), sse
                    current = trial
                    improved = True
                    break
            scale *= 0.5
        if not improved:
            break
        if float(np.max(np.abs(scale * step))) <= 1e-14 * (1 + float(np.max(np.abs(current)))):
            break
    return best


def _fit_gauge(x: np.ndarray, y: np.ndarray, pin: str) -> RationalFit:
    params = _linearized(x, y, pin)
    if float(np.max(np.abs(params))) > _COEF_BLOWUP:
        raise SingularSystem(f"rational fit coefficients blew up ({pin}=1 gauge)")
    params = _refine(x, y, params, pin)
    if pin == "d":
        a, b, c, d = float(params[0]), float(params[1]), float(params[2]), 1.0
    else:
        a, b, c, d = float(params[0]), float(params[1]), 1.0, float(params[2])
    _check_pole(c, d, float(np.min(x)), float(np.max(x)))
    fitted = (a * x + b) / (c * x + d)
    rms = float(np.sqrt(np.mean(((fitted - y) / y) ** 2)))
    return RationalFit(a=a, b=b, c=c, d=d, normalization=pin, rms_rel_err=rms)


def fit_rational(samples: Sequence[Tuple[float, float]]) -> RationalFit:
    """Fit y = (a*x + b)/(c*x + d) to (x, y) samples.

    Two-stage: linearized least squares for the initial gauge, then
    Gauss-Newton refinement on the true residuals. The d=1 gauge is tried
    first; curves it cannot represent with a positive denominator (the true
    d near zero or negative) fall back to the c=1 gauge. A fit whose
    denominator is not positive across the sample range in either gauge is
    rejected.
    """
    if len(samples) < 4:
        raise ValidationError(f"rational fit needs >= 4 samples, got {len(samples)}")
    x = np.array([float(p[0]) for p in samples], dtype=np.float64)
    y = np.array([float(p[1]) for p in samples], dtype=np.float64)
    if len(np.unique(x)) != len(x):
        raise SingularSystem("duplicate x values in rational fit input")
    if np.any(y <= 0):
        raise ValidationError("rational fit needs positive y values")

    try:
        return _fit_gauge(x, y, "d")
    except (PoleInRange, SingularSystem):
        return _fit_gauge(x, y, "c")


# --------------------------------------------------------------------------
# interpolation-grid auditing


@dataclass(frozen=True)
class IntervalError:
    lo_dim: int
    hi_dim: int
    max_rel_err: float
    argmax_dim: int


@dataclass(frozen=True)
class GridErrorReport:
    """Worst-case piecewise-linear interpolation error versus a reference
    curve, densely scanned per sample interval."""

    max_rel_err: float
    argmax_dim: int
    intervals: Tuple[IntervalError, ...]

    def to_json_obj(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "argmax_dim": self.argmax_dim,
            "intervals": [
                {"lo_dim": iv.lo_dim, "hi_dim": iv.hi_dim,
                 "max_rel_err": iv.max_rel_err, "argmax_dim": iv.argmax_dim}
                for iv in self.intervals
            ],
        }


def grid_error_report(curve: ThroughputCurve,
                      oracle: Callable[[int], float],
                      max_points: int = 200_000) -> GridErrorReport:
    """Scan every integer dim in [min sample, cap] (strided once the range
    exceeds ``max_points``, sample endpoints always included) and report
    |interpolated - oracle| / oracle per interval and globally."""
    dims = curve.dim_values()
    span = dims[-1] - dims[0] + 1
    stride = max(1, span // max_points)
    intervals: List[IntervalError] = []
    worst = (-1.0, dims[0])
    for lo, hi in zip(dims, dims[1:]):
        local = (-1.0, lo)
        scan = list(range(lo, hi, stride))
        if scan[-1] != hi:
            scan.append(hi)
        for dim in scan:
            true_thr = oracle(dim)
            interp = interpolate_throughput(curve, dim)
            err = abs(interp - true_thr) / true_thr
            if err > local[0]:
                local = (err, dim)
        intervals.append(IntervalError(lo_dim=lo, hi_dim=hi,
                                       max_rel_err=local[0], argmax_dim=local[1]))
        if local[0] > worst[0]:
            worst = local
    return GridErrorReport(max_rel_err=worst[0], argmax_dim=worst[1],
                           intervals=tuple(intervals))
