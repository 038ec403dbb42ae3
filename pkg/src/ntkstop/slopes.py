"""Least-squares power-law fits in log10-log10 space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    count: int


def loglog_slope(points) -> SlopeFit:
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError(f"a log-log fit needs at least 2 (x, y) points, got {len(pts)}")
    if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
        raise ValueError("log-log fit requires strictly positive, finite coordinates")
    lx, ly = np.log10(pts[:, 0]), np.log10(pts[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("log-log fit needs at least two distinct x values")
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return SlopeFit(float(slope), float(intercept), r2, len(pts))
