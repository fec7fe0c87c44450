"""Least-squares power-law fits shared by the mode, evolution and analysis code."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData


@dataclass
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple
    flags: tuple = field(default_factory=tuple)
    n_points: int = 0

    @property
    def degenerate(self):
        return "degenerate" in self.flags


def loglog_fit(x, y, min_points=2, floor=0.0):
    """Fit ``log y = exponent * log x + intercept``.

    Points with ``y <= floor`` are dropped.  If every point is dropped the fit is
    returned with the ``degenerate`` flag and NaN coefficients.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("x and y must have the same shape")
    if x.size < min_points:
        raise InsufficientData(f"need at least {min_points} points, got {x.size}")
    keep = (y > floor) & (x > 0) & np.isfinite(y)
    window = (float(x.min()), float(x.max()))
    if keep.sum() < 2:
        return RateFit(np.nan, np.nan, np.nan, window, ("degenerate",), int(keep.sum()))
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    flags = () if keep.all() else ("dropped_points",)
    return RateFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), window, flags,
                   int(keep.sum()))
