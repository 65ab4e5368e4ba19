"""Error metrics over Monte Carlo trials and a slope test for trend checks."""

from __future__ import annotations

import warnings
from statistics import NormalDist

import numpy as np


def rmse(truth, estimate) -> float:
    """Block-averaged root of the trial-mean squared error.

    Inputs have shape ``(trials, N_B)`` (a 1-D input is one trial). Trials
    whose estimate is NaN are left out of that block's mean.
    """
    err = np.atleast_2d(np.asarray(estimate, float) - np.asarray(truth, float))
    if err.size == 0:
        raise ValueError("rmse needs at least one trial and one block")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_block = np.sqrt(np.nanmean(err**2, axis=0))
    return float(np.nanmean(per_block)) if np.any(np.isfinite(per_block)) else float("nan")


def bound_root(variances) -> float:
    """Block-averaged root of the trial-aggregated bound, ``(trials, N_B)`` input.

    Trials are combined as ``1 / mean(1 / var)``, the bound implied by the
    trial-averaged Fisher information. The plain mean of per-trial bounds
    diverges when the channel gain fades like a complex Gaussian.
    """
    v = np.atleast_2d(np.asarray(variances, float))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_block = np.sqrt(1.0 / np.nanmean(1.0 / v, axis=0))
        return float(np.nanmean(per_block)) if np.any(np.isfinite(per_block)) else float("nan")


def nmse(truth_channels, estimated_channels) -> float:
    """Block-averaged ``sum ||h - h_hat||^2 / sum ||h||^2`` with sums over trials.

    Shapes ``(trials, N_B, M)`` or ``(N_B, M)``. Summing over trials before
    dividing keeps the metric finite under Rayleigh-like fades, where the
    per-trial ratio has no finite mean. Zero-norm true channels are skipped
    with a warning; NaN estimates are skipped silently.
    """
    h = np.asarray(truth_channels)
    h_hat = np.asarray(estimated_channels)
    if h.shape != h_hat.shape or h.size == 0:
        raise ValueError("channel arrays must be non-empty with matching shapes")
    if h.ndim == 2:
        h, h_hat = h[None], h_hat[None]
    power = np.sum(np.abs(h) ** 2, axis=-1)
    err = np.sum(np.abs(h - h_hat) ** 2, axis=-1)
    zero = power == 0
    if np.any(zero):
        warnings.warn(f"skipping {int(zero.sum())} zero-norm channel(s) in NMSE", RuntimeWarning, stacklevel=2)
    ok = ~zero & np.isfinite(err)
    num = np.where(ok, err, 0.0).sum(axis=0)
    den = np.where(ok, power, 0.0).sum(axis=0)
    has = den > 0
    if not np.any(has):
        return float("nan")
    return float(np.mean(num[has] / den[has]))


def slope_ci(x, y, level: float = 0.95) -> tuple[float, float, float]:
    """OLS slope of ``y`` on ``x`` with a normal-approximation confidence interval."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 3 or np.ptp(x) == 0:
        raise ValueError("need at least 3 points and two distinct x values")
    coef, cov = np.polyfit(x, y, 1, cov="unscaled")
    resid = y - np.polyval(coef, x)
    sigma2 = resid @ resid / (x.size - 2)
    half = NormalDist().inv_cdf(0.5 + level / 2) * np.sqrt(cov[0, 0] * sigma2)
    return float(coef[0]), float(coef[0] - half), float(coef[0] + half)
