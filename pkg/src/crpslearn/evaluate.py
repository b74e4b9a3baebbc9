"""Forecast evaluation: CRPS series, quantile-loss profiles, cumulative loss
differences and the Diebold-Mariano test."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .grid import ObservationStream, ProbGrid
from .loss import crps_grid, pinball


class DegenerateDifferentialError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LossSeries:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("loss series must be 1-d")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise ValueError(f"non-finite loss at index {int(bad[0])}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def mean(self):
        return float(self.values.mean())


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float


def _obs_values(obs):
    return obs.y if isinstance(obs, ObservationStream) else np.asarray(obs, dtype=float)


def _check_forecasts(forecasts, obs, grid):
    grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
    f = np.asarray(forecasts, dtype=float)
    y = _obs_values(obs)
    if f.ndim != 2 or f.shape[1] != grid.size:
        raise ValueError(f"forecasts must have shape (T, {grid.size}), got {f.shape}")
    if y.shape != (f.shape[0],):
        raise ValueError(f"time axis mismatch: {f.shape[0]} forecasts, {y.size} observations")
    return f, y, grid


def crps_series(forecasts, obs, grid, label=""):
    """Grid CRPS of every forecast row against its observation."""
    f, y, grid = _check_forecasts(forecasts, obs, grid)
    return LossSeries(np.atleast_1d(crps_grid(f, y, grid)), label)


def ql_profile(forecasts, obs, grid):
    """Mean quantile loss per grid probability over time."""
    f, y, grid = _check_forecasts(forecasts, obs, grid)
    return pinball(f, y[:, None], grid.probs).mean(axis=0)


def _values(series):
    return series.values if isinstance(series, LossSeries) else np.asarray(series, dtype=float)


def cumulative_difference(loss_a, loss_b):
    """Running sum of ``loss_a - loss_b``; negative means ``a`` is ahead."""
    a, b = _values(loss_a), _values(loss_b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return np.cumsum(a - b)


def long_run_variance(d, lag=0):
    """Newey-West (Bartlett) variance of ``d`` around its mean; ``lag=0`` is the plain variance."""
    d = np.asarray(d, dtype=float)
    T = d.size
    if lag < 0 or lag >= T:
        raise ValueError(f"lag must lie in [0, {T - 1}]")
    e = d - d.mean()
    lrv = float(e @ e) / T
    for j in range(1, lag + 1):
        lrv += 2.0 * (1.0 - j / (lag + 1.0)) * float(e[j:] @ e[:-j]) / T
    return lrv


def dm_test(loss_a, loss_b, lag=0, hln=False):
    """Diebold-Mariano test of ``H0: equal accuracy`` against ``A better than B``.

    The statistic is ``mean(d) / sqrt(lrv / T)`` with ``d = loss_a - loss_b``;
    the one-sided p-value is ``P(Z < statistic)``, small when ``A`` has
    lower loss.  ``hln`` applies the Harvey-Leybourne-Newbold small-sample
    factor with horizon ``lag + 1``.
    """
    a, b = _values(loss_a), _values(loss_b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    T = a.size
    if T < 2:
        raise ValueError("need at least two losses")
    d = a - b
    lrv = long_run_variance(d, lag)
    if not lrv > 0.0:
        raise DegenerateDifferentialError("degenerate loss differential")
    stat = float(d.mean()) / math.sqrt(lrv / T)
    if hln:
        h = lag + 1
        stat *= math.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T)
    return DMResult(stat, float(ndtr(stat)))
