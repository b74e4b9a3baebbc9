"""Quantile (pinball) loss, its subgradient and the grid CRPS approximation.

All functions broadcast over numpy arrays.  The subgradient at the kink
``y == q`` is fixed to ``-p`` (the indicator ``1{y < q}`` is strict).
"""

import numpy as np

from .grid import ProbGrid


def _check_probs(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    return p


def _probs_of(grid):
    return grid.probs if isinstance(grid, ProbGrid) else ProbGrid(grid).probs


def pinball(q, y, p):
    """Quantile loss ``(1{y < q} - p) * (q - y)``."""
    p = _check_probs(p)
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    out = ((y < q) - p) * (q - y)
    return out if out.ndim else float(out)


def pinball_subgrad(q, y, p):
    """Subgradient of the quantile loss in ``q``: ``1{y < q} - p``."""
    p = _check_probs(p)
    out = (np.asarray(y, dtype=float) < np.asarray(q, dtype=float)) - p
    return out if np.ndim(out) else float(out)


def crps_grid(quantiles, y, grid):
    """Grid approximation ``2/M * sum_m QL_{p_m}(q_m, y)`` of the CRPS.

    ``quantiles`` may carry leading batch axes; the last axis must match the
    grid.
    """
    probs = _probs_of(grid)
    q = np.asarray(quantiles, dtype=float)
    if q.shape[-1:] != probs.shape:
        raise ValueError(f"quantiles length {q.shape[-1:]} does not match grid size {probs.size}")
    y = np.asarray(y, dtype=float)
    if y.ndim:
        y = y[..., None]
    out = 2.0 * np.mean(((y < q) - probs) * (q - y), axis=-1)
    return out if out.ndim else float(out)


def linearized_instant_regret(combined, experts, y, grid):
    """Gradient-trick instantaneous regret per grid point and expert.

    Entry ``(m, k)`` is ``QL'_{p_m}(combined[m], y) * (combined[m] - experts[m, k])``,
    i.e. the linearized loss of the combination minus that of expert ``k``.
    """
    probs = _probs_of(grid)
    combined = np.asarray(combined, dtype=float)
    experts = np.asarray(experts, dtype=float)
    if combined.shape[-1:] != probs.shape or experts.shape[-2:-1] != probs.shape:
        raise ValueError(
            f"shape mismatch: combined {combined.shape}, experts {experts.shape}, grid {probs.size}"
        )
    y = np.asarray(y, dtype=float)
    if y.ndim:
        y = y[..., None]
    grad = (y < combined) - probs
    return grad[..., None] * (combined[..., None] - experts)
