"""Independent reference computations used to certify the main code paths.

Nothing here imports from the learner, loss or spline modules: each oracle is
a deliberately plain, slow re-derivation (scalar loops, ``math`` module).
"""

import math
from dataclasses import dataclass

import numpy as np

from .grid import ProbGrid


@dataclass(frozen=True)
class OracleReport:
    case: str
    value: float
    oracle: float

    @property
    def abs_gap(self):
        return abs(self.value - self.oracle)

    @property
    def rel_gap(self):
        return self.abs_gap / max(abs(self.oracle), 1e-300)


def _ql(q, y, p):
    return ((1.0 if y < q else 0.0) - p) * (q - y)


def _norm_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _norm_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def gaussian_crps_closed_form(mu, sigma, y):
    """Exact CRPS of ``N(mu, sigma^2)`` at ``y``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = (y - mu) / sigma
    return sigma * (z * (2.0 * _norm_cdf(z) - 1.0) + 2.0 * _norm_pdf(z) - 1.0 / math.sqrt(math.pi))


def convex_pinball_objective(w, experts, y, p):
    """Mean pinball loss of ``w * x1 + (1 - w) * x2`` over a window."""
    total = 0.0
    for (x1, x2), yi in zip(experts, y):
        total += _ql(w * x1 + (1.0 - w) * x2, yi, p)
    return total / len(y)


def brute_force_convex_weight(experts, y, p, step=1e-4):
    """Exhaustive scan of the weight on expert 1 for two experts.

    ``experts`` has shape ``(n, 2)``.  Returns ``(w, objective)`` with ties
    resolved toward the smaller weight.
    """
    experts = np.asarray(experts, dtype=float)
    y = np.asarray(y, dtype=float)
    if experts.ndim != 2 or experts.shape[1] != 2:
        raise ValueError("brute force scan supports exactly two experts")
    if not 0.0 < step <= 0.1:
        raise ValueError("step must lie in (0, 0.1]")
    n_steps = int(round(1.0 / step))
    ws = np.arange(n_steps + 1) / n_steps
    # vectorized over the scan only; the loss itself is spelled out here
    q = ws[:, None] * experts[None, :, 0] + (1.0 - ws[:, None]) * experts[None, :, 1]
    obj = np.mean(((y[None, :] < q) - p) * (q - y[None, :]), axis=1)
    i = int(np.argmin(obj))
    return float(ws[i]), float(obj[i])


def reference_pointwise_boag(experts, y, grid, prior=None):
    """Fully adaptive gradient BOA run separately at every grid probability.

    ``experts`` has shape ``(T, M, K)``.  Each step forms the combination with
    the previous weights, sorts it across the grid, then applies the update
    system per probability and expert with scalar arithmetic.  Returns the
    ``(T + 1, M, K)`` weight trajectory starting with the prior.
    """
    probs = list(grid.probs if isinstance(grid, ProbGrid) else ProbGrid(grid).probs)
    experts = np.asarray(experts, dtype=float)
    T, M, K = experts.shape
    if prior is None:
        w0 = [[1.0 / K] * K for _ in range(M)]
    else:
        w0 = [list(map(float, row)) for row in np.asarray(prior, dtype=float)]

    R = [[0.0] * K for _ in range(M)]
    E = [[0.0] * K for _ in range(M)]
    V = [[0.0] * K for _ in range(M)]
    w = [row[:] for row in w0]
    traj = [np.array(w)]
    for t in range(T):
        x = experts[t]
        combined = sorted(sum(w[m][k] * x[m, k] for k in range(K)) for m in range(M))
        yt = float(y[t])
        new_w = []
        for m in range(M):
            p = probs[m]
            c = combined[m]
            grad = (1.0 if yt < c else 0.0) - p
            logits = []
            etas = []
            for k in range(K):
                r = grad * (c - x[m, k])
                E[m][k] = max(E[m][k], abs(r))
                V[m][k] += r * r
                prior_term = -math.log(w0[m][k])
                a = math.sqrt(prior_term / V[m][k]) if V[m][k] > 0 else math.inf
                b = 0.5 / E[m][k] if E[m][k] > 0 else math.inf
                eta = min(a, b)
                if math.isinf(eta):
                    eta = 1e6
                eta = max(eta, 1e-300)
                R[m][k] += -r * (1.0 - eta * r) / 2.0 + (E[m][k] if -2.0 * eta * r > 1.0 else 0.0)
                logits.append(-eta * R[m][k] + math.log(eta))
                etas.append(eta)
            top = max(logits)
            ex = [math.exp(v - top) for v in logits]
            s = sum(ex)
            new_w.append([K * w0[m][k] * ex[k] / s for k in range(K)])
        w = new_w
        traj.append(np.array(w))
    return np.array(traj)
