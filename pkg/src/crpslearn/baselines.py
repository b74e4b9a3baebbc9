"""Comparison combiners: naive averaging, EWA(G), quantile-BIC BMA and batch
pointwise quantile regression."""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .grid import ProbGrid, WeightSurface
from .loss import pinball, pinball_subgrad
from .spline import identity_basis

#: EWA learning rates 2^x, x = -3, -2.8, ..., 9
EWA_ETA_GRID = tuple(float(2.0**x) for x in np.round(np.arange(-3.0, 9.0 + 1e-9, 0.2), 1))
#: EWA learning rates 1 - sqrt(x), x = 0, 0.05, ..., 0.95 (simulation preset)
EWA_ETA_GRID_SIM = tuple(float(1.0 - np.sqrt(x)) for x in np.round(np.arange(0.0, 0.96, 0.05), 2))


def _softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def naive_weights(M, K):
    if K < 1:
        raise ValueError("need at least one expert")
    return WeightSurface.uniform(M, K)


class NaiveCombiner:
    """Uniform averaging; exposes the same bank interface as the learners."""

    def __init__(self, grid, n_experts):
        self.grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
        self.n_experts = n_experts
        self.labels = ["naive"]
        self._w = naive_weights(self.grid.size, n_experts)

    def __len__(self):
        return 1

    def weights(self, i=0):
        return self._w

    def predict_all(self, experts):
        experts = np.asarray(experts, dtype=float)
        return np.sort(experts @ self._w.weights[0])[None, :]

    def update(self, experts, y):
        return self.predict_all(experts)


class EwaBank:
    """Exponentially weighted aggregation over a grid of learning rates.

    Weights live on basis coefficients (pointwise by default) and are updated
    recursively as ``w <- softmax(-eta * loss + log w)`` per coefficient row.
    With ``gradient=True`` the loss is the linearized quantile loss at the
    combined forecast (EWAG); otherwise the raw quantile loss of each expert.
    """

    def __init__(self, grid, n_experts, etas=(1.0,), gradient=True, basis=None, prior=None):
        self.grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
        etas = np.asarray(etas, dtype=float)
        if etas.ndim != 1 or etas.size < 1 or np.any(etas <= 0):
            raise ValueError("learning rates must be positive")
        self.etas = etas
        self.gradient = gradient
        self.basis = basis if basis is not None else identity_basis(self.grid)
        self.n_experts = K = n_experts
        M, L = self.grid.size, self.basis.n_basis
        self._scale = L / M
        w0 = prior.weights if prior is not None else np.full((M, K), 1.0 / K)
        coef0 = np.linalg.pinv(self.basis.B) @ w0
        coef0 = np.maximum(coef0, 1e-12)
        coef0 /= coef0.sum(axis=1, keepdims=True)
        self.log_w0 = np.log(coef0)
        self.log_w = np.broadcast_to(self.log_w0, (etas.size, L, K)).copy()
        self.coef = np.exp(self.log_w)
        self.t = 0
        kind = "EWAG" if gradient else "EWA"
        self.labels = [f"{kind} {self.basis.name} eta={e:g}" for e in etas]

    def __len__(self):
        return self.etas.size

    @property
    def w(self):
        return np.matmul(self.basis.B, self.coef)

    def weights(self, i=0):
        return WeightSurface(self.basis.B @ self.coef[i])

    def predict_all(self, experts):
        experts = np.asarray(experts, dtype=float)
        return np.sort(np.einsum("cmk,mk->cm", self.w, experts), axis=1)

    def update(self, experts, y):
        experts = np.asarray(experts, dtype=float)
        combined = self.predict_all(experts)
        probs = self.grid.probs
        if self.gradient:
            grad = pinball_subgrad(combined, float(y), probs)
            loss = grad[:, :, None] * experts[None, :, :]
        else:
            loss = np.broadcast_to(pinball(experts, float(y), probs[:, None]), (len(self),) + experts.shape)
        loss_l = self._scale * np.einsum("ml,cmk->clk", self.basis.B, loss)
        z = -self.etas[:, None, None] * loss_l + self.log_w
        z -= z.max(axis=2, keepdims=True)
        self.log_w = z - np.log(np.exp(z).sum(axis=2, keepdims=True))
        self.coef = np.exp(self.log_w)
        if not np.all(np.isfinite(self.coef)):
            raise FloatingPointError("non-finite EWA weights")
        self.t += 1
        return combined


def ewa_batch_weights(log_w0, cum_regret, eta):
    """Closed form ``softmax(eta * R + log w0)`` of the exponential weights.

    ``R`` is the cumulative regret (combination loss minus expert loss); the
    combination's own loss is common to all experts and cancels.
    """
    return _softmax(eta * np.asarray(cum_regret, dtype=float) + np.asarray(log_w0, dtype=float), axis=-1)


def quantile_bic(residual_means, T, df=0.0):
    """Quantile-loss BIC ``2 log(mean rho_p) + log(T) * df / T`` per grid point and expert."""
    res = np.asarray(residual_means, dtype=float)
    if np.any(res <= 0):
        raise ValueError("mean pinball residuals must be positive (a perfect in-sample fit has no BIC)")
    if T < 1:
        raise ValueError("window length must be >= 1")
    return 2.0 * np.log(res) + np.log(T) * np.asarray(df, dtype=float) / T


def bma_weights(bic, eta=0.5):
    """``softmax(-eta * BIC)`` over experts at every grid point.

    ``eta = inf`` returns the one-hot argmin (first index on ties).
    """
    bic = np.atleast_2d(np.asarray(bic, dtype=float))
    if eta <= 0:
        raise ValueError("eta must be positive")
    if np.isinf(eta):
        w = np.zeros_like(bic)
        w[np.arange(bic.shape[0]), np.argmin(bic, axis=1)] = 1.0
        return WeightSurface(w)
    return WeightSurface(_softmax(-eta * bic, axis=1))


class QRConvergenceError(RuntimeError):
    def __init__(self, message, last_iterate=None, gap=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.gap = gap


def qr_objective(w, experts, y, p):
    """Mean pinball loss of the linear combination ``experts @ w``."""
    experts = np.asarray(experts, dtype=float)
    return float(np.mean(pinball(experts @ np.asarray(w, dtype=float), np.asarray(y, dtype=float), p)))


def batch_qr_pointwise(experts, y, p, constraint="convex"):
    """Quantile regression of ``y`` on the expert quantiles at one probability.

    Solved exactly as a linear program.  ``constraint="linear"`` leaves the
    weights free; ``"convex"`` restricts them to the simplex.
    """
    experts = np.asarray(experts, dtype=float)
    y = np.asarray(y, dtype=float)
    n, K = experts.shape
    if y.shape != (n,):
        raise ValueError("window of observations does not match expert window")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if constraint not in ("linear", "convex"):
        raise ValueError(f"unknown constraint {constraint!r}")
    if constraint == "linear" and n < K:
        raise ValueError(f"linear quantile regression needs at least {K} observations, got {n}")

    # variables [w (K), u (n), v (n)]: y - X w = u - v, u, v >= 0
    c = np.concatenate([np.zeros(K), np.full(n, p), np.full(n, 1.0 - p)]) / n
    A_eq = np.hstack([experts, np.eye(n), -np.eye(n)])
    b_eq = y
    w_bounds = (0, None) if constraint == "convex" else (None, None)
    bounds = [w_bounds] * K + [(0, None)] * (2 * n)
    if constraint == "convex":
        A_eq = np.vstack([A_eq, np.concatenate([np.ones(K), np.zeros(2 * n)])])
        b_eq = np.concatenate([b_eq, [1.0]])
    res = scipy.optimize.linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        last = None if res.x is None else res.x[:K]
        raise QRConvergenceError(f"quantile regression did not converge: {res.message}", last_iterate=last)
    w = res.x[:K]
    if constraint == "convex":
        w = np.maximum(w, 0.0)
        w /= w.sum()
    return w


@dataclass
class _Window:
    experts: list
    y: list


class QuantileRegressionCombiner:
    """Rolling-window pointwise quantile regression (batch learner).

    Until enough history exists the naive weights are used.
    """

    def __init__(self, grid, n_experts, window=30, constraint="convex"):
        self.grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
        self.n_experts = n_experts
        self.window = window
        self.constraint = constraint
        self.labels = [f"QR{'conv' if constraint == 'convex' else 'lin'} window={window}"]
        self._hist = _Window([], [])
        self._w = np.full((self.grid.size, n_experts), 1.0 / n_experts)

    def __len__(self):
        return 1

    def weights(self, i=0):
        return WeightSurface(self._w, mode="convex" if self.constraint == "convex" else "linear")

    def predict_all(self, experts):
        experts = np.asarray(experts, dtype=float)
        return np.sort(np.sum(self._w * experts, axis=1))[None, :]

    def update(self, experts, y):
        experts = np.asarray(experts, dtype=float)
        combined = self.predict_all(experts)
        self._hist.experts.append(experts)
        self._hist.y.append(float(y))
        if len(self._hist.y) > self.window:
            self._hist.experts.pop(0)
            self._hist.y.pop(0)
        n = len(self._hist.y)
        if n >= max(self.n_experts, 2):
            X = np.array(self._hist.experts)
            yy = np.array(self._hist.y)
            self._w = np.array([
                batch_qr_pointwise(X[:, m, :], yy, p, self.constraint)
                for m, p in enumerate(self.grid.probs)
            ])
        return combined
