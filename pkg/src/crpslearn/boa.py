"""P-smoothed, fully adaptive gradient-based Bernstein online aggregation.

The learner keeps its hidden state in coefficient space (one row per basis
function, one column per expert).  Each observation triggers:

1. combine the experts with the current smoothed weight surface and sort;
2. linearized instantaneous regret, projected onto the basis (scaled L/M);
3. exponential forgetting of regret, range and variance;
4. range ``E = max(E, |r|)`` and variance ``V += r**2``;
5. learning rates ``eta = min(sqrt(-log(beta0) / V), 1 / (2 E))``;
6. adjusted cumulative loss ``R += -r (1 - eta r) / 2 + E 1{-2 eta r > 1}``;
7. coefficients ``beta = K beta0 * softmax(-eta R + log eta)`` over experts;
8. fixed share, soft and hard thresholding (each optional);
9. smoothed weights ``w = S(lam, alpha) B beta``.

:class:`BoaBank` runs many hyperparameter configurations that share one basis
in lock-step, with every state array carrying a leading configuration axis.
:class:`BoaLearner` is the single-configuration view.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import boa_core, combine, pointwise_regret
from .grid import ProbGrid, WeightSurface
from .spline import BasisSystem, pinv_init

#: learning rate used where neither the variance nor the range bound is active yet
ETA_CAP = 1e6
#: lower bound keeping ``log(eta)`` finite when ``-log(beta0)`` vanishes (single expert)
ETA_FLOOR = 1e-300
#: smallest admissible prior coefficient before taking logs
BETA0_FLOOR = 1e-12


@dataclass(frozen=True)
class BoaConfig:
    basis: BasisSystem
    lam: float = 0.0
    alpha: float = 0.5
    forget: float = 0.0
    fixed_share: float = 0.0
    soft_threshold: float = 0.0
    hard_threshold: float = 0.0
    prior: WeightSurface = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.forget < 1.0:
            raise ValueError("forget must lie in [0, 1)")
        if not 0.0 <= self.fixed_share <= 1.0:
            raise ValueError("fixed_share must lie in [0, 1]")
        if self.soft_threshold < 0 or self.hard_threshold < 0:
            raise ValueError("thresholds must be >= 0")

    def label(self):
        parts = [self.basis.name]
        if self.lam:
            parts.append(f"lam={self.lam:g}")
        if self.forget:
            parts.append(f"forget={self.forget:g}")
        if self.fixed_share:
            parts.append(f"share={self.fixed_share:g}")
        if self.soft_threshold:
            parts.append(f"soft={self.soft_threshold:g}")
        if self.hard_threshold:
            parts.append(f"hard={self.hard_threshold:g}")
        return " ".join(parts)


@dataclass
class LearnerState:
    beta: np.ndarray
    R: np.ndarray
    E: np.ndarray
    V: np.ndarray
    eta: np.ndarray
    beta0: np.ndarray
    t: int = 0
    weights: np.ndarray = field(default=None, repr=False)


def apply_fixed_share(x, phi):
    """Shrink toward the uniform combination: ``phi / K + (1 - phi) x``."""
    x = np.asarray(x, dtype=float)
    return phi / x.shape[-1] + (1.0 - phi) * x


def apply_soft_threshold(x, nu):
    """``sign(x) * max(|x| - nu, 0)``."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - nu, 0.0)
    return out if out.ndim else float(out)


def apply_hard_threshold(x, kappa):
    """``x * 1{|x| > kappa}``."""
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) > kappa, x, 0.0)
    return out if out.ndim else float(out)


def project_rows_to_simplex(x):
    """Clip negatives and renormalize each row; all-zero rows become uniform."""
    x = np.maximum(x, 0.0)
    s = x.sum(axis=-1, keepdims=True)
    k = x.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s > 0, x / s, 1.0 / k)
    return out


def initial_coefficients(basis, prior):
    """Prior coefficients: pseudo-inverse fit, floored and row-normalized.

    For a full-rank basis and a uniform prior the pseudo-inverse already
    returns ``1/K`` everywhere and both corrections are no-ops.
    """
    w0 = prior.weights
    if np.any(w0 <= 0.0):
        raise ValueError("prior weights must be strictly positive (log-prior must be finite)")
    if np.max(np.abs(w0.sum(axis=1) - 1.0)) > 1e-10:
        raise ValueError("prior rows must sum to one")
    beta0 = pinv_init(basis, prior)
    uniform = bool(np.all(w0 == w0[0, 0]))
    if uniform:
        return np.full_like(beta0, w0[0, 0]), True
    beta0 = np.maximum(beta0, BETA0_FLOOR)
    return beta0 / beta0.sum(axis=1, keepdims=True), False


class BoaBank:
    """Several BOA configurations sharing one basis and prior, updated together."""

    def __init__(self, configs, grid, n_experts):
        configs = list(configs)
        if not configs:
            raise ValueError("need at least one configuration")
        self.grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
        self.configs = configs
        basis = configs[0].basis
        if any(c.basis is not basis for c in configs):
            raise ValueError("all configurations of a bank must share the same basis object")
        if basis.n_points != self.grid.size:
            raise ValueError(f"basis has {basis.n_points} points, grid has {self.grid.size}")
        prior = configs[0].prior
        if any(c.prior is not prior for c in configs):
            raise ValueError("all configurations of a bank must share the same prior")
        if prior is None:
            prior = WeightSurface.uniform(self.grid.size, n_experts)
        if prior.shape != (self.grid.size, n_experts):
            raise ValueError(f"prior shape {prior.shape} does not match ({self.grid.size}, {n_experts})")

        self.basis = basis
        self.n_experts = K = n_experts
        C, L = len(configs), basis.n_basis
        self._identity = basis.is_identity
        self._scale = L / basis.n_points

        beta0, self._uniform_prior = initial_coefficients(basis, prior)
        self.beta0 = beta0
        # hidden state is stored expert-major, (C, K, L): per-expert slices are
        # contiguous and smoothing becomes a single matrix product
        b0 = np.ascontiguousarray(beta0.T)
        self._neg_log_beta0 = -np.log(b0)
        self._k_beta0 = K * b0

        def col(name):
            return np.array([getattr(c, name) for c in configs], dtype=float)[:, None, None]

        self._keep_flat = 1.0 - col("forget").ravel()
        self._phi = col("fixed_share")
        self._nu = col("soft_threshold")
        self._kappa = col("hard_threshold")
        self._any_share = bool(np.any(self._phi > 0))
        self._any_soft = bool(np.any(self._nu > 0))
        self._any_hard = bool(np.any(self._kappa > 0))

        # configurations grouped by smoother; lam == 0 maps straight through B
        groups = {}
        for i, c in enumerate(configs):
            groups.setdefault((float(c.lam), float(c.alpha)), []).append(i)
        self._groups = []
        for (lam, alpha), idx in groups.items():
            if lam == 0.0:
                hat = None if self._identity else basis.B
            else:
                hat = basis.smoother(lam, alpha) @ basis.B
            self._groups.append((np.array(idx), None if hat is None else np.ascontiguousarray(hat.T)))
        self._batched = None
        sizes = {idx.size for idx, _ in self._groups}
        if len(self._groups) > 1 and len(sizes) == 1 and all(h is not None for _, h in self._groups):
            perm = np.concatenate([idx for idx, _ in self._groups])
            self._batched = (perm, np.stack([h for _, h in self._groups]))
        self._modes = ["convex" if c.lam == 0 else "affine" for c in configs]

        self.beta = np.broadcast_to(b0, (C, K, L)).copy()
        self.R = np.zeros((C, K, L))
        self.E = np.zeros((C, K, L))
        self.V = np.zeros((C, K, L))
        self.eta = np.full((C, K, L), ETA_CAP)
        self.t = 0
        self.w = self._smooth(self.beta)

    def __len__(self):
        return len(self.configs)

    @property
    def labels(self):
        return [c.label() for c in self.configs]

    def _smooth(self, beta):
        """Weights on the grid, ``(C, K, M)``."""
        C, K, L = beta.shape
        M = self.grid.size
        if self._batched is not None:
            perm, hats = self._batched
            G = hats.shape[0]
            w = np.empty((C, K, M))
            w[perm] = np.matmul(beta[perm].reshape(G, -1, L), hats).reshape(C, K, M)
            return w
        if len(self._groups) == 1:
            hat = self._groups[0][1]
            if hat is None:
                return beta.copy()
            return (beta.reshape(C * K, L) @ hat).reshape(C, K, M)
        w = np.empty((C, K, M))
        for idx, hat in self._groups:
            w[idx] = beta[idx] if hat is None else (beta[idx].reshape(-1, L) @ hat).reshape(idx.size, K, M)
        return w

    def weights(self, i=0):
        return WeightSurface(self.w[i].T, mode=self._modes[i])

    def _check_experts(self, experts):
        experts = np.asarray(experts, dtype=float)
        if experts.shape != (self.grid.size, self.n_experts):
            raise ValueError(
                f"expert slab shape {experts.shape} does not match ({self.grid.size}, {self.n_experts})"
            )
        return experts

    def predict_all(self, experts):
        """Sorted combined quantiles for every configuration, shape ``(C, M)``."""
        experts = self._check_experts(experts)
        out = np.empty((len(self.configs), self.grid.size))
        combine(self.w, experts, out)
        out.sort(axis=1)
        return out

    def update(self, experts, y):
        """Advance every configuration by one observation.

        Returns the combined forecasts issued before seeing ``y``.
        """
        experts = self._check_experts(experts)
        y = float(y)
        combined = self.predict_all(experts)

        r = np.empty(self.w.shape)
        pointwise_regret(combined, experts, y, self.grid.probs, r)
        if not self._identity:
            C, K, M = r.shape
            r = self._scale * (r.reshape(C * K, M) @ self.basis.B).reshape(C, K, -1)
        _check_finite(r, "instantaneous regret")

        beta = np.empty_like(self.beta)
        boa_core(r, self.R, self.E, self.V, self._keep_flat, self._neg_log_beta0, self._k_beta0,
                 ETA_CAP, ETA_FLOOR, self.eta, beta)
        _check_finite(self.R, "regret")
        if not self._uniform_prior:
            beta /= beta.sum(axis=1, keepdims=True)
        beta = self._shrink(beta)
        _check_finite(beta, "coefficients")
        self.beta = beta

        self.w = self._smooth(beta)
        self.t += 1
        return combined

    def _shrink(self, beta):
        if self._any_share:
            beta = apply_fixed_share(beta.swapaxes(1, 2), self._phi).swapaxes(1, 2)
        if not (self._any_soft or self._any_hard):
            return beta
        out = beta
        if self._any_soft:
            out = apply_soft_threshold(out, self._nu)
        if self._any_hard:
            out = apply_hard_threshold(out, self._kappa)
        changed = np.any(out != beta, axis=1, keepdims=True)
        projected = project_rows_to_simplex(out.swapaxes(1, 2)).swapaxes(1, 2)
        return np.where(changed, projected, beta)

    def state(self, i=0):
        return LearnerState(
            beta=self.beta[i].T.copy(),
            R=self.R[i].T.copy(),
            E=self.E[i].T.copy(),
            V=self.V[i].T.copy(),
            eta=self.eta[i].T.copy(),
            beta0=self.beta0.copy(),
            t=self.t,
            weights=self.w[i].T.copy(),
        )


def _check_finite(a, step):
    # a sum of finite entries only overflows for astronomically large values
    if not np.isfinite(a.sum()) and not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite values in {step}")


class BoaLearner:
    """A single BOA configuration.

    >>> from crpslearn.grid import ProbGrid
    >>> from crpslearn.spline import identity_basis
    >>> grid = ProbGrid([0.25, 0.5, 0.75])
    >>> learner = BoaLearner(BoaConfig(identity_basis(grid)), grid, n_experts=2)
    >>> learner.predict([[0.0, 2.0], [1.0, 3.0], [2.0, 4.0]]).tolist()
    [1.0, 2.0, 3.0]
    """

    def __init__(self, config, grid, n_experts):
        self.config = config
        self._bank = BoaBank([config], grid, n_experts)

    @property
    def grid(self):
        return self._bank.grid

    @property
    def t(self):
        return self._bank.t

    @property
    def state(self):
        return self._bank.state(0)

    @property
    def weights(self):
        return self._bank.weights(0)

    def predict(self, experts):
        return self._bank.predict_all(experts)[0]

    def update(self, experts, y):
        return self._bank.update(experts, y)[0]

    def run(self, panel, y):
        """Feed a whole panel online; returns the ``(T, M)`` forecasts issued."""
        values = panel.values if hasattr(panel, "values") else np.asarray(panel, dtype=float)
        return np.array([self.update(values[t], yt) for t, yt in enumerate(np.asarray(y, dtype=float))])
