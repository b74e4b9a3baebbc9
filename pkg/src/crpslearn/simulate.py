"""Simulation studies with two fixed Gaussian experts.

Two data generating processes are provided.  The static one draws standard
normal observations, so the optimal weight function is known in closed form
and does not move over time.  The drifting one shifts the observation mean
by ``0.15 * asinh(mu_t)`` with ``mu_t`` a persistent AR(1), which makes the
optimal weights wander.

:func:`run_study` feeds each configured combiner strictly online and
aggregates three metrics over repetitions:

``mean_ql``
    realized quantile loss averaged over the grid and time,
``crps``
    the grid CRPS, i.e. ``2 * mean_ql``,
``distance``
    expected quantile loss of the issued quantiles under the true
    conditional distribution minus that of the true quantiles, averaged
    over grid and time.  Computed in closed form, so it carries no
    observation noise.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .baselines import EWA_ETA_GRID_SIM, EwaBank
from .boa import BoaBank, BoaConfig
from .grid import ObservationStream, ProbGrid
from .loss import pinball
from .spline import DEFAULT_KNOT_DISTANCES, bspline_basis, constant_basis, identity_basis
from .tuning import LAMBDA_CONSTANT, LAMBDA_GRID_SIM, TuningGrid, forget_grid

#: environment variable holding the number of worker processes for run_study
WORKERS_ENV = "CRPSLEARN_WORKERS"

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianExpert:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


#: N(-1, 1) and N(3, 4); the second is parameterised by its standard deviation 2
STATIC_EXPERTS = (GaussianExpert(-1.0, 1.0), GaussianExpert(3.0, 2.0))


def norm_ppf(p):
    """Standard normal quantile function."""
    return ndtri(p)


def expert_quantiles(expert, grid):
    grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
    return expert.mu + expert.sigma * norm_ppf(grid.probs)


def expert_slab(grid, experts=STATIC_EXPERTS):
    """``(M, K)`` quantile slab of fixed experts."""
    return np.column_stack([expert_quantiles(e, grid) for e in experts])


def dgp_static_sample(T, rng):
    return ObservationStream(rng.standard_normal(T))


def drifting_means(innovations, phi=0.99, scale=0.15, mu0=0.0):
    """Observation means ``scale * asinh(mu_t)`` of the latent AR(1) path."""
    mu = np.empty(len(innovations))
    prev = mu0
    for t, e in enumerate(innovations):
        prev = phi * prev + e
        mu[t] = prev
    return scale * np.arcsinh(mu), mu


def dgp_drifting_sample(T, rng, return_means=False):
    """Unit-variance normals around a drifting mean; latent path starts at 0.

    Innovations are drawn first, then the observation noise, so the latent
    path of a prefix does not depend on ``T``.
    """
    eps = rng.standard_normal(T)
    noise = rng.standard_normal(T)
    means, _ = drifting_means(eps)
    obs = ObservationStream(means + noise)
    return (obs, means) if return_means else obs


def optimal_weight_static(p):
    """Weight on expert 1 that reproduces the true quantile: ``(3 + z) / (4 + z)``."""
    z = norm_ppf(p)
    return (3.0 + z) / (4.0 + z)


def optimal_weight_drifting(p, mean):
    """Time-varying analogue of :func:`optimal_weight_static` for mean ``mean``."""
    z = norm_ppf(p)
    return (3.0 + z - mean) / (4.0 + z)


def expected_ql_normal(q, p, mu=0.0, sigma=1.0):
    """``E[QL_p(q, Y)]`` for ``Y ~ N(mu, sigma^2)`` in closed form."""
    u = (np.asarray(q, dtype=float) - mu) / sigma
    return sigma * (u * (ndtr(u) - p) + np.exp(-0.5 * u * u) / _SQRT_2PI)


def ql_floor(p, sigma=1.0):
    """Expected quantile loss of the true ``p``-quantile of a normal."""
    z = norm_ppf(p)
    return sigma * np.exp(-0.5 * z * z) / _SQRT_2PI


def best_attainable_ql(p, n_mc, rng):
    """Monte Carlo estimate of the expected loss of the true quantile under N(0, 1)."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    y = rng.standard_normal(n_mc)
    return float(np.mean(pinball(norm_ppf(p), y, p)))


# ---------------------------------------------------------------------------
# combiner specifications

SPEC_KINDS = ("Pointwise", "B-Smooth", "B-Constant", "P-Smooth", "P-Constant")


@dataclass(frozen=True)
class CombinerSpec:
    """A named learner family, expanded into a tuning grid by :meth:`build`.

    ``forget`` is a tuple of forget rates or ``"auto"`` for the horizon
    dependent grid.  ``lambdas`` and ``knot_distances`` override the default
    tuning grids of the smoothing specs.
    """

    kind: str
    forget: object = (0.0,)
    algorithm: str = "BOAG"
    lambdas: tuple = None
    knot_distances: tuple = None
    etas: tuple = EWA_ETA_GRID_SIM
    alpha: float = 0.5
    name: str = None

    def __post_init__(self):
        if self.kind not in SPEC_KINDS:
            raise ValueError(f"unknown spec kind {self.kind!r}; expected one of {SPEC_KINDS}")
        if self.algorithm not in ("BOAG", "EWAG"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "EWAG" and self.kind.startswith("P-"):
            raise ValueError("P-spline smoothing is only available for BOAG")
        if self.forget != "auto" and not self.forget:
            raise ValueError("forget grid must not be empty")

    @property
    def label(self):
        if self.name:
            return self.name
        base = self.kind if self.algorithm == "BOAG" else f"{self.algorithm} {self.kind}"
        return base if self.forget in ((0.0,), (0,)) else f"{base} Forget"

    @property
    def depends_on_horizon(self):
        return self.forget == "auto"

    def forgets(self, T):
        return forget_grid(T) if self.forget == "auto" else tuple(float(x) for x in self.forget)

    def build(self, grid, n_experts, T=None):
        if self.forget == "auto" and T is None:
            raise ValueError("horizon T is required for the automatic forget grid")
        forgets = self.forgets(T)
        if self.kind == "Pointwise":
            bases, lams = [identity_basis(grid)], (0.0,)
        elif self.kind == "B-Smooth":
            kds = self.knot_distances or DEFAULT_KNOT_DISTANCES
            bases, lams = [bspline_basis(grid, d, 3) for d in kds], (0.0,)
        elif self.kind == "B-Constant":
            bases, lams = [constant_basis(grid)], (0.0,)
        elif self.kind == "P-Smooth":
            bases, lams = [identity_basis(grid)], self.lambdas or LAMBDA_GRID_SIM
        else:
            bases, lams = [identity_basis(grid)], self.lambdas or (LAMBDA_CONSTANT,)

        if self.algorithm == "EWAG":
            members = [EwaBank(grid, n_experts, etas=self.etas, gradient=True, basis=b) for b in bases]
            return TuningGrid(members)
        members = []
        for basis in bases:
            configs = [BoaConfig(basis, lam=lam, alpha=self.alpha, forget=xi)
                       for lam in lams for xi in forgets]
            members.append(BoaBank(configs, grid, n_experts))
        return TuningGrid(members)


def default_specs(study="smoothing"):
    if study == "smoothing":
        return tuple(CombinerSpec(k) for k in SPEC_KINDS)
    if study == "algorithms":
        boag = tuple(CombinerSpec(k) for k in SPEC_KINDS)
        ewag = tuple(CombinerSpec(k, algorithm="EWAG") for k in ("Pointwise", "B-Smooth", "B-Constant"))
        return boag + ewag
    if study == "forget":
        return (
            CombinerSpec("Pointwise"),
            CombinerSpec("P-Smooth"),
            CombinerSpec("Pointwise", forget="auto"),
            CombinerSpec("P-Smooth", forget="auto"),
        )
    raise ValueError(f"unknown study {study!r}")


# ---------------------------------------------------------------------------
# study harness


@dataclass(frozen=True)
class SimSpec:
    dgp: str
    T: tuple
    reps: int
    seed: int
    specs: tuple = field(default_factory=default_specs)
    grid: ProbGrid = field(default_factory=ProbGrid.percentiles)
    record_weights: bool = False

    def __post_init__(self):
        if self.dgp not in ("static", "drifting"):
            raise ValueError(f"unknown dgp {self.dgp!r}")
        T = (self.T,) if np.isscalar(self.T) else tuple(self.T)
        if not T or min(T) < 1:
            raise ValueError("horizons must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.specs:
            raise ValueError("at least one combiner spec is required")
        labels = [s.label for s in self.specs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"spec labels must be unique, got {labels}")
        object.__setattr__(self, "T", tuple(sorted(set(int(t) for t in T))))


@dataclass
class StudyResult:
    """Aggregated output of :func:`run_study`.

    ``per_rep[(label, T, metric)]`` holds one value per repetition;
    ``profiles[(label, T)]`` the mean per-probability distance;
    ``config_losses[label]`` the mean CRPS of every tuning configuration at
    the largest horizon; ``weights[label]`` (when recorded) the weight on
    each expert over time for the first repetition, shape ``(T, M, K)``.
    """

    spec: SimSpec
    per_rep: dict
    profiles: dict
    config_losses: dict
    weights: dict

    METRICS = ("mean_ql", "crps", "distance")

    def mean(self, label, T, metric="mean_ql"):
        return float(np.mean(self.per_rep[(label, T, metric)]))

    def se(self, label, T, metric="mean_ql"):
        v = self.per_rep[(label, T, metric)]
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")

    def rows(self):
        """``(label, T, metric, mean, se)`` tuples in spec, horizon, metric order."""
        out = []
        for s in self.spec.specs:
            for T in self.spec.T:
                for metric in self.METRICS:
                    out.append((s.label, T, metric, self.mean(s.label, T, metric), self.se(s.label, T, metric)))
        return out


def _simulate_stream(dgp, T, rng):
    if dgp == "static":
        return dgp_static_sample(T, rng).y, np.zeros(T)
    obs, means = dgp_drifting_sample(T, rng, return_means=True)
    return obs.y, means


def _record_weights(tg, slab, y):
    forecasts = np.empty((y.size, slab.shape[0]))
    weights = np.empty((y.size,) + slab.shape)
    for t, yt in enumerate(y):
        weights[t] = tg.weights().weights
        forecasts[t] = tg.step(slab, yt)
    return forecasts, weights


def _rep_metrics(forecasts, y, means, probs):
    ql = pinball(forecasts, y[:, None], probs)
    gap = expected_ql_normal(forecasts, probs, means[:, None]) - ql_floor(probs)
    return ql, gap


def _one_rep(spec, seed_seq, rep_index):
    rng = np.random.default_rng(seed_seq)
    grid = spec.grid
    probs = grid.probs
    Tmax = spec.T[-1]
    y, means = _simulate_stream(spec.dgp, Tmax, rng)
    slab = expert_slab(grid)
    K = slab.shape[1]

    values, profiles, config_losses, weights = {}, {}, {}, {}
    for cs in spec.specs:
        horizons = spec.T if cs.depends_on_horizon else (Tmax,)
        for run_T in horizons:
            tg = cs.build(grid, K, run_T)
            if spec.record_weights and rep_index == 0 and run_T == Tmax:
                fc, w = _record_weights(tg, slab, y[:run_T])
                weights[cs.label] = w
            else:
                fc = np.array([tg.step(slab, yt) for yt in y[:run_T]])
            if run_T == Tmax:
                config_losses[cs.label] = dict(zip(tg.labels, tg.cum_loss / Tmax))
            ql, gap = _rep_metrics(fc, y[:run_T], means[:run_T], probs)
            targets = (run_T,) if cs.depends_on_horizon else spec.T
            for T in targets:
                mql = float(ql[:T].mean())
                values[(cs.label, T, "mean_ql")] = mql
                values[(cs.label, T, "crps")] = 2.0 * mql
                values[(cs.label, T, "distance")] = float(gap[:T].mean())
                profiles[(cs.label, T)] = gap[:T].mean(axis=0)
    return values, profiles, config_losses, weights


def _worker_count(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def run_study(spec, workers=None):
    """Run every repetition of ``spec`` and aggregate.

    Repetition ``r`` draws from the ``r``-th child of ``SeedSequence(seed)``,
    so results do not depend on ``workers``.  Horizons are prefixes of one
    stream of length ``max(T)`` per repetition.
    """
    children = np.random.SeedSequence(spec.seed).spawn(spec.reps)
    workers = _worker_count(workers)
    if workers > 1 and spec.reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_one_rep, [spec] * spec.reps, children, range(spec.reps)))
    else:
        reps = [_one_rep(spec, c, r) for r, c in enumerate(children)]

    per_rep = {k: np.array([r[0][k] for r in reps]) for k in reps[0][0]}
    profiles = {k: np.mean([r[1][k] for r in reps], axis=0) for k in reps[0][1]}
    config_losses = {
        label: {cfg: float(np.mean([r[2][label][cfg] for r in reps])) for cfg in reps[0][2][label]}
        for label in reps[0][2]
    }
    return StudyResult(spec, per_rep, profiles, config_losses, reps[0][3])
