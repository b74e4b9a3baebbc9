"""B-spline bases on the probability grid and P-spline smoothers.

A basis is evaluated once on the grid (matrix ``B``, one row per grid point,
one column per basis function).  The smoother maps coefficient-space weights
back to smoothed weights on the grid::

    S(lam, alpha) = B (B'B + lam * (alpha D1'D1 + (1 - alpha) D2'D2))^-1 B'

where ``D1``/``D2`` are first/second forward-difference matrices acting on the
coefficients.  Constants lie in the null space of both penalties, so ``S``
reproduces constant weight functions for every ``lam``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .grid import ProbGrid, WeightSurface

#: knot distances used for B-spline smoothing grids, 0.005 to 0.5 in steps of 0.015
DEFAULT_KNOT_DISTANCES = tuple(float(d) for d in np.round(0.005 + 0.015 * np.arange(34), 3))

_EIG_RTOL = 1e-12


class SingularSmootherError(np.linalg.LinAlgError):
    pass


def difference_matrix(L, order):
    """``(L - order) x L`` matrix of ``order``-th forward differences."""
    if order not in (1, 2):
        raise ValueError("difference order must be 1 or 2")
    if L <= order:
        raise ValueError(f"need more than {order} coefficients for order-{order} differences, got {L}")
    return np.diff(np.eye(L), n=order, axis=0)


def _penalty_differences(L):
    # empty difference matrices for tiny bases: the penalty simply vanishes
    d1 = np.diff(np.eye(L), n=1, axis=0)
    d2 = np.diff(np.eye(L), n=2, axis=0) if L > 2 else np.zeros((0, L))
    return d1, d2


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """Basis matrix with its difference penalties and a smoother cache."""

    B: np.ndarray
    knots: np.ndarray
    degree: int
    name: str = "custom"
    D1: np.ndarray = field(init=False)
    D2: np.ndarray = field(init=False)
    smoothers: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[1] < 1:
            raise ValueError("basis matrix must be 2-d with at least one column")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)
        d1, d2 = _penalty_differences(B.shape[1])
        object.__setattr__(self, "D1", d1)
        object.__setattr__(self, "D2", d2)

    @property
    def n_points(self):
        return self.B.shape[0]

    @property
    def n_basis(self):
        return self.B.shape[1]

    @property
    def is_identity(self):
        return self.B.shape[0] == self.B.shape[1] and np.array_equal(self.B, np.eye(self.B.shape[0]))

    def penalty(self, alpha):
        return alpha * self.D1.T @ self.D1 + (1.0 - alpha) * self.D2.T @ self.D2

    def smoother(self, lam, alpha=0.5):
        key = (float(lam), float(alpha))
        S = self.smoothers.get(key)
        if S is None:
            S = _compute_smoother(self, *key)
            S.setflags(write=False)
            self.smoothers[key] = S
        return S


def _compute_smoother(basis, lam, alpha):
    if lam < 0 or not 0.0 <= alpha <= 1.0:
        raise ValueError(f"need lam >= 0 and alpha in [0, 1], got lam={lam}, alpha={alpha}")
    B = basis.B
    G = B.T @ B
    try:
        scipy.linalg.cholesky(G, lower=True)
        full_rank = True
    except np.linalg.LinAlgError:
        full_rank = False

    if lam == 0.0:
        if not full_rank:
            raise SingularSmootherError(
                f"B'B is singular for basis {basis.name!r} ({basis.n_basis} functions on "
                f"{basis.n_points} points) with lam=0"
            )
        return B @ scipy.linalg.solve(G, B.T, assume_a="pos")

    P = basis.penalty(alpha)
    if full_rank:
        # generalized eigenproblem P v = e G v keeps the penalty null space exact
        ev, V = scipy.linalg.eigh(P, G)
        ev = np.where(ev < _EIG_RTOL * max(ev.max(), 1.0), 0.0, ev)
        BV = B @ V
        return (BV / (1.0 + lam * ev)) @ BV.T
    try:
        return B @ scipy.linalg.solve(G + lam * P, B.T, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise SingularSmootherError(
            f"penalized system is singular for basis {basis.name!r} with lam={lam}"
        ) from exc


def smoother(basis, lam, alpha=0.5):
    """Cached ``M x M`` P-spline smoother of ``basis`` for ``(lam, alpha)``."""
    return basis.smoother(lam, alpha)


def _cox_de_boor(x, knots, degree):
    """Evaluate all B-splines of ``degree`` over ``knots`` at points ``x``."""
    x = np.asarray(x, dtype=float)
    n_basis0 = knots.size - 1
    right = knots[-1]
    B = np.zeros((x.size, n_basis0))
    for i in range(n_basis0):
        lo, hi = knots[i], knots[i + 1]
        if hi > lo:
            inside = (x >= lo) & (x < hi)
            if hi == right:
                inside |= x == right
            B[inside, i] = 1.0
    for d in range(1, degree + 1):
        nxt = np.zeros((x.size, n_basis0 - d))
        for i in range(n_basis0 - d):
            den_l = knots[i + d] - knots[i]
            den_r = knots[i + d + 1] - knots[i + 1]
            if den_l > 0:
                nxt[:, i] += (x - knots[i]) / den_l * B[:, i]
            if den_r > 0:
                nxt[:, i] += (knots[i + d + 1] - x) / den_r * B[:, i + 1]
        B = nxt
    return B


def bspline_basis(grid, knot_distance, degree=3):
    """Clamped B-spline basis with equidistant knots on [0, 1].

    The unit interval is split into ``round(1 / knot_distance)`` equal pieces;
    the boundary knots are repeated ``degree + 1`` times.  Basis functions that
    vanish on every grid point are dropped, which keeps ``B`` free of zero
    columns (e.g. linear hats centred at 0 and 1).
    """
    grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
    if not 0 <= degree <= 3:
        raise ValueError("degree must be in 0..3")
    if not 0.0 < knot_distance <= 1.0:
        raise ValueError(f"knot_distance must lie in (0, 1], got {knot_distance}")
    n_int = max(1, int(round(1.0 / knot_distance)))
    inner = np.arange(n_int + 1) / n_int
    knots = np.concatenate([np.zeros(degree), inner, np.ones(degree)])
    B = _cox_de_boor(grid.probs, knots, degree)
    B = B[:, np.any(B != 0.0, axis=0)]
    if B.shape[1] < 1:
        raise ValueError(f"knot distance {knot_distance} leaves no basis function")
    return BasisSystem(B, knots, degree, name=f"bspline(d={knot_distance:g},deg={degree})")


def identity_basis(grid):
    """Pointwise basis: one indicator per grid point."""
    grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
    m = grid.size
    return BasisSystem(np.eye(m), grid.probs.copy(), 1, name="pointwise")


def constant_basis(grid):
    """Single constant basis function, i.e. weights that do not vary over the grid."""
    grid = grid if isinstance(grid, ProbGrid) else ProbGrid(grid)
    return BasisSystem(np.ones((grid.size, 1)), np.array([0.0, 1.0]), 0, name="constant")


def pinv_init(basis, w0):
    """Map a prior weight surface to coefficient space by the pseudo-inverse."""
    w = w0.weights if isinstance(w0, WeightSurface) else np.asarray(w0, dtype=float)
    if w.shape[0] != basis.n_points:
        raise ValueError(f"prior has {w.shape[0]} rows, basis has {basis.n_points} grid points")
    return np.linalg.pinv(basis.B) @ w
