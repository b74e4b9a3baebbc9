"""Value types shared across the package.

Forecasts live on a probability grid: every expert reports one quantile per
grid probability at every time step.  All types are immutable after
construction (arrays are stored read-only).
"""

import json
from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a dimension or content invariant."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProbGrid:
    """Strictly increasing probabilities inside (0, 1)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(np.atleast_1d(self.probs))
        if probs.ndim != 1 or probs.size < 1:
            raise ValidationError("grid must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(probs)):
            raise ValidationError("grid contains non-finite probabilities")
        if np.any(probs <= 0.0) or np.any(probs >= 1.0):
            raise ValidationError("grid probabilities must lie strictly inside (0, 1)")
        if np.any(np.diff(probs) <= 0.0):
            raise ValidationError("grid not strictly increasing")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def percentiles(cls):
        return cls(np.arange(1, 100) / 100.0)

    @classmethod
    def equidistant(cls, m):
        return cls(np.arange(1, m + 1) / (m + 1.0))

    @property
    def size(self):
        return self.probs.size

    def __len__(self):
        return self.probs.size

    def __eq__(self, other):
        if not isinstance(other, ProbGrid):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.all(self.probs == other.probs))

    def __hash__(self):
        return hash(self.probs.tobytes())

    def to_json(self):
        # repr() of a Python float is the shortest string that parses back equal
        return json.dumps({"probs": [repr(float(p)) for p in self.probs]})

    @classmethod
    def from_json(cls, text):
        return cls([float(p) for p in json.loads(text)["probs"]])


@dataclass(frozen=True, eq=False)
class ExpertPanel:
    """Expert quantile predictions indexed (time, grid point, expert)."""

    values: np.ndarray
    expert_names: tuple = ()

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 3:
            raise ValidationError(f"panel must be 3-d (time, grid, expert), got {values.ndim}-d")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            raise ValidationError(f"non-finite panel entry at index {tuple(int(i) for i in bad[0])}")
        names = tuple(self.expert_names) or tuple(f"expert{k + 1}" for k in range(values.shape[2]))
        if len(names) != values.shape[2]:
            raise ValidationError(
                f"expert axis mismatch: {values.shape[2]} experts but {len(names)} names"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "expert_names", names)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_times(self):
        return self.values.shape[0]

    @property
    def n_experts(self):
        return self.values.shape[2]

    def __getitem__(self, t):
        return self.values[t]


@dataclass(frozen=True, eq=False)
class WeightSurface:
    """Combination weights indexed (grid point, expert).

    ``mode`` is one of

    * ``"convex"``: rows on the probability simplex,
    * ``"affine"``: rows sum to one, signs unconstrained (smoothed surfaces),
    * ``"linear"``: no constraint (unconstrained quantile regression).
    """

    weights: np.ndarray
    mode: str = "convex"

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 2:
            raise ValidationError("weight surface must be 2-d (grid, expert)")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weight surface contains non-finite entries")
        if self.mode not in ("convex", "affine", "linear"):
            raise ValidationError(f"unknown weight mode {self.mode!r}")
        if self.mode in ("convex", "affine"):
            dev = np.max(np.abs(w.sum(axis=1) - 1.0))
            if dev > 1e-8:
                raise ValidationError(f"weight rows do not sum to one (max deviation {dev:.3g})")
        if self.mode == "convex" and np.any(w < -1e-12):
            raise ValidationError("convex weight surface has negative entries")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, m, k):
        return cls(np.full((m, k), 1.0 / k))

    @property
    def shape(self):
        return self.weights.shape


@dataclass(frozen=True, eq=False)
class ObservationStream:
    y: np.ndarray
    timestamps: tuple = field(default=None)

    def __post_init__(self):
        y = _frozen(np.atleast_1d(self.y))
        if y.ndim != 1:
            raise ValidationError("observations must be 1-d")
        bad = np.flatnonzero(~np.isfinite(y))
        if bad.size:
            raise ValidationError(f"non-finite observation at index {int(bad[0])}")
        ts = self.timestamps
        if ts is not None:
            ts = tuple(ts)
            if len(ts) != y.size:
                raise ValidationError("timestamps length does not match observations")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return self.y.size


def validate_panel(panel, grid, obs):
    """Check that a panel, grid and observation stream fit together.

    Returns the triple unchanged; raises :class:`ValidationError` naming the
    offending axis otherwise.
    """
    if not isinstance(grid, ProbGrid):
        grid = ProbGrid(grid)
    if not isinstance(panel, ExpertPanel):
        panel = ExpertPanel(panel)
    if not isinstance(obs, ObservationStream):
        obs = ObservationStream(obs)
    t, m, _ = panel.shape
    if m != grid.size:
        raise ValidationError(f"grid axis mismatch: panel has {m} grid points, grid has {grid.size}")
    if t != len(obs):
        raise ValidationError(f"time axis mismatch: panel has {t} steps, observations have {len(obs)}")
    return panel, grid, obs
