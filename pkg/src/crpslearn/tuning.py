"""Online hyperparameter selection by past cumulative CRPS.

Every configuration is updated at every step.  The forecast issued at time t
comes from the configuration with the lowest cumulative loss up to t-1
(ties go to the configuration declared first).
"""

import itertools
import math

import numpy as np

from .boa import BoaBank, BoaConfig
from .loss import crps_grid

#: 0, 2^-4, ..., 2^13 and 2^30
LAMBDA_GRID = (0.0,) + tuple(float(2.0**x) for x in range(-4, 14)) + (float(2.0**30),)
#: 2^-15, ..., 2^25
LAMBDA_GRID_SIM = tuple(float(2.0**x) for x in range(-15, 26))
LAMBDA_CONSTANT = float(2.0**30)


def forget_grid(T):
    """``{0} U {2^x : x = -ceil(log2 T), ..., -1}``, no-forget first."""
    if T < 2:
        return (0.0,)
    lo = math.ceil(math.log2(T))
    return (0.0,) + tuple(float(2.0**x) for x in range(-lo, 0))


def boa_bank(grid, n_experts, basis, lambdas=(0.0,), alpha=0.5, forgets=(0.0,),
             fixed_shares=(0.0,), soft_thresholds=(0.0,), hard_thresholds=(0.0,), prior=None):
    """Cartesian grid of BOA configurations on one basis, as a single bank."""
    configs = [
        BoaConfig(basis, lam=lam, alpha=alpha, forget=xi, fixed_share=phi,
                  soft_threshold=nu, hard_threshold=kappa, prior=prior)
        for lam, xi, phi, nu, kappa in itertools.product(
            lambdas, forgets, fixed_shares, soft_thresholds, hard_thresholds)
    ]
    return BoaBank(configs, grid, n_experts)


class TuningGrid:
    """Select among the configurations of one or more banks by cumulative CRPS.

    A bank is anything with ``__len__``, ``labels``, ``predict_all(experts)``,
    ``update(experts, y)`` (returning the pre-update forecasts) and
    ``weights(i)``.
    """

    def __init__(self, members):
        members = list(members)
        if not members or sum(len(m) for m in members) == 0:
            raise ValueError("tuning grid needs at least one configuration")
        self.members = members
        self.grid = members[0].grid
        self._owner = []
        for mi, m in enumerate(members):
            self._owner.extend((mi, j) for j in range(len(m)))
        self.labels = [lab for m in members for lab in m.labels]
        self.cum_loss = np.zeros(len(self._owner))
        self.active_index = 0
        self.last_losses = None
        self.t = 0

    def __len__(self):
        return len(self._owner)

    @property
    def active_label(self):
        return self.labels[self.active_index]

    def weights(self, i=None):
        mi, j = self._owner[self.active_index if i is None else i]
        return self.members[mi].weights(j)

    def predict(self, experts):
        mi, j = self._owner[self.active_index]
        return self.members[mi].predict_all(experts)[j]

    def step(self, experts, y):
        """Issue the active forecast, then update every configuration with ``y``."""
        preds = np.concatenate([m.update(experts, y) for m in self.members], axis=0)
        forecast = preds[self.active_index]
        losses = np.atleast_1d(crps_grid(preds, y, self.grid))
        losses = np.where(np.isnan(losses), np.inf, losses)
        self.cum_loss += losses
        self.last_losses = losses
        self.active_index = int(np.argmin(self.cum_loss))
        self.t += 1
        return forecast
