"""Complete-data likelihood procedures.

A :class:`LikelihoodModel` packages everything a pooled test needs from the
analyst's side for one parametric family and one null hypothesis: the exact
log density, constrained and unconstrained maximum likelihood, the
likelihood-ratio statistic, Wald components, and coordinate maps between
equivalent parametrizations of the full parameter.

Conventions shared by every model:

* ``loglik`` is the exact log density (up to an additive constant that does
  not depend on the parameter and is the same for every dataset of the same
  shape), so differences of log likelihoods are exact.
* ``max_loglik2`` returns twice the maximized log likelihood, i.e. the value
  a standard "deviance of the fitted model" routine would report.  The
  likelihood-ratio statistic is ``max_loglik2(free) - max_loglik2(null)``.
* ``averaged_mle`` maximizes the average of the per-dataset log likelihoods,
  which for row-independent models coincides with the MLE of the stacked
  dataset but is computed through per-dataset sufficient statistics.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WaldComponents:
    """Point estimate of the estimand and an estimate of its variance."""

    theta_hat: np.ndarray
    u: np.ndarray  # estimated Var(theta_hat), symmetric


class LikelihoodModel(ABC):
    """One sampling model plus one null constraint on its estimand."""

    #: dimension of the full parameter
    h: int
    #: dimension of the estimand pinned down by the null
    k: int

    # -- core likelihood interface ------------------------------------------

    @abstractmethod
    def loglik(self, psi, data) -> float:
        """Exact log density of ``data`` at ``psi``."""

    @abstractmethod
    def mle(self, data, constrained: bool = False):
        """Maximizer of ``loglik``; under the null when ``constrained``."""

    @abstractmethod
    def averaged_mle(self, datasets, constrained: bool = False):
        """Maximizer of the average of the per-dataset log likelihoods."""

    # -- derived quantities --------------------------------------------------

    def max_loglik2(self, data, constrained: bool = False) -> float:
        """Twice the maximized log likelihood."""
        return 2.0 * self.loglik(self.mle(data, constrained=constrained), data)

    def lrt_stat(self, data) -> float:
        """Likelihood-ratio statistic 2 log{sup_free L / sup_null L} >= 0."""
        return self.max_loglik2(data, constrained=False) - self.max_loglik2(
            data, constrained=True
        )

    def averaged_loglik(self, psi, datasets) -> float:
        return float(np.mean([self.loglik(psi, x) for x in datasets]))

    def averaged_lrt_stat(self, datasets) -> float:
        """2 {max averaged loglik (free) - max averaged loglik (null)}."""
        free = self.averaged_mle(datasets, constrained=False)
        null = self.averaged_mle(datasets, constrained=True)
        return 2.0 * (
            self.averaged_loglik(free, datasets) - self.averaged_loglik(null, datasets)
        )

    # -- stacking -------------------------------------------------------------

    def stack(self, datasets):
        """Concatenate datasets into one big dataset, first block first."""
        return np.concatenate([np.asarray(x) for x in datasets], axis=0)

    # -- parametrizations ------------------------------------------------------

    #: coordinate maps accepted by to_coords/from_coords
    psi_maps: tuple = ("identity",)

    def to_coords(self, psi, psi_map: str = "identity") -> np.ndarray:
        """Flatten ``psi`` into the chosen coordinate system."""
        raise ValueError(f"{type(self).__name__} has no coordinate map {psi_map!r}")

    def from_coords(self, vec: np.ndarray, psi_map: str = "identity"):
        """Inverse of :meth:`to_coords`; the result may sit outside the
        parameter space when the coordinates were averaged across fits."""
        raise ValueError(f"{type(self).__name__} has no coordinate map {psi_map!r}")

    # -- Wald side --------------------------------------------------------------

    def wald_components(self, data, theta_map: str = "identity") -> WaldComponents:
        raise ValueError(f"{type(self).__name__} does not provide Wald components")


def reparametrize(model: LikelihoodModel, psi, psi_map: str, direction: str = "forward"):
    """Map a parameter to coordinates (``forward``) or back (``inverse``)."""
    if direction == "forward":
        return model.to_coords(psi, psi_map)
    if direction == "inverse":
        return model.from_coords(psi, psi_map)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
