"""Multinomial contingency-table model with independence nulls.

The data object is an array of cell counts; the log density is the
categorical (micro-data) form sum_c n_c log pi_c, so per-dataset, averaged
and stacked evaluations share the same additive convention.  The argument
``pi`` is not required to sum to one: evaluation at unnormalized values is
legitimate (and deliberately exercised by estimators that average fitted
parameters in nonlinear coordinates).

Nulls for a three-way table:

* ``full_independence``: pi_{abc} = pi_a pi_b pi_c;
* ``conditional_independence``: the two axes other than ``given_axis`` are
  independent given it, e.g. pi_{abc} = P(a) P(b|a) P(c|a) for
  ``given_axis = 0``.

Both have closed-form constrained MLEs built from the table margins.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import DegenerateDataError
from .base import LikelihoodModel


class MultinomialModel(LikelihoodModel):
    """Cell-probability model for an I x J x K table of counts."""

    psi_maps = ("identity", "logit", "ratio")

    def __init__(self, shape=(2, 2, 2), null: str = "full_independence", given_axis: int = 0):
        shape = tuple(int(s) for s in shape)
        if len(shape) != 3 or any(s < 2 for s in shape):
            raise ValueError(f"expected a three-way table shape, got {shape}")
        if null not in ("full_independence", "conditional_independence"):
            raise ValueError(f"unknown null {null!r}")
        if given_axis not in (0, 1, 2):
            raise ValueError(f"given_axis must be 0, 1 or 2, got {given_axis}")
        self.shape = shape
        self.null = null
        self.given_axis = given_axis
        cells = int(np.prod(shape))
        self.h = cells - 1
        if null == "full_independence":
            self.k = (cells - 1) - sum(s - 1 for s in shape)
        else:
            others = [s for axis, s in enumerate(shape) if axis != given_axis]
            self.k = (others[0] - 1) * (others[1] - 1) * shape[given_axis]

    def _check_counts(self, data) -> np.ndarray:
        counts = np.asarray(data, dtype=float)
        if counts.shape != self.shape:
            raise ValueError(f"expected counts of shape {self.shape}, got {counts.shape}")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValueError("cell counts must be finite and nonnegative")
        return counts

    # -- likelihood ------------------------------------------------------------

    def loglik(self, pi, data) -> float:
        counts = self._check_counts(data)
        pi = np.asarray(pi, dtype=float)
        if pi.shape != self.shape:
            raise ValueError(f"expected probabilities of shape {self.shape}")
        support = counts > 0
        if np.any(pi[support] <= 0) or not np.all(np.isfinite(pi)):
            raise ValueError("probabilities must be positive on observed cells")
        return float(np.sum(counts[support] * np.log(pi[support])))

    def mle(self, data, constrained: bool = False) -> np.ndarray:
        counts = self._check_counts(data)
        total = counts.sum()
        if total <= 0:
            raise DegenerateDataError("table has no observations")
        if not constrained:
            return counts / total
        if self.null == "full_independence":
            pi = np.ones(self.shape)
            for axis in range(3):
                keep = tuple(a for a in range(3) if a != axis)
                margin = counts.sum(axis=keep) / total
                shape = [1, 1, 1]
                shape[axis] = self.shape[axis]
                pi = pi * margin.reshape(shape)
            return pi
        # conditional independence of the other two axes given `given_axis`
        g = self.given_axis
        a, b = (axis for axis in range(3) if axis != g)
        n_ag = counts.sum(axis=b)  # margin over (a, g), original axis order
        n_bg = counts.sum(axis=a)  # margin over (b, g)
        n_g = counts.sum(axis=(a, b))
        # Broadcast each margin back to the full cube.
        expand_ag = [1, 1, 1]
        expand_bg = [1, 1, 1]
        expand_g = [1, 1, 1]
        expand_ag[a], expand_ag[g] = self.shape[a], self.shape[g]
        expand_bg[b], expand_bg[g] = self.shape[b], self.shape[g]
        expand_g[g] = self.shape[g]
        with np.errstate(divide="ignore", invalid="ignore"):
            pi = (
                n_ag.reshape(expand_ag)
                * n_bg.reshape(expand_bg)
                / (n_g.reshape(expand_g) * total)
            )
        return np.where(np.isfinite(pi), pi, 0.0)

    def averaged_mle(self, datasets, constrained: bool = False) -> np.ndarray:
        counts = np.mean([self._check_counts(x) for x in datasets], axis=0)
        return self.mle(counts, constrained=constrained)

    def lrt_stat(self, data) -> float:
        counts = self._check_counts(data)
        free = self.mle(counts, constrained=False)
        null = self.mle(counts, constrained=True)
        support = counts > 0
        return 2.0 * float(
            np.sum(counts[support] * np.log(free[support] / null[support]))
        )

    def averaged_lrt_stat(self, datasets) -> float:
        counts = np.mean([self._check_counts(x) for x in datasets], axis=0)
        return self.lrt_stat(counts)

    # Stacking tables concatenates the underlying categorical records,
    # which simply adds the counts.
    def stack(self, datasets):
        return np.sum([self._check_counts(x) for x in datasets], axis=0)

    # -- coordinate maps ----------------------------------------------------------

    def to_coords(self, pi, psi_map: str = "identity") -> np.ndarray:
        pi = np.asarray(pi, dtype=float)
        if psi_map == "identity":
            return pi.ravel().copy()
        if psi_map == "logit":
            if np.any(pi <= 0) or np.any(pi >= 1):
                raise ValueError("logit coordinates need probabilities in (0, 1)")
            return np.log(pi / (1.0 - pi)).ravel()
        if psi_map == "ratio":
            if self.shape[2] != 2:
                raise ValueError("ratio coordinates need a last axis of size 2")
            if np.any(pi[:, :, 0] <= 0):
                raise ValueError("ratio coordinates need positive reference cells")
            out = pi.copy()
            out[:, :, 1] = pi[:, :, 1] / pi[:, :, 0]
            return out.ravel()
        raise ValueError(f"unknown coordinate map {psi_map!r}")

    def from_coords(self, vec, psi_map: str = "identity") -> np.ndarray:
        table = np.asarray(vec, dtype=float).reshape(self.shape)
        if psi_map == "identity":
            return table
        if psi_map == "logit":
            return 1.0 / (1.0 + np.exp(-table))
        if psi_map == "ratio":
            out = table.copy()
            out[:, :, 1] = table[:, :, 1] * table[:, :, 0]
            return out
        raise ValueError(f"unknown coordinate map {psi_map!r}")
