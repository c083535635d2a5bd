"""Multivariate normal models with mean-constraint nulls.

Two nulls are supported on X_i iid N_p(mu, Sigma) with unrestricted Sigma:

* ``common_mean``: all components of mu are equal (to an unknown constant);
* ``zero_mean``: mu is the zero vector.

Both admit closed-form constrained and unconstrained MLEs, so every
likelihood quantity here is exact.  Writing delta = mu_hat - mu0_hat, the
constrained covariance MLE is Sigma_hat + delta delta^T and the
likelihood-ratio statistic is n log(1 + delta^T Sigma_hat^{-1} delta),
computed through log1p of a sum of squares so it can never round negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import DegenerateDataError, FactorizationError
from ..numkit import linalg
from .base import LikelihoodModel, WaldComponents

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MvnParams:
    """Mean vector and covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        p = self.mean.shape[0]
        if self.cov.shape != (p, p):
            raise ValueError(f"cov shape {self.cov.shape} does not match mean length {p}")


def _vech(a: np.ndarray) -> np.ndarray:
    rows, cols = np.tril_indices(a.shape[0])
    return a[rows, cols]


def _unvech(v: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros((p, p))
    rows, cols = np.tril_indices(p)
    out[rows, cols] = v
    out[cols, rows] = v
    return out


def _sym_sqrt(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Symmetric PSD square root (or inverse root) via eigendecomposition."""
    values, vectors = np.linalg.eigh(np.asarray(a, dtype=float))
    if np.any(values <= 0):
        raise FactorizationError("matrix has a non-positive eigenvalue")
    roots = 1.0 / np.sqrt(values) if inverse else np.sqrt(values)
    return (vectors * roots) @ vectors.T


class MvnModel(LikelihoodModel):
    """p-variate normal with a ``common_mean`` or ``zero_mean`` null."""

    psi_maps = ("identity", "noise_to_signal", "standardized")

    def __init__(self, p: int, null: str = "common_mean"):
        if p < 1:
            raise ValueError(f"dimension p must be >= 1, got {p}")
        if null not in ("common_mean", "zero_mean"):
            raise ValueError(f"unknown null {null!r}")
        if null == "common_mean" and p < 2:
            raise ValueError("the common-mean null needs p >= 2")
        self.p = p
        self.null = null
        self.h = p + p * (p + 1) // 2
        self.k = p - 1 if null == "common_mean" else p
        self.theta_maps = (
            ("difference", "ratio", "cubic") if null == "common_mean" else ("identity",)
        )

    # -- sufficient statistics -------------------------------------------------

    @staticmethod
    def _suffstats(data):
        x = np.asarray(data, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"expected an (n, p) data matrix, got shape {x.shape}")
        n = x.shape[0]
        return n, x.sum(axis=0), x.T @ x

    def _check_shape(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.p:
            raise ValueError(f"expected an (n, {self.p}) data matrix, got {x.shape}")
        return x

    # -- likelihood --------------------------------------------------------------

    def loglik(self, psi: MvnParams, data) -> float:
        x = self._check_shape(data)
        n, s1, s2 = self._suffstats(x)
        mu, cov = psi.mean, psi.cov
        # sum_i (x_i - mu)' cov^{-1} (x_i - mu) = tr(cov^{-1} M)
        m = s2 - np.outer(mu, s1) - np.outer(s1, mu) + n * np.outer(mu, mu)
        root = linalg.cholesky(cov)
        half = np.linalg.solve(root, np.linalg.solve(root, m).T)
        quad = float(np.trace(half))
        log_det = 2.0 * float(np.sum(np.log(np.diag(root))))
        return -0.5 * (n * (self.p * LOG_2PI + log_det) + quad)

    def _mle_from_stats(self, n, s1, s2, constrained):
        if n <= self.p:
            raise DegenerateDataError(
                f"need more rows than columns to fit: n={n}, p={self.p}"
            )
        mean = s1 / n
        cov = s2 / n - np.outer(mean, mean)
        cov = 0.5 * (cov + cov.T)
        try:
            linalg.cholesky(cov)
        except FactorizationError as err:
            raise DegenerateDataError(f"sample covariance is singular: {err}") from None
        if not constrained:
            return MvnParams(mean, cov)
        if self.null == "zero_mean":
            mean0 = np.zeros(self.p)
        else:
            ones = np.ones(self.p)
            solved = linalg.spd_solve(cov, np.column_stack([mean, ones]))
            mean0 = (ones @ solved[:, 0]) / (ones @ solved[:, 1]) * ones
        delta = mean - mean0
        return MvnParams(mean0, cov + np.outer(delta, delta))

    def mle(self, data, constrained: bool = False) -> MvnParams:
        n, s1, s2 = self._suffstats(self._check_shape(data))
        return self._mle_from_stats(n, s1, s2, constrained)

    def averaged_mle(self, datasets, constrained: bool = False) -> MvnParams:
        n, s1, s2 = self._averaged_stats(datasets)
        return self._mle_from_stats(n, s1, s2, constrained)

    def _averaged_stats(self, datasets):
        stats = [self._suffstats(self._check_shape(x)) for x in datasets]
        sizes = {n for n, _, _ in stats}
        if len(sizes) != 1:
            raise ValueError(f"datasets must share a row count, got {sorted(sizes)}")
        n = sizes.pop()
        s1 = np.mean([s for _, s, _ in stats], axis=0)
        s2 = np.mean([s for _, _, s in stats], axis=0)
        return n, s1, s2

    # Closed forms: the trace term equals n*p exactly at any profile MLE.
    def max_loglik2(self, data, constrained: bool = False) -> float:
        n, s1, s2 = self._suffstats(self._check_shape(data))
        fit = self._mle_from_stats(n, s1, s2, constrained)
        return -n * (self.p * LOG_2PI + linalg.log_det(fit.cov) + self.p)

    def lrt_stat(self, data) -> float:
        n, s1, s2 = self._suffstats(self._check_shape(data))
        return n * self._log_det_ratio(n, s1, s2)

    def averaged_lrt_stat(self, datasets) -> float:
        n, s1, s2 = self._averaged_stats(datasets)
        return n * self._log_det_ratio(n, s1, s2)

    def _log_det_ratio(self, n, s1, s2) -> float:
        free = self._mle_from_stats(n, s1, s2, constrained=False)
        null = self._mle_from_stats(n, s1, s2, constrained=True)
        delta = free.mean - null.mean
        return math.log1p(linalg.quad_form_inv(free.cov, delta))

    # -- Wald components ----------------------------------------------------------

    def wald_components(self, data, theta_map: str | None = None) -> WaldComponents:
        if theta_map is None:
            theta_map = self.theta_maps[0]
        if theta_map not in self.theta_maps:
            raise ValueError(
                f"estimand map {theta_map!r} not available for null {self.null!r}"
            )
        fit = self.mle(data)
        mu = fit.mean
        var_mu = fit.cov / np.asarray(data).shape[0]
        if theta_map == "identity":
            theta, jac = mu.copy(), np.eye(self.p)
        elif theta_map == "difference":
            theta = np.diff(mu)
            jac = np.zeros((self.p - 1, self.p))
            for i in range(self.p - 1):
                jac[i, i], jac[i, i + 1] = -1.0, 1.0
        elif theta_map == "ratio":
            if np.any(mu[:-1] == 0.0):
                raise FactorizationError("ratio estimand undefined at a zero mean")
            theta = mu[1:] / mu[:-1] - 1.0
            jac = np.zeros((self.p - 1, self.p))
            for i in range(self.p - 1):
                jac[i, i] = -mu[i + 1] / mu[i] ** 2
                jac[i, i + 1] = 1.0 / mu[i]
        elif theta_map == "cubic":
            theta = mu[1:] ** 3 - mu[:-1] ** 3
            jac = np.zeros((self.p - 1, self.p))
            for i in range(self.p - 1):
                jac[i, i] = -3.0 * mu[i] ** 2
                jac[i, i + 1] = 3.0 * mu[i + 1] ** 2
        else:
            raise ValueError(f"unknown estimand map {theta_map!r}")
        u = jac @ var_mu @ jac.T
        u = 0.5 * (u + u.T)
        linalg.cholesky(u)  # singular -> FactorizationError, caller may drop
        return WaldComponents(theta, u)

    # -- coordinate maps -------------------------------------------------------------

    def to_coords(self, psi: MvnParams, psi_map: str = "identity") -> np.ndarray:
        mu, cov = psi.mean, psi.cov
        if psi_map == "identity":
            return np.concatenate([mu, _vech(cov)])
        if psi_map == "noise_to_signal":
            if np.any(mu == 0.0):
                raise ValueError("noise-to-signal coordinates need nonzero means")
            return np.concatenate([np.sqrt(np.diag(cov)) / mu, _vech(cov)])
        if psi_map == "standardized":
            inv_root = _sym_sqrt(cov, inverse=True)
            return np.concatenate([inv_root @ mu, _vech(linalg.spd_inverse(cov))])
        raise ValueError(f"unknown coordinate map {psi_map!r}")

    def from_coords(self, vec: np.ndarray, psi_map: str = "identity") -> MvnParams:
        vec = np.asarray(vec, dtype=float)
        p = self.p
        head, tail = vec[:p], vec[p:]
        mat = _unvech(tail, p)
        if psi_map == "identity":
            return MvnParams(head, mat)
        if psi_map == "noise_to_signal":
            if np.any(head == 0.0):
                raise ValueError("noise-to-signal coordinates need nonzero entries")
            return MvnParams(np.sqrt(np.diag(mat)) / head, mat)
        if psi_map == "standardized":
            cov = linalg.spd_inverse(mat)
            return MvnParams(_sym_sqrt(cov) @ head, cov)
        raise ValueError(f"unknown coordinate map {psi_map!r}")
