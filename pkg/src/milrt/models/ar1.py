"""Stationary first-order autoregressive model, testing zero autocorrelation.

The series has X_1 ~ N(0, v^2) with v^2 = sigma^2 (1 + phi) / (1 - phi) and
X_i | X_{i-1} ~ N(phi X_{i-1}, sigma^2).  The rows of a dataset are NOT
independent, so the stacked concatenation of several series is a different
dataset from their collection: its likelihood carries one initial term and
cross-boundary innovation terms.  That gap is the whole point of keeping
this model around.

Profiling out sigma^2 reduces every fit to a bounded one-dimensional search
over phi.  The null (phi = 0) value is always evaluated as a candidate, so
the free maximum can never fall below the constrained one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..exceptions import ConvergenceError, DegenerateDataError
from .base import LikelihoodModel

LOG_2PI = math.log(2.0 * math.pi)
_PHI_EDGE = 1.0 - 1e-8


@dataclass(frozen=True)
class Ar1Params:
    phi: float
    sigma2: float


@dataclass(frozen=True)
class _Ar1Stats:
    """Sufficient statistics of one (or an average of) series."""

    n: int  # series length entering the -(n/2) log sigma^2 slots
    head_sq: float  # squared first observation (averaged if needed)
    s_yy: float
    s_xy: float
    s_xx: float

    def sse(self, phi: float) -> float:
        return self.s_yy - 2.0 * phi * self.s_xy + phi * phi * self.s_xx


def _stats_of(x: np.ndarray) -> _Ar1Stats:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 3:
        raise ValueError(f"need a series of length >= 3, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series must be finite")
    y, z = x[1:], x[:-1]
    return _Ar1Stats(
        n=x.size,
        head_sq=float(x[0] ** 2),
        s_yy=float(y @ y),
        s_xy=float(y @ z),
        s_xx=float(z @ z),
    )


class Ar1Model(LikelihoodModel):
    """AR(1) with null phi = 0 and nuisance innovation variance."""

    h = 2
    k = 1
    psi_maps = ("identity",)

    def loglik(self, psi: Ar1Params, data) -> float:
        phi, sigma2 = psi.phi, psi.sigma2
        if not abs(phi) < 1.0:
            raise ValueError(f"|phi| must be < 1, got {phi}")
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        st = _stats_of(data)
        g = (1.0 + phi) / (1.0 - phi)
        v2 = sigma2 * g
        return (
            -0.5 * st.n * LOG_2PI
            - 0.5 * math.log(v2)
            - st.head_sq / (2.0 * v2)
            - 0.5 * (st.n - 1) * math.log(sigma2)
            - st.sse(phi) / (2.0 * sigma2)
        )

    # -- profile fitting -----------------------------------------------------

    @staticmethod
    def _profile_sigma2(st: _Ar1Stats, phi: float) -> float:
        g = (1.0 + phi) / (1.0 - phi)
        return (st.head_sq / g + st.sse(phi)) / st.n

    @classmethod
    def _profile_value(cls, st: _Ar1Stats, phi: float) -> float:
        sigma2 = cls._profile_sigma2(st, phi)
        if sigma2 <= 0:
            return -math.inf
        g = (1.0 + phi) / (1.0 - phi)
        return -0.5 * (
            st.n * (LOG_2PI + math.log(sigma2) + 1.0) + math.log(g)
        )

    def _fit_stats(self, st: _Ar1Stats, constrained: bool) -> Ar1Params:
        if constrained:
            sigma2 = self._profile_sigma2(st, 0.0)
            if sigma2 <= 0:
                raise DegenerateDataError("series has zero variance")
            return Ar1Params(0.0, sigma2)
        result = minimize_scalar(
            lambda phi: -self._profile_value(st, phi),
            bounds=(-_PHI_EDGE, _PHI_EDGE),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if not result.success:
            raise ConvergenceError(
                "profile search over phi did not converge",
                last_iterate=Ar1Params(float(result.x), self._profile_sigma2(st, float(result.x))),
            )
        # The least-squares slope and the null are cheap safety candidates.
        candidates = [float(result.x), 0.0]
        if st.s_xx > 0:
            candidates.append(float(np.clip(st.s_xy / st.s_xx, -_PHI_EDGE, _PHI_EDGE)))
        phi = max(candidates, key=lambda value: self._profile_value(st, value))
        sigma2 = self._profile_sigma2(st, phi)
        if sigma2 <= 0:
            raise DegenerateDataError("series has zero variance")
        return Ar1Params(phi, sigma2)

    def mle(self, data, constrained: bool = False) -> Ar1Params:
        return self._fit_stats(_stats_of(data), constrained)

    def averaged_mle(self, datasets, constrained: bool = False) -> Ar1Params:
        return self._fit_stats(self._averaged_stats(datasets), constrained)

    # Evaluate maxima through the profile so the free value can never fall
    # below the null value (phi = 0 is always among the free candidates).
    def max_loglik2(self, data, constrained: bool = False) -> float:
        st = _stats_of(data)
        fit = self._fit_stats(st, constrained)
        return 2.0 * self._profile_value(st, fit.phi)

    def averaged_lrt_stat(self, datasets) -> float:
        st = self._averaged_stats(datasets)
        free = self._fit_stats(st, constrained=False)
        null = self._fit_stats(st, constrained=True)
        return 2.0 * (self._profile_value(st, free.phi) - self._profile_value(st, null.phi))

    def _averaged_stats(self, datasets) -> _Ar1Stats:
        stats = [_stats_of(x) for x in datasets]
        if len({st.n for st in stats}) != 1:
            raise ValueError("series must share a common length")
        return _Ar1Stats(
            n=stats[0].n,
            head_sq=float(np.mean([st.head_sq for st in stats])),
            s_yy=float(np.mean([st.s_yy for st in stats])),
            s_xy=float(np.mean([st.s_xy for st in stats])),
            s_xx=float(np.mean([st.s_xx for st in stats])),
        )

    def averaged_loglik(self, psi: Ar1Params, datasets) -> float:
        return float(np.mean([self.loglik(psi, x) for x in datasets]))

    def stack(self, datasets):
        return np.concatenate([np.asarray(x, dtype=float).ravel() for x in datasets])

    # -- coordinates ------------------------------------------------------------

    def to_coords(self, psi: Ar1Params, psi_map: str = "identity") -> np.ndarray:
        if psi_map != "identity":
            raise ValueError(f"unknown coordinate map {psi_map!r}")
        return np.array([psi.phi, psi.sigma2])

    def from_coords(self, vec, psi_map: str = "identity") -> Ar1Params:
        if psi_map != "identity":
            raise ValueError(f"unknown coordinate map {psi_map!r}")
        vec = np.asarray(vec, dtype=float)
        return Ar1Params(float(vec[0]), float(vec[1]))
