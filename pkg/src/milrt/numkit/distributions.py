"""Chi-square and F reference distributions.

``FDist`` accepts an infinite denominator degrees of freedom, in which case
it degenerates to the scaled chi-square limit: F(x; k, inf) = P(chi2_k <= k x).
That branch is what every pooled test falls back to when the estimated odds
of missing information is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import stats as _st


def _check_q(q: float) -> None:
    if not 0 < q < 1:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")


@dataclass(frozen=True)
class ChiSquare:
    """Chi-square distribution with ``df`` degrees of freedom."""

    df: float

    def __post_init__(self):
        if not self.df > 0:
            raise ValueError(f"chi-square df must be positive, got {self.df}")

    def cdf(self, x: float) -> float:
        return float(_st.chi2.cdf(x, self.df))

    def sf(self, x: float) -> float:
        return float(_st.chi2.sf(x, self.df))

    def quantile(self, q: float) -> float:
        _check_q(q)
        return float(_st.chi2.ppf(q, self.df))

    def sample(self, generator, size=None):
        return generator.chisquare(self.df, size=size)


@dataclass(frozen=True)
class FDist:
    """F distribution; ``df2 = math.inf`` selects the chi2_{df1}/df1 limit."""

    df1: float
    df2: float

    def __post_init__(self):
        if not self.df1 > 0:
            raise ValueError(f"F numerator df must be positive, got {self.df1}")
        if not self.df2 > 0:
            raise ValueError(f"F denominator df must be positive, got {self.df2}")

    @property
    def is_chisq_limit(self) -> bool:
        return math.isinf(self.df2)

    def cdf(self, x: float) -> float:
        if self.is_chisq_limit:
            return float(_st.chi2.cdf(self.df1 * x, self.df1))
        return float(_st.f.cdf(x, self.df1, self.df2))

    def sf(self, x: float) -> float:
        if self.is_chisq_limit:
            return float(_st.chi2.sf(self.df1 * x, self.df1))
        return float(_st.f.sf(x, self.df1, self.df2))

    def quantile(self, q: float) -> float:
        _check_q(q)
        if self.is_chisq_limit:
            return float(_st.chi2.ppf(q, self.df1)) / self.df1
        return float(_st.f.ppf(q, self.df1, self.df2))
