"""Proper Bayesian imputation engines and the matching data generators.

Numeric datasets arrive as (n, p) arrays with NaN marking missing entries.
Each imputer validates that the missingness pattern matches what it knows
how to handle, draws parameters from the posterior given the observed part,
fills in the missing entries from the posterior predictive, and returns a
:class:`CompletedDatasets` whose observed entries are bit-identical to the
input across all copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateDataError
from .numkit import linalg, samplers
from .numkit.rng import RngStream, as_generator


@dataclass(frozen=True)
class MissingPattern:
    """Boolean observation mask (True = observed) plus a pattern tag."""

    mask: np.ndarray
    kind: str  # block_rows | monotone | cell_labels

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))


@dataclass(frozen=True)
class CompletedDatasets:
    """The m imputation-completed copies of one dataset."""

    datasets: tuple
    pattern: MissingPattern | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        if self.m < 2:
            raise ValueError(f"multiple imputation needs m >= 2, got m={self.m}")

    @property
    def m(self) -> int:
        return len(self.datasets)

    def __iter__(self):
        return iter(self.datasets)

    def __getitem__(self, index):
        return self.datasets[index]


@dataclass(frozen=True)
class ContingencyTable:
    """Fully labeled cell counts plus strata with one label missing.

    ``unlabeled`` maps the missing axis to a count array over the remaining
    axes (in their original order).
    """

    counts: np.ndarray
    unlabeled: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if np.any(counts < 0):
            raise ValueError("cell counts must be nonnegative")
        object.__setattr__(self, "counts", counts)
        fixed = {}
        for axis, margin in self.unlabeled.items():
            margin = np.asarray(margin, dtype=float)
            expect = tuple(s for a, s in enumerate(counts.shape) if a != int(axis))
            if margin.shape != expect:
                raise ValueError(
                    f"unlabeled margin for axis {axis} must have shape {expect}, "
                    f"got {margin.shape}"
                )
            fixed[int(axis)] = margin
        object.__setattr__(self, "unlabeled", fixed)


def _split_block_rows(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected an (n, p) matrix, got shape {x.shape}")
    observed_rows = np.all(np.isfinite(x), axis=1)
    missing_rows = np.all(np.isnan(x), axis=1)
    if not np.all(observed_rows | missing_rows):
        raise ValueError("block-row pattern requires fully observed or fully missing rows")
    return observed_rows


def impute_mvn_jeffreys(x_obs, m: int, rng: RngStream) -> CompletedDatasets:
    """Jeffreys-prior multivariate-normal imputation of fully missing rows.

    Posterior draws given the observed rows: the precision matrix is Wishart
    with n_obs - 1 degrees of freedom around the inverse scatter matrix, the
    mean is normal around the observed average with covariance Sigma/n_obs,
    and each missing row is an independent draw from the resulting normal.
    """
    if m < 2:
        raise ValueError(f"need m >= 2 imputations, got {m}")
    x = np.asarray(x_obs, dtype=float)
    observed_rows = _split_block_rows(x)
    obs = x[observed_rows]
    n_obs, p = obs.shape
    n_mis = int((~observed_rows).sum())
    if n_obs <= p:
        raise DegenerateDataError(f"need n_obs > p to impute, got n_obs={n_obs}, p={p}")

    pattern = MissingPattern(np.isfinite(x), "block_rows")
    if n_mis == 0:
        return CompletedDatasets(
            tuple(x.copy() for _ in range(m)),
            pattern,
            {"imputer": "mvn_jeffreys", "seed": rng.seed, "stream": rng.stream},
        )

    mean_obs = obs.mean(axis=0)
    centered = obs - mean_obs
    scatter = centered.T @ centered  # (n_obs - 1) * sample covariance
    scatter_inv = linalg.spd_inverse(scatter)

    gen = as_generator(rng)
    completed = []
    for _ in range(m):
        precision = samplers.wishart(n_obs - 1, scatter_inv, gen)
        sigma = linalg.spd_inverse(precision)
        sigma = 0.5 * (sigma + sigma.T)
        mu = samplers.multivariate_normal(mean_obs, sigma / n_obs, gen)
        filled = x.copy()
        filled[~observed_rows] = samplers.multivariate_normal(mu, sigma, gen, size=n_mis)
        completed.append(filled)
    return CompletedDatasets(
        tuple(completed),
        pattern,
        {"imputer": "mvn_jeffreys", "seed": rng.seed, "stream": rng.stream},
    )


def _monotone_order(mask: np.ndarray) -> np.ndarray:
    # Stable sort pushing rows with more observed entries first.
    return np.argsort(-mask.sum(axis=1), kind="stable")


def _check_monotone(mask: np.ndarray) -> None:
    n, p = mask.shape
    if not np.all(mask[:, 0]):
        raise ValueError("monotone pattern requires a fully observed first column")
    # Within a row, observing column j requires observing all columns before j.
    for j in range(1, p):
        if np.any(mask[:, j] & ~mask[:, j - 1]):
            raise ValueError("pattern is not monotone across columns")


def impute_monotone_regression(x_obs, m: int, rng: RngStream) -> CompletedDatasets:
    """Sequential normal-regression imputation for a monotone pattern.

    For each column j >= 2 (given all earlier columns): draw the residual
    variance from its scaled inverse chi-square posterior, draw the
    regression coefficients from their conditional normal, then draw the
    missing values from the predictive normal, using already-imputed values
    of earlier columns as regressors.
    """
    if m < 2:
        raise ValueError(f"need m >= 2 imputations, got {m}")
    x = np.asarray(x_obs, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"expected an (n, p) matrix, got shape {x.shape}")
    mask = np.isfinite(x)
    order = _monotone_order(mask)
    inverse_order = np.argsort(order)
    xs, ms = x[order], mask[order]
    _check_monotone(ms)
    n, p = xs.shape
    n_j = ms.sum(axis=0)  # observed count per column
    for j in range(1, p):
        if n_j[j] <= j + 1:
            raise DegenerateDataError(
                f"column {j} has {int(n_j[j])} complete cases; regression on "
                f"{j + 1} terms is not identifiable"
            )

    pattern = MissingPattern(mask, "monotone")

    # Complete-case least-squares fits do not depend on the imputation index.
    fits = {}
    for j in range(1, p):
        nj = int(n_j[j])
        design = np.column_stack([np.ones(nj), xs[:nj, :j]])
        response = xs[:nj, j]
        coef, *_ = np.linalg.lstsq(design, response, rcond=None)
        resid = response - design @ coef
        dof = nj - (j + 1)
        tau2_hat = float(resid @ resid) / dof
        if tau2_hat <= 0:
            raise DegenerateDataError(f"column {j} has zero residual variance")
        fits[j] = (nj, coef, tau2_hat, dof, linalg.spd_inverse(design.T @ design))

    gen = as_generator(rng)
    completed = []
    for _ in range(m):
        filled = xs.copy()
        for j in range(1, p):
            nj, coef, tau2_hat, dof, gram_inv = fits[j]
            tau2 = tau2_hat * dof / gen.chisquare(dof)
            beta = samplers.multivariate_normal(coef, tau2 * gram_inv, gen)
            if nj < n:
                predictors = np.column_stack([np.ones(n - nj), filled[nj:, :j]])
                filled[nj:, j] = predictors @ beta + np.sqrt(tau2) * gen.standard_normal(
                    n - nj
                )
        completed.append(filled[inverse_order])
    return CompletedDatasets(
        tuple(completed),
        pattern,
        {"imputer": "monotone_regression", "seed": rng.seed, "stream": rng.stream},
    )


def allocate_unlabeled(pi: np.ndarray, table: ContingencyTable, gen) -> np.ndarray:
    """Complete a table by multinomial allocation of its unlabeled strata.

    Each unlabeled unit keeps its observed coordinates; its missing label is
    drawn along the missing axis with the conditional probabilities induced
    by ``pi``.  A conditional probability vector like (1, 0) therefore sends
    every unit of its stratum to the first label.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != table.counts.shape:
        raise ValueError("cell probabilities must match the table shape")
    gen = as_generator(gen)
    filled = table.counts.copy()
    for axis, margin in sorted(table.unlabeled.items()):
        moved = np.moveaxis(pi, axis, 0)  # (levels, *rest)
        filled_moved = np.moveaxis(filled, axis, 0)
        for idx in np.ndindex(margin.shape):
            u = margin[idx]
            if u <= 0:
                continue
            cell_probs = moved[(slice(None), *idx)]
            total = cell_probs.sum()
            if total <= 0:
                raise DegenerateDataError(
                    f"all labeled cells empty for stratum {idx} on axis {axis}"
                )
            allocation = gen.multinomial(int(u), cell_probs / total)
            filled_moved[(slice(None), *idx)] += allocation
    return filled


def impute_multinomial_dirichlet(
    table: ContingencyTable, m: int, rng: RngStream
) -> CompletedDatasets:
    """Dirichlet-multinomial imputation of partially labeled counts.

    Cell probabilities are drawn from Dirichlet(counts + 1/2) over the fully
    labeled cells, then the unlabeled strata are completed by
    :func:`allocate_unlabeled`.
    """
    if m < 2:
        raise ValueError(f"need m >= 2 imputations, got {m}")
    counts = table.counts
    if counts.sum() <= 0:
        raise DegenerateDataError("no fully labeled observations")

    gen = as_generator(rng)
    completed = []
    for _ in range(m):
        pi = samplers.dirichlet(counts.ravel() + 0.5, gen).reshape(counts.shape)
        completed.append(allocate_unlabeled(pi, table, gen))
    return CompletedDatasets(
        tuple(completed),
        MissingPattern(np.ones_like(counts, dtype=bool), "cell_labels"),
        {"imputer": "multinomial_dirichlet", "seed": rng.seed, "stream": rng.stream},
    )


# ---------------------------------------------------------------------------
# experiment data generators


@dataclass(frozen=True)
class MvnExperimentConfig:
    """Equicorrelated normal population with a block of missing rows."""

    n: int = 100
    p: int = 2
    rho: float = 0.4
    sigma2: float = 5.0
    f: float = 0.5
    mu: tuple | None = None  # defaults to all ones

    def mean(self) -> np.ndarray:
        if self.mu is None:
            return np.ones(self.p)
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.p,):
            raise ValueError(f"mu must have length {self.p}")
        return mu

    def cov(self) -> np.ndarray:
        cov = self.sigma2 * (
            (1.0 - self.rho) * np.eye(self.p) + self.rho * np.ones((self.p, self.p))
        )
        linalg.cholesky(cov)  # not SPD -> FactorizationError
        return cov


def generate_mvn_experiment_data(config: MvnExperimentConfig, rng: RngStream):
    """Draw the population, blank out the trailing rows, return (data, truth)."""
    if not 0 < config.f < 1:
        raise ValueError(f"missing fraction must lie in (0, 1), got {config.f}")
    mean, cov = config.mean(), config.cov()
    n_obs = int(np.floor((1.0 - config.f) * config.n))
    if n_obs < 1 or n_obs >= config.n:
        raise ValueError(f"missing fraction {config.f} leaves n_obs={n_obs}")
    x = samplers.multivariate_normal(mean, cov, rng, size=config.n)
    x[n_obs:] = np.nan
    truth = {"mu": mean, "sigma": cov, "f": config.f, "n_obs": n_obs}
    return x, truth


@dataclass(frozen=True)
class MonotoneExperimentConfig:
    """AR-correlated normal population with logistic monotone missingness."""

    n: int = 500
    p: int = 5
    delta: float = 0.0
    alpha0: float = 2.0
    alpha1: float = -1.0

    def mean(self) -> np.ndarray:
        return self.delta * np.ones(self.p)

    def cov(self) -> np.ndarray:
        idx = np.arange(self.p)
        return 0.5 ** np.abs(idx[:, None] - idx[None, :])


def generate_monotone_experiment_data(config: MonotoneExperimentConfig, rng: RngStream):
    """Draw the population and knock out entries by a logistic propensity.

    Once a row goes missing at column j it stays missing at every later
    column; the first column is always observed.  The completed population
    is returned in the truth record for complete-data benchmarks.
    """
    gen = as_generator(rng)
    full = samplers.multivariate_normal(config.mean(), config.cov(), gen, size=config.n)
    observed = np.ones((config.n, config.p), dtype=bool)
    for j in range(1, config.p):
        alive = observed[:, j - 1]
        drop_prob = 1.0 / (1.0 + np.exp(config.alpha0 + config.alpha1 * full[:, j - 1]))
        dropped = gen.random(config.n) < drop_prob
        observed[:, j] = alive & ~dropped
    x = full.copy()
    x[~observed] = np.nan
    # Arrange rows so the pattern is monotone top to bottom.
    order = _monotone_order(observed)
    truth = {
        "mu": config.mean(),
        "sigma": config.cov(),
        "complete": full[order],
        "observed_fraction": observed.mean(axis=0),
    }
    return x[order], truth
