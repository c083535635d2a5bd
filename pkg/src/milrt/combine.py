"""Pooling machinery for multiply imputed hypothesis tests.

Given m completed datasets, a test is assembled from three ingredients:

1. a pooled statistic (a Wald form, an average of per-dataset
   likelihood-ratio statistics, or a likelihood-ratio statistic of the
   stacked / averaged likelihood);
2. an estimate of the finite-m odds of missing information ``r`` (the
   between- to within-imputation variability ratio) used to deflate the
   statistic; and
3. an F reference distribution whose denominator degrees of freedom are a
   function of ``r``.

The public entry point :func:`run_test` dispatches the supported method
matrix (W1..W6, L0..L7) to those ingredients.  The stacked-dataset
algorithms (:func:`stacked_plus_test`, :func:`stacked_robust_test`) need
only a standard complete-data likelihood routine applied once per dataset
and once to the stacked dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FactorizationError
from .imputers import CompletedDatasets
from .models.base import LikelihoodModel, WaldComponents
from .numkit import linalg
from .numkit.distributions import ChiSquare, FDist
from .numkit.rng import as_generator

WALD_METHODS = ("W1", "W2", "W3", "W4", "W5", "W6")
LRT_METHODS = ("L0", "L1", "L2", "L3", "L4", "L5", "L6", "L7")
ALL_METHODS = WALD_METHODS + LRT_METHODS

#: methods defined only with the classical reference distribution
_NO_PROPOSED_DF = {"W2", "W3", "W5", "W6"}
#: methods whose statistic may legitimately come out negative
_MAY_BE_NEGATIVE = {"W5", "W6", "L1", "L3"}


def normalize_method(method: str) -> str:
    name = method.replace("-", "").replace("_", "").upper()
    if name not in ALL_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {ALL_METHODS}")
    return name


# ---------------------------------------------------------------------------
# pooled moments


@dataclass(frozen=True)
class PooledMoments:
    """Combined point estimates and variance components across imputations."""

    theta_bar: np.ndarray
    u_bar: np.ndarray
    b: np.ndarray  # between-imputation variance (m - 1 divisor)
    t: np.ndarray  # total variance u_bar + (1 + 1/m) b
    m: int
    k: int


def pool_moments(components: list[WaldComponents]) -> PooledMoments:
    """Average estimates and variances; form the between/total decomposition."""
    m = len(components)
    if m < 2:
        raise ValueError(f"need at least two imputations to pool, got {m}")
    thetas = np.array([np.asarray(c.theta_hat, dtype=float) for c in components])
    if thetas.ndim != 2:
        raise ValueError("estimates must be one-dimensional and conformable")
    us = np.array([np.asarray(c.u, dtype=float) for c in components])
    k = thetas.shape[1]
    if us.shape != (m, k, k):
        raise ValueError("variance estimates must be (k, k) and conformable")
    theta_bar = thetas.mean(axis=0)
    u_bar = us.mean(axis=0)
    centered = thetas - theta_bar
    b = centered.T @ centered / (m - 1)
    t = u_bar + (1.0 + 1.0 / m) * b
    return PooledMoments(theta_bar, u_bar, b, t, m, k)


def wald_stat(theta: np.ndarray, u: np.ndarray, theta0=None) -> float:
    """Quadratic form (theta - theta0)' u^{-1} (theta - theta0)."""
    theta = np.asarray(theta, dtype=float)
    delta = theta if theta0 is None else theta - np.asarray(theta0, dtype=float)
    return linalg.quad_form_inv(u, delta)


# ---------------------------------------------------------------------------
# estimators of the odds of missing information


@dataclass(frozen=True)
class FmiEstimate:
    """An estimate of the odds of missing information r (FMI = r/(1+r))."""

    value: float
    method: str
    dim_basis: str = "k"  # which dimension scales the estimator: k or h

    @property
    def negative(self) -> bool:
        return self.value < 0

    def clamped(self) -> "FmiEstimate":
        return FmiEstimate(max(0.0, self.value), self.method + "_plus", self.dim_basis)


def _scale(m: int, dim: int) -> float:
    return (m + 1.0) / (dim * (m - 1.0))


def estimate_r_wald_prime(pooled: PooledMoments) -> FmiEstimate:
    """Trace form (1 + 1/m) tr(u_bar^{-1} b) / k; never negative."""
    root = linalg.cholesky(pooled.u_bar)
    half = np.linalg.solve(root, np.linalg.solve(root, pooled.b).T)
    value = (1.0 + 1.0 / pooled.m) * float(np.trace(half)) / pooled.k
    return FmiEstimate(value, "wt_prime")


def estimate_r_wald_moment1(d_stats, k: int) -> FmiEstimate:
    """Method-of-moments estimator from the per-dataset Wald statistics."""
    d = np.asarray(d_stats, dtype=float)
    m = d.size
    if m < 2:
        raise ValueError("need at least two Wald statistics")
    s2 = float(d.var(ddof=1))
    d_bar = float(d.mean())
    inner = max(0.0, 4.0 * d_bar**2 - 2.0 * k * s2)
    denom = 2.0 * d_bar + math.sqrt(inner)
    if denom <= 0:
        return FmiEstimate(0.0, "wt_1")
    return FmiEstimate((1.0 + 1.0 / m) * s2 / denom, "wt_1")


def estimate_r_wald_moment_half(d_stats) -> FmiEstimate:
    """Method-of-moments estimator from the root Wald statistics."""
    d = np.asarray(d_stats, dtype=float)
    if d.size < 2:
        raise ValueError("need at least two Wald statistics")
    if np.any(d < 0):
        raise ValueError("Wald statistics must be nonnegative")
    s2 = float(np.sqrt(d).var(ddof=1))
    return FmiEstimate((1.0 + 1.0 / d.size) * s2, "wt_half")


def estimate_r_averaged(model, datasets) -> tuple[FmiEstimate, float]:
    """Contrast of per-dataset and averaged-likelihood LRT statistics.

    Returns the estimate together with the averaged-likelihood statistic it
    was derived from.
    """
    data = list(datasets)
    d_bar = float(np.mean([model.lrt_stat(x) for x in data]))
    d_avg = model.averaged_lrt_stat(data)
    value = _scale(len(data), model.k) * (d_bar - d_avg)
    return FmiEstimate(value, "avg"), d_avg


def estimate_r_robust(model, datasets) -> FmiEstimate:
    """Nonnegative full-parameter estimator from the averaged likelihood.

    Measures how much each per-dataset fit beats the common averaged fit on
    its own dataset; consistent under both hypotheses when every component
    of the full parameter loses the same information fraction.
    """
    data = list(datasets)
    m = len(data)
    free = model.averaged_mle(data, constrained=False)
    fitted2_bar = float(np.mean([model.max_loglik2(x) for x in data]))
    fitted2_avg = 2.0 * model.averaged_loglik(free, data)
    value = _scale(m, model.h) * (fitted2_bar - fitted2_avg)
    return FmiEstimate(value, "rob", dim_basis="h")


def estimate_r_stacked(model, datasets) -> tuple[FmiEstimate, float]:
    """Stacked-dataset version of :func:`estimate_r_averaged`."""
    data = list(datasets)
    m = len(data)
    d_bar = float(np.mean([model.lrt_stat(x) for x in data]))
    d_stack = model.lrt_stat(model.stack(data)) / m
    value = _scale(m, model.k) * (d_bar - d_stack)
    return FmiEstimate(value, "stack"), d_stack


def estimate_r_stacked_robust(model, datasets) -> tuple[FmiEstimate, float]:
    """Stacked-dataset version of :func:`estimate_r_robust`.

    Returns the estimate together with the stacked LRT statistic, which is
    what :func:`stacked_robust_test` refers to the F distribution.
    """
    data = list(datasets)
    m = len(data)
    fitted2_bar = float(np.mean([model.max_loglik2(x) for x in data]))
    big = model.stack(data)
    fitted2_stack = model.max_loglik2(big) / m
    d_stack = model.lrt_stat(big) / m
    value = _scale(m, model.h) * (fitted2_bar - fitted2_stack)
    return FmiEstimate(value, "stack_rob", dim_basis="h"), d_stack


def estimate_r_legacy(model, datasets, psi_map: str = "identity"):
    """Average-the-fits estimator and its pooled statistic.

    Per-dataset constrained and unconstrained MLEs are pushed through the
    chosen coordinate map, averaged coordinate-wise, mapped back, and the
    resulting pair is evaluated on every dataset.  The outcome depends on
    the coordinate map and can be negative; both facts are the reason the
    averaged/stacked estimators above exist.

    Returns ``(estimate, d_tilde)`` where ``d_tilde`` is the evaluated
    pooled statistic.
    """
    data = list(datasets)
    m = len(data)
    free_coords = np.mean(
        [model.to_coords(model.mle(x), psi_map) for x in data], axis=0
    )
    null_coords = np.mean(
        [model.to_coords(model.mle(x, constrained=True), psi_map) for x in data], axis=0
    )
    psi_bar = model.from_coords(free_coords, psi_map)
    psi0_bar = model.from_coords(null_coords, psi_map)
    d_tilde = float(
        np.mean([2.0 * (model.loglik(psi_bar, x) - model.loglik(psi0_bar, x)) for x in data])
    )
    d_bar = float(np.mean([model.lrt_stat(x) for x in data]))
    value = _scale(m, model.k) * (d_bar - d_tilde)
    return FmiEstimate(value, "legacy"), d_tilde


def estimate_r_perturbation(model, datasets, psi_map: str = "identity") -> FmiEstimate:
    """Nonnegative estimator from null fits shifted by the averaged contrast.

    Each per-dataset null fit is translated, in the chosen coordinates, by
    the gap between the averaged free and averaged null fits; the average of
    the resulting pseudo likelihood-ratio statistics is nonnegative by
    construction because the free fit maximizes its own dataset's
    likelihood.  The value depends on the coordinate system (the
    construction is only affine-invariant); a bounded parameter space may
    need coordinates under which translation cannot leave the domain, e.g.
    ``logit`` for cell probabilities.
    """
    data = list(datasets)
    m = len(data)
    shift = model.to_coords(model.averaged_mle(data), psi_map) - model.to_coords(
        model.averaged_mle(data, constrained=True), psi_map
    )
    total = 0.0
    for x in data:
        free = model.mle(x)
        null = model.mle(x, constrained=True)
        shifted = model.from_coords(model.to_coords(null, psi_map) + shift, psi_map)
        total += 2.0 * (model.loglik(free, x) - model.loglik(shifted, x))
    return FmiEstimate(_scale(m, model.k) * (total / m), "pert")


def estimate_r(method: str, *, model=None, datasets=None, pooled=None, wald_stats=None):
    """Dispatch on the estimator tag; see the individual functions."""
    wald_needs = {"wt_prime": pooled, "wt_1": wald_stats, "wt_half": wald_stats}
    if method in wald_needs:
        if wald_needs[method] is None:
            raise ValueError(f"estimator {method!r} needs pooled Wald inputs")
    elif model is None or datasets is None:
        raise ValueError(f"estimator {method!r} needs a model and completed datasets")
    if method == "wt_prime":
        return estimate_r_wald_prime(pooled)
    if method == "wt_1":
        return estimate_r_wald_moment1(wald_stats, pooled.k if pooled else model.k)
    if method == "wt_half":
        return estimate_r_wald_moment_half(wald_stats)
    if method == "legacy":
        return estimate_r_legacy(model, datasets)[0]
    if method == "legacy_plus":
        return estimate_r_legacy(model, datasets)[0].clamped()
    if method == "avg":
        return estimate_r_averaged(model, datasets)[0]
    if method == "avg_plus":
        return estimate_r_averaged(model, datasets)[0].clamped()
    if method == "rob":
        return estimate_r_robust(model, datasets)
    if method == "stack":
        return estimate_r_stacked(model, datasets)[0]
    if method == "stack_plus":
        return estimate_r_stacked(model, datasets)[0].clamped()
    if method == "stack_rob":
        return estimate_r_stacked_robust(model, datasets)[0]
    if method == "pert":
        return estimate_r_perturbation(model, datasets)
    raise ValueError(f"unknown estimator tag {method!r}")


# ---------------------------------------------------------------------------
# degrees of freedom and reference distributions

DF_KINDS = ("classic", "classic_prime", "proposed")


def df_denominator(kind: str, r: float, dim: int, m: int) -> float:
    """Denominator degrees of freedom of the F reference distribution.

    ``classic`` is the branch formula on dim*(m-1); ``classic_prime`` its
    moment-estimator variant; ``proposed`` the squared-inflation formula
    dim*(m-1)*((1+r)/r)^2.  Nonpositive ``r`` yields ``inf`` (the
    chi-square limit).
    """
    if m <= 1:
        raise ValueError(f"need m > 1, got {m}")
    if dim < 1:
        raise ValueError(f"need dim >= 1, got {dim}")
    if kind not in DF_KINDS:
        raise ValueError(f"unknown df kind {kind!r}; expected one of {DF_KINDS}")
    if r <= 0.0:
        return math.inf
    if kind == "proposed":
        return ((1.0 + r) / r) ** 2 * dim * (m - 1)
    if kind == "classic_prime":
        return (m - 1) * (1.0 + 1.0 / r) ** 2 * dim ** (-3.0 / m)
    big_k = dim * (m - 1)
    if big_k > 4:
        return 4.0 + (big_k - 4.0) * (1.0 + (1.0 - 2.0 / big_k) / r) ** 2
    return (m - 1) * (1.0 + 1.0 / r) ** 2 * (dim + 1) / 2.0


# ---------------------------------------------------------------------------
# test assembly


@dataclass(frozen=True)
class TestResult:
    """One pooled test: statistic, reference distribution, p-value."""

    method: str
    statistic: float
    k: int
    df2: float  # may be math.inf
    p_value: float
    r: FmiEstimate | None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "k": self.k,
            "df2": None if math.isinf(self.df2) else self.df2,
            "df2_infinite": math.isinf(self.df2),
            "p_value": self.p_value,
            "r": None if self.r is None else self.r.value,
            "r_method": None if self.r is None else self.r.method,
            "diagnostics": dict(self.diagnostics),
        }


def _finish(method, statistic, k, m, r_for_df, dim, df_variant, r_est, extra=None):
    kind_original = "classic_prime" if method in _NO_PROPOSED_DF else "classic"
    if df_variant == "proposed" and method in _NO_PROPOSED_DF:
        raise ValueError(f"method {method} has no proposed reference distribution")
    kind = kind_original if df_variant == "original" else "proposed"
    df2 = df_denominator(kind, r_for_df, dim, m)
    negative = statistic < 0
    if negative and method not in _MAY_BE_NEGATIVE:
        raise AssertionError(f"method {method} produced a negative statistic")
    p_value = 1.0 if negative else FDist(k, df2).sf(statistic)
    diagnostics = {
        "df_variant": df_variant,
        "negative_statistic": negative,
        "r_nonpositive": r_for_df <= 0.0,
    }
    if extra:
        diagnostics.update(extra)
    return TestResult(method, float(statistic), k, df2, p_value, r_est, diagnostics)


def _default_variant(method: str, df_variant: str | None) -> str:
    if df_variant is None:
        return "original" if method in _NO_PROPOSED_DF else "proposed"
    if df_variant not in ("original", "proposed"):
        raise ValueError(f"df variant must be 'original' or 'proposed', got {df_variant!r}")
    return df_variant


def stacked_plus_test(model, datasets, df_variant="proposed") -> TestResult:
    """Pooled LRT from the stacked dataset with the clamped odds estimate.

    Needs only the complete-data LRT routine: once per dataset and once on
    the stacked dataset.
    """
    r_signed, d_stack = estimate_r_stacked(model, datasets)
    r_plus = r_signed.clamped()
    statistic = d_stack / (model.k * (1.0 + r_plus.value))
    return _finish(
        "L4", statistic, model.k, len(list(datasets)), r_plus.value, model.k,
        _default_variant("L4", df_variant), r_plus,
        extra={"r_signed": r_signed.value, "d_stack": d_stack},
    )


def stacked_robust_test(model, datasets, df_variant="proposed") -> TestResult:
    """Pooled LRT from the stacked dataset with the robust odds estimate.

    Needs the complete-data LRT routine and the fitted log-likelihood
    routine, each applied per dataset and to the stacked dataset.  The odds
    estimate is nonnegative for any data and remains consistent under the
    alternative.
    """
    r_rob, d_stack = estimate_r_stacked_robust(model, datasets)
    statistic = d_stack / (model.k * (1.0 + r_rob.value))
    return _finish(
        "L5", statistic, model.k, len(list(datasets)), r_rob.value, model.h,
        _default_variant("L5", df_variant), r_rob,
        extra={"d_stack": d_stack},
    )


def _wald_test(method, model, datasets, theta_map, df_variant):
    components, dropped = [], 0
    for x in datasets:
        try:
            components.append(model.wald_components(x, theta_map))
        except FactorizationError:
            dropped += 1
    if len(components) < 2:
        raise ValueError(
            f"only {len(components)} usable imputations after dropping {dropped}"
        )
    pooled = pool_moments(components)
    m, k = pooled.m, pooled.k
    d_scalars = [wald_stat(c.theta_hat, c.u) for c in components]
    d_tilde_prime = wald_stat(pooled.theta_bar, pooled.u_bar)

    if method in ("W1", "W4"):
        r_est = estimate_r_wald_prime(pooled)
    elif method in ("W2", "W5"):
        r_est = estimate_r_wald_moment1(d_scalars, k)
    else:
        r_est = estimate_r_wald_moment_half(d_scalars)

    if method == "W4":
        statistic = wald_stat(pooled.theta_bar, pooled.t) / k
    elif method in ("W5", "W6"):
        d_bar = float(np.mean(d_scalars))
        statistic = (d_bar - k * (m - 1) / (m + 1) * r_est.value) / (
            k * (1.0 + r_est.value)
        )
    else:
        statistic = d_tilde_prime / (k * (1.0 + r_est.value))

    return _finish(
        method, statistic, k, m, r_est.value, k,
        _default_variant(method, df_variant), r_est,
        extra={"dropped_datasets": dropped},
    )


def run_test(
    method: str,
    model: LikelihoodModel,
    data,
    *,
    psi_map: str = "identity",
    theta_map: str | None = None,
    df_variant: str | None = None,
) -> TestResult:
    """Run one pooled test from the supported method matrix.

    ``data`` is a :class:`CompletedDatasets` (or any sequence of completed
    datasets) for every method except L0, which takes a single directly
    analyzable dataset and refers the complete-data statistic to its
    chi-square limit.
    """
    method = normalize_method(method)

    if method == "L0":
        statistic = model.lrt_stat(data) / model.k
        p_value = ChiSquare(model.k).sf(model.k * statistic)
        return TestResult(
            "L0", float(statistic), model.k, math.inf, p_value, None,
            {"df_variant": "original", "negative_statistic": False},
        )

    datasets = list(data) if not isinstance(data, CompletedDatasets) else list(data.datasets)
    if len(datasets) < 2:
        raise ValueError(f"method {method} needs m >= 2 completed datasets")
    m = len(datasets)

    if method in WALD_METHODS:
        return _wald_test(method, model, datasets, theta_map, df_variant)

    variant = _default_variant(method, df_variant)
    k = model.k

    if method in ("L1", "L2"):
        r_signed, d_tilde = estimate_r_legacy(model, datasets, psi_map)
        if method == "L1":
            statistic = d_tilde / (k * (1.0 + r_signed.value))
            return _finish(
                "L1", statistic, k, m, r_signed.value, k, variant, r_signed,
                extra={"d_tilde": d_tilde},
            )
        r_plus = r_signed.clamped()
        statistic = max(0.0, d_tilde / (k * (1.0 + r_plus.value)))
        return _finish(
            "L2", statistic, k, m, r_plus.value, k, variant, r_plus,
            extra={"d_tilde": d_tilde, "r_signed": r_signed.value},
        )

    if method == "L3":
        r_signed, d_stack = estimate_r_stacked(model, datasets)
        statistic = d_stack / (k * (1.0 + r_signed.value))
        return _finish(
            "L3", statistic, k, m, r_signed.value, k, variant, r_signed,
            extra={"d_stack": d_stack},
        )
    if method == "L4":
        return stacked_plus_test(model, datasets, variant)
    if method == "L5":
        return stacked_robust_test(model, datasets, variant)

    if method == "L6":
        r_signed, d_avg = estimate_r_averaged(model, datasets)
        r_plus = r_signed.clamped()
        statistic = d_avg / (k * (1.0 + r_plus.value))
        return _finish(
            "L6", statistic, k, m, r_plus.value, k, variant, r_plus,
            extra={"d_avg": d_avg, "r_signed": r_signed.value},
        )
    # L7
    r_rob = estimate_r_robust(model, datasets)
    d_avg = model.averaged_lrt_stat(datasets)
    statistic = d_avg / (k * (1.0 + r_rob.value))
    return _finish(
        "L7", statistic, k, m, r_rob.value, model.h, variant, r_rob,
        extra={"d_avg": d_avg},
    )


# ---------------------------------------------------------------------------
# reference null distribution sampling


@dataclass(frozen=True)
class NullDistSpec:
    """Limiting null law of the pooled statistics for given r, k, h, m.

    The statistic converges to (1 + r_m) M1 / (1 + r_m M),  where
    M1 ~ chi2_k / k and M is an independent normalized chi-square whose
    dimension is k(m-1) for the ``estimand`` basis or h(m-1) for the
    ``parameter`` basis.
    """

    r_m: float
    k: int
    h: int
    m: int
    basis: str = "parameter"  # estimand -> k(m-1); parameter -> h(m-1)

    def __post_init__(self):
        if self.m <= 1:
            raise ValueError("need m > 1")
        if self.r_m < 0:
            raise ValueError("r_m must be nonnegative")
        if self.basis not in ("estimand", "parameter"):
            raise ValueError(f"unknown basis {self.basis!r}")

    @property
    def denominator_dim(self) -> int:
        dim = self.k if self.basis == "estimand" else self.h
        return dim * (self.m - 1)


def sample_null_statistic(spec: NullDistSpec, n_draws: int, rng) -> np.ndarray:
    """Draw iid copies of the limiting null statistic."""
    if n_draws < 1:
        raise ValueError("need at least one draw")
    gen = as_generator(rng)
    m1 = gen.chisquare(spec.k, size=n_draws) / spec.k
    if spec.r_m == 0.0:
        return m1
    dim = spec.denominator_dim
    m_denom = gen.chisquare(dim, size=n_draws) / dim
    return (1.0 + spec.r_m) * m1 / (1.0 + spec.r_m * m_denom)
