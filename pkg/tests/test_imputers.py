"""Imputation engines and experiment data generators."""

import numpy as np
import pytest

from milrt.exceptions import DegenerateDataError
from milrt.imputers import (
    CompletedDatasets,
    ContingencyTable,
    MonotoneExperimentConfig,
    MvnExperimentConfig,
    generate_monotone_experiment_data,
    generate_mvn_experiment_data,
    impute_multinomial_dirichlet,
    impute_monotone_regression,
    impute_mvn_jeffreys,
)
from milrt.numkit import RngStream

CARE_COUNTS = np.array([[[3.0, 176.0], [4.0, 293.0]], [[17.0, 197.0], [2.0, 23.0]]])
CARE_UNLABELED = {0: np.array([[10.0, 150.0], [5.0, 90.0]])}


class TestMvnJeffreys:
    def test_no_missing_rows_copies_input(self):
        gen = RngStream(1).generator()
        x = gen.standard_normal((30, 2))
        out = impute_mvn_jeffreys(x, 3, RngStream(2))
        assert out.m == 3
        for d in out:
            np.testing.assert_array_equal(d, x)

    def test_deterministic_under_fixed_stream(self):
        x, _ = generate_mvn_experiment_data(MvnExperimentConfig(), RngStream(3))
        a = impute_mvn_jeffreys(x, 3, RngStream(4))
        b = impute_mvn_jeffreys(x, 3, RngStream(4))
        for da, db in zip(a, b):
            assert da.tobytes() == db.tobytes()

    def test_observed_entries_bit_exact(self):
        x, truth = generate_mvn_experiment_data(MvnExperimentConfig(f=0.3), RngStream(5))
        n_obs = truth["n_obs"]
        out = impute_mvn_jeffreys(x, 4, RngStream(6))
        for d in out:
            assert d[:n_obs].tobytes() == x[:n_obs].tobytes()
            assert np.all(np.isfinite(d))

    def test_posterior_predictive_mean(self):
        # Across many imputations the imputed-row average centers on the
        # observed average.
        x, truth = generate_mvn_experiment_data(
            MvnExperimentConfig(n=100, p=2, rho=0.0, sigma2=1.0, f=0.5), RngStream(7)
        )
        n_obs = truth["n_obs"]
        obs_mean = np.nanmean(x[:n_obs], axis=0)
        reps = 1000
        out = impute_mvn_jeffreys(x, reps, RngStream(8))
        block_means = np.array([d[n_obs:].mean(axis=0) for d in out])
        se = block_means.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(block_means.mean(axis=0) - obs_mean) <= 5 * se)

    def test_degenerate_when_too_few_observed(self):
        x = np.full((5, 3), np.nan)
        x[:3] = np.eye(3)
        with pytest.raises(DegenerateDataError):
            impute_mvn_jeffreys(x, 3, RngStream(9))

    def test_between_variance_grows_with_missing_fraction(self):
        # Properness smoke test: the pooled between-imputation variance of
        # the mean estimate rises with the missing fraction.
        spreads = []
        for f in (0.1, 0.5, 0.9):
            total = 0.0
            for rep in range(30):
                rng = RngStream(11).derive(f, rep)
                x, _ = generate_mvn_experiment_data(
                    MvnExperimentConfig(n=100, p=2, rho=0.4, f=f), rng
                )
                ds = impute_mvn_jeffreys(x, 5, rng.derive("imp"))
                means = np.array([d.mean(axis=0) for d in ds])
                total += float(means.var(axis=0, ddof=1).sum())
            spreads.append(total / 30)
        assert spreads[0] < spreads[1] < spreads[2]
        assert spreads[0] > 0


class TestMonotoneRegression:
    def test_no_missing_is_identity(self):
        gen = RngStream(12).generator()
        x = gen.standard_normal((40, 3))
        out = impute_monotone_regression(x, 3, RngStream(13))
        for d in out:
            np.testing.assert_array_equal(d, x)

    def test_completes_and_preserves_observed(self):
        x, _ = generate_monotone_experiment_data(MonotoneExperimentConfig(n=200), RngStream(14))
        mask = np.isfinite(x)
        out = impute_monotone_regression(x, 3, RngStream(15))
        for d in out:
            assert np.all(np.isfinite(d))
            assert d[mask].tobytes() == x[mask].tobytes()

    def test_determinism(self):
        x, _ = generate_monotone_experiment_data(MonotoneExperimentConfig(n=150), RngStream(16))
        a = impute_monotone_regression(x, 3, RngStream(17))
        b = impute_monotone_regression(x, 3, RngStream(17))
        for da, db in zip(a, b):
            assert da.tobytes() == db.tobytes()

    def test_mcar_observed_fraction_matches_propensity(self):
        # alpha = (1, 0): each step stays observed with probability
        # sigmoid(1), so column j is observed with probability sigmoid(1)^(j-1).
        keep = 1.0 / (1.0 + np.exp(-1.0))
        reps = 400
        fractions = np.zeros(5)
        for rep in range(reps):
            x, truth = generate_monotone_experiment_data(
                MonotoneExperimentConfig(n=120, alpha0=1.0, alpha1=0.0),
                RngStream(18).derive(rep),
            )
            fractions += truth["observed_fraction"]
        fractions /= reps
        for j in range(5):
            want = keep**j
            se = np.sqrt(want * (1 - want) / (120 * reps)) + 1e-12
            assert abs(fractions[j] - want) <= 5 * se

    def test_mar_missing_fractions(self):
        # alpha = (2, -1) under a zero mean: missing-observation fractions
        # per column settle near (0, 16%, 28%, 38%, 47%).
        reps = 300
        fractions = np.zeros(5)
        for rep in range(reps):
            _, truth = generate_monotone_experiment_data(
                MonotoneExperimentConfig(n=200, delta=0.0, alpha0=2.0, alpha1=-1.0),
                RngStream(19).derive(rep),
            )
            fractions += 1.0 - truth["observed_fraction"]
        fractions /= reps
        np.testing.assert_allclose(
            fractions, [0.0, 0.16, 0.28, 0.38, 0.47], atol=0.015
        )

    def test_identifiability_guard(self):
        x = np.full((6, 3), np.nan)
        x[:, 0] = np.arange(6.0)
        x[:2, 1] = [1.0, 2.0]
        with pytest.raises(DegenerateDataError):
            impute_monotone_regression(x, 2, RngStream(20))


class TestMultinomialDirichlet:
    def test_no_unlabeled_units(self):
        table = ContingencyTable(CARE_COUNTS)
        out = impute_multinomial_dirichlet(table, 3, RngStream(21))
        for d in out:
            np.testing.assert_array_equal(d, CARE_COUNTS)

    def test_deterministic_allocation_single_choice(self):
        # Conditional probabilities (1, 0) always pick the first label.
        from milrt.imputers import allocate_unlabeled

        counts = np.zeros((2, 2, 2))
        counts[0] = [[5.0, 1.0], [2.0, 2.0]]
        table = ContingencyTable(counts, {0: np.array([[4.0, 0.0], [0.0, 0.0]])})
        pi = np.zeros((2, 2, 2))
        pi[0] = 0.25  # all mass on the first clinic
        for seed in range(5):
            d = allocate_unlabeled(pi, table, RngStream(22, seed))
            assert d[0, 0, 0] == 9.0
            assert d[1, 0, 0] == 0.0

    def test_allocation_matches_conjugate_posterior_mean(self):
        table = ContingencyTable(CARE_COUNTS, CARE_UNLABELED)
        reps = 600
        out = impute_multinomial_dirichlet(table, reps, RngStream(23))
        added = np.array([d - CARE_COUNTS for d in out])
        # Oracle: P(clinic = A | care, survival) under Dirichlet(n + 1/2)
        # has mean E[pi_A / (pi_A + pi_B)] = (n_A + 1/2) / (n_A + n_B + 1)
        # by the aggregation property of the Dirichlet.
        n_a, n_b = CARE_COUNTS[0], CARE_COUNTS[1]
        share_a = (n_a + 0.5) / (n_a + n_b + 1.0)
        unlabeled = CARE_UNLABELED[0]
        want = unlabeled * share_a
        got = added[:, 0, :, :]
        se = got.std(axis=0, ddof=1) / np.sqrt(reps) + 1e-9
        assert np.all(np.abs(got.mean(axis=0) - want) <= 5 * se)

    def test_counts_preserved_in_total(self):
        table = ContingencyTable(CARE_COUNTS, CARE_UNLABELED)
        grand = CARE_COUNTS.sum() + CARE_UNLABELED[0].sum()
        for d in impute_multinomial_dirichlet(table, 5, RngStream(24)):
            assert d.sum() == pytest.approx(grand)
            assert np.all(d >= CARE_COUNTS)


class TestGenerators:
    def test_floor_arithmetic(self):
        x, truth = generate_mvn_experiment_data(
            MvnExperimentConfig(n=100, f=0.1), RngStream(25)
        )
        assert truth["n_obs"] == 90
        assert np.isfinite(x[:90]).all() and np.isnan(x[90:]).all()

    def test_common_mean_null_at_zero_delta(self):
        delta = 0.0
        config = MvnExperimentConfig(p=2, mu=(-2 + delta, -2 + 2 * delta))
        assert np.allclose(config.mean(), [-2.0, -2.0])

    def test_non_spd_covariance_rejected(self):
        from milrt.exceptions import FactorizationError

        with pytest.raises(FactorizationError):
            generate_mvn_experiment_data(
                MvnExperimentConfig(p=3, rho=-0.9), RngStream(26)
            )

    def test_m_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            CompletedDatasets((np.zeros((2, 2)),))
