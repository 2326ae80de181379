import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specforge.stats import (
    FeatureRow,
    SingleClass,
    _design,
    fit_logistic,
    gradient,
    likelihood_ratio_test,
    log_likelihood,
    roc_auc,
    roc_curve,
)


def simulate_rows(seed=42, n_programs=110, n_configs=14, betas=(-0.07, -0.05, -0.58)):
    rng = np.random.default_rng(seed)
    beta_l, beta_a, beta_h = betas
    configs = [f"cfg{j:02d}" for j in range(n_configs)]
    alphas = {c: rng.normal(2.5, 0.8) for c in configs}
    rows = []
    for i in range(n_programs):
        L = int(rng.integers(5, 60))
        A = int(rng.integers(2, 40))
        H = int(rng.integers(0, 8))
        for c in configs:
            eta = alphas[c] + beta_l * L + beta_a * A + beta_h * H
            p = 1.0 / (1.0 + math.exp(-eta))
            rows.append(FeatureRow(f"p{i:03d}", c, L, A, H, int(rng.random() < p)))
    return rows, {"L": beta_l, "A": beta_a, "H": beta_h}


class TestFitLogistic:
    def test_recovers_simulated_coefficients(self):
        rows, truth = simulate_rows()
        assert len(rows) == 1540
        fit = fit_logistic(rows)
        assert fit.converged
        for name, true_value in truth.items():
            se = fit.std_errors[name]
            assert abs(fit.betas[name] - true_value) <= 3 * se, name
            assert fit.wald_p_values[name] < 1e-3

    def test_intercept_only_closed_form(self):
        rows = [FeatureRow(f"p{i}", "c0", 0, 0, 0, int(i < 3)) for i in range(10)]
        fit = fit_logistic(rows, features=())
        assert fit.betas == {}
        assert fit.alpha["c0"] == pytest.approx(math.log(0.3 / 0.7), abs=1e-5)

    def test_separable_data_stays_finite(self):
        rows = [FeatureRow(f"s{i}", "c0", i, 0, 0, int(i > 5)) for i in range(12)]
        fit = fit_logistic(rows, features=("L",))
        assert math.isfinite(fit.betas["L"])
        assert fit.converged

    def test_single_class_rejected(self):
        rows = [FeatureRow(f"p{i}", "c0", i, 0, 0, 1) for i in range(5)]
        with pytest.raises(SingleClass):
            fit_logistic(rows)

    def test_gradient_norm_below_tolerance(self):
        rows, _ = simulate_rows(seed=7, n_programs=40, n_configs=4)
        fit = fit_logistic(rows, tol=1e-8)
        assert fit.converged
        assert fit.gradient_norm < 1e-8

    def test_analytic_gradient_matches_finite_differences(self):
        rows, _ = simulate_rows(seed=3, n_programs=25, n_configs=3)
        X, y, _, _ = _design(rows, ("L", "A", "H"))
        rng = np.random.default_rng(0)
        beta = rng.normal(0, 0.05, X.shape[1])
        analytic = gradient(X, y, beta, ridge=0.0)
        eps = 1e-6
        for j in range(len(beta)):
            up = beta.copy()
            up[j] += eps
            down = beta.copy()
            down[j] -= eps
            numeric = (log_likelihood(X, y, up) - log_likelihood(X, y, down)) / (2 * eps)
            scale = max(1.0, abs(numeric))
            assert abs(analytic[j] - numeric) / scale < 1e-6, j

    def test_per_config_intercepts(self):
        rows = []
        for i in range(40):
            rows.append(FeatureRow(f"p{i}", "easy", 0, 0, 0, int(i % 10 != 0)))
            rows.append(FeatureRow(f"p{i}", "hard", 0, 0, 0, int(i % 10 == 0)))
        fit = fit_logistic(rows, features=())
        assert fit.alpha["easy"] > 0 > fit.alpha["hard"]

    def test_predict_uses_config_intercept(self):
        rows, _ = simulate_rows(seed=11, n_programs=30, n_configs=2)
        fit = fit_logistic(rows)
        row = rows[0]
        p = fit.predict(row)
        assert 0.0 <= p <= 1.0


class TestLikelihoodRatio:
    def test_nested_comparison(self):
        rows, _ = simulate_rows(seed=5, n_programs=60, n_configs=4)
        null = fit_logistic(rows, features=("L", "A"))
        alt = fit_logistic(rows, features=("L", "A", "H"))
        stat, df, p = likelihood_ratio_test(null, alt)
        assert df == 1
        assert stat > 0
        assert p < 0.05  # H carries real signal in the simulation

    def test_requires_nesting(self):
        rows, _ = simulate_rows(seed=5, n_programs=20, n_configs=2)
        fit = fit_logistic(rows, features=("L",))
        with pytest.raises(ValueError):
            likelihood_ratio_test(fit, fit)


class TestRocAuc:
    def test_perfect_ranking(self):
        assert roc_auc([0.9, 0.8, 0.7, 0.3, 0.2], [1, 1, 1, 0, 0]) == 1.0

    def test_all_tied_is_half(self):
        assert roc_auc([0.5] * 6, [1, 1, 1, 0, 0, 0]) == 0.5

    def test_hand_worked_eight_ninths(self):
        scores = [0.9, 0.8, 0.4, 0.7, 0.3, 0.2]
        labels = [1, 1, 1, 0, 0, 0]
        assert roc_auc(scores, labels) == pytest.approx(8 / 9)

    def test_single_class_rejected(self):
        with pytest.raises(SingleClass):
            roc_auc([0.1, 0.2], [1, 1])

    def test_matches_exhaustive_pairwise(self):
        rng = np.random.default_rng(99)
        for _ in range(30):
            n = int(rng.integers(4, 25))
            scores = list(np.round(rng.random(n), 2))  # rounding forces ties
            labels = list(rng.integers(0, 2, n))
            if len(set(labels)) < 2:
                continue
            wins = ties = total = 0
            for sp, lp in zip(scores, labels):
                if not lp:
                    continue
                for sn, ln in zip(scores, labels):
                    if ln:
                        continue
                    total += 1
                    if sp > sn:
                        wins += 1
                    elif sp == sn:
                        ties += 1
            expected = (wins + 0.5 * ties) / total
            assert roc_auc(scores, labels) == pytest.approx(expected)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.tuples(st.floats(0, 1, allow_nan=False), st.integers(0, 1)),
            min_size=4,
            max_size=40,
        )
    )
    def test_complement_property_without_ties(self, pairs):
        scores = [round(s, 6) for s, _ in pairs]
        labels = [l for _, l in pairs]
        if len(set(labels)) < 2 or len(set(scores)) != len(scores):
            return
        assert roc_auc([-s for s in scores], labels) == pytest.approx(1 - roc_auc(scores, labels))

    def test_curve_endpoints(self):
        points = roc_curve([0.9, 0.1, 0.8, 0.4], [1, 0, 1, 0])
        assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)
