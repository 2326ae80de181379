"""Difficulty modelling: logistic regression via IRLS, Wald tests, ROC/AUC.

Success of annotation generation is modelled per (program, configuration)
pair from three structural features of the manual solution (executable LOC,
annotation LOC, proof-helper LOC) with one intercept per configuration. A
small ridge term keeps the fit finite on separable data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps


class SingleClass(Exception):
    """Both outcome classes are required."""


@dataclass(frozen=True)
class FeatureRow:
    program_id: str
    config_id: str
    L: int
    A: int
    H: int
    outcome: int  # 1 = success

    def feature(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass
class RegressionFit:
    feature_names: tuple[str, ...]
    betas: dict[str, float]
    alpha: dict[str, float]  # per-config intercepts
    std_errors: dict[str, float]
    wald_p_values: dict[str, float]
    converged: bool
    iterations: int
    log_likelihood: float
    gradient_norm: float
    n_params: int
    _config_ids: tuple[str, ...] = field(default=(), repr=False)

    def predict(self, row: FeatureRow) -> float:
        eta = self.alpha.get(row.config_id, 0.0)
        for name in self.feature_names:
            eta += self.betas[name] * row.feature(name)
        return 1.0 / (1.0 + math.exp(-eta))


def _design(rows: Sequence[FeatureRow], features: tuple[str, ...]):
    configs = tuple(sorted({r.config_id for r in rows}))
    index = {c: i for i, c in enumerate(configs)}
    n = len(rows)
    p = len(configs) + len(features)
    X = np.zeros((n, p))
    y = np.zeros(n)
    for i, row in enumerate(rows):
        X[i, index[row.config_id]] = 1.0
        for j, name in enumerate(features):
            X[i, len(configs) + j] = row.feature(name)
        y[i] = row.outcome
    names = [f"alpha[{c}]" for c in configs] + list(features)
    return X, y, configs, names


def log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    # log(1 + exp(eta)) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def gradient(X: np.ndarray, y: np.ndarray, beta: np.ndarray, ridge: float) -> np.ndarray:
    p = 1.0 / (1.0 + np.exp(-(X @ beta)))
    return X.T @ (y - p) - ridge * beta


def fit_logistic(
    rows: Sequence[FeatureRow],
    features: tuple[str, ...] = ("L", "A", "H"),
    ridge: float = 1e-6,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> RegressionFit:
    """Maximum-likelihood fit by iteratively reweighted least squares.

    One intercept per configuration (no global intercept, so the design has
    full rank). Wald standard errors come from the inverse observed
    information at the optimum. Non-convergence is reported via the flag,
    not an exception.
    """
    outcomes = {r.outcome for r in rows}
    if len(outcomes) < 2:
        raise SingleClass("need both successful and failed rows to fit")

    X, y, configs, names = _design(rows, features)
    n, p = X.shape
    beta = np.zeros(p)

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        eta = X @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        w = prob * (1.0 - prob)
        g = X.T @ (y - prob) - ridge * beta
        if float(np.linalg.norm(g)) < tol:
            converged = True
            break
        H = (X.T * w) @ X + ridge * np.eye(p)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        beta = beta + step

    eta = X @ beta
    prob = 1.0 / (1.0 + np.exp(-eta))
    w = prob * (1.0 - prob)
    g = X.T @ (y - prob) - ridge * beta
    H = (X.T * w) @ X + ridge * np.eye(p)
    cov = np.linalg.inv(H)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    z = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
    pvals = 2.0 * sps.norm.sf(np.abs(z))

    n_configs = len(configs)
    return RegressionFit(
        feature_names=features,
        betas={name: float(beta[n_configs + j]) for j, name in enumerate(features)},
        alpha={c: float(beta[i]) for i, c in enumerate(configs)},
        std_errors={names[i]: float(se[i]) for i in range(p)},
        wald_p_values={names[i]: float(pvals[i]) for i in range(p)},
        converged=converged,
        iterations=iterations,
        log_likelihood=log_likelihood(X, y, beta),
        gradient_norm=float(np.linalg.norm(g)),
        n_params=p,
        _config_ids=configs,
    )


def likelihood_ratio_test(null_fit: RegressionFit, alt_fit: RegressionFit) -> tuple[float, int, float]:
    """(chi2 statistic, degrees of freedom, p-value) for nested fits."""
    df = alt_fit.n_params - null_fit.n_params
    if df <= 0:
        raise ValueError("alternative model must have more parameters than the null")
    stat = 2.0 * (alt_fit.log_likelihood - null_fit.log_likelihood)
    stat = max(stat, 0.0)
    return stat, df, float(sps.chi2.sf(stat, df))


# ---------------------------------------------------------------------------
# ROC


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1  # ranks are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC; tied scores count half."""
    if len(scores) != len(labels):
        raise ValueError("scores and labels must have equal length")
    n_pos = sum(1 for l in labels if l)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = _average_ranks(list(scores))
    rank_sum_pos = sum(r for r, l in zip(ranks, labels) if l)
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float]]:
    """(FPR, TPR) points swept over thresholds, for plotting."""
    n_pos = sum(1 for l in labels if l)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both classes")
    paired = sorted(zip(scores, labels), key=lambda x: -x[0])
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(paired):
        j = i
        while j + 1 < len(paired) and paired[j + 1][0] == paired[i][0]:
            j += 1
        for k in range(i, j + 1):
            if paired[k][1]:
                tp += 1
            else:
                fp += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return points
