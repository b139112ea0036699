"""Regret and fairness metrics of finished runs, and their aggregation over repetitions."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from resources.core import Policy, ScoreMatrix
from tools.welfare import REFERENCE_SETTINGS, SolverResult, maximize_nsw, nsw_value

logger = logging.getLogger(__name__)

METRICS = ("cumulative_regret", "nash_social_welfare", "min_welfare", "gini", "utilitarian_welfare")
Z_95 = 1.96


def optimal_nsw(true_scores: ScoreMatrix) -> SolverResult:
    """The regret baseline: maximize_nsw on the true scores at reference precision."""
    return maximize_nsw(true_scores, REFERENCE_SETTINGS)


def instantaneous_regret(true_scores: ScoreMatrix, optimal_value: float, pi: Policy, pi_prime: Policy) -> float:
    return optimal_value - 0.5 * (nsw_value(pi, true_scores) + nsw_value(pi_prime, true_scores))


def cumulative_utilities(arm_i: np.ndarray, arm_j: np.ndarray, true_scores: ScoreMatrix) -> np.ndarray:
    """û_d = Σ_t ½ (s_d(i_t) + s_d(j_t)) over the played pairs."""
    scores = true_scores.scores
    arm_i, arm_j = np.asarray(arm_i, dtype=np.intp), np.asarray(arm_j, dtype=np.intp)
    return 0.5 * (scores[:, arm_i].sum(axis=1) + scores[:, arm_j].sum(axis=1))


def gini(utilities: np.ndarray) -> float:
    """Mean absolute difference over twice the mean; 0 for equal (or all-zero) utilities."""
    utilities = np.asarray(utilities, dtype=np.float64)
    total = utilities.sum()
    if total <= 0.0:
        logger.warning("Gini of all-zero utilities is undefined; reporting 0")
        return 0.0
    spread = np.abs(utilities[:, None] - utilities[None, :]).sum()
    return float(spread / (2.0 * utilities.size * total))


def run_metrics(cumulative_regret: float, utilities: np.ndarray) -> dict[str, float]:
    utilities = np.asarray(utilities, dtype=np.float64)
    return {
        "cumulative_regret": float(cumulative_regret),
        "nash_social_welfare": float(np.prod(utilities ** (1.0 / utilities.size))),
        "min_welfare": float(utilities.min()),
        "gini": gini(utilities),
        "utilitarian_welfare": float(utilities.sum()),
    }


def record_metrics(record, true_scores: ScoreMatrix) -> dict[str, float]:
    return run_metrics(record.cumulative_regret, cumulative_utilities(record.arm_i, record.arm_j, true_scores))


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci95: float
    n: int

    @property
    def degenerate(self) -> bool:
        return self.n < 2


def mean_ci(values) -> MetricSummary:
    """Mean and normal-approximation 95% half-width 1.96·sd/√n; a single value has half-width 0."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot summarize an empty sample")
    if values.size == 1:
        return MetricSummary(float(values[0]), 0.0, 1)
    return MetricSummary(
        float(values.mean()),
        float(Z_95 * values.std(ddof=1) / math.sqrt(values.size)),
        int(values.size),
    )


def summary_metrics(per_run: list[dict[str, float]]) -> dict[str, MetricSummary]:
    """Aggregate per-run metric dictionaries (as from run_metrics) metric by metric."""
    if not per_run:
        raise ValueError("summary_metrics needs at least one run")
    if len(per_run) == 1:
        logger.warning("Only one run to summarize; confidence half-widths are 0")
    return {name: mean_ci([run[name] for run in per_run]) for name in METRICS}
