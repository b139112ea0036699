"""Welfare objectives over policies and a Frank-Wolfe maximizer for Nash social welfare.

The solver works on the log objective g(π) = Σ_d ln(max(⟨π, s_d⟩, floor)), which is
concave on the simplex; the reported value is always the raw product.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from resources.core import Policy, ScoreMatrix
from resources.selectors import argmax_lowest

logger = logging.getLogger(__name__)

LINE_SEARCH_ITERATIONS = 50
# Relative size of a log-objective drop still treated as rounding noise.
OBJECTIVE_NOISE = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 2000
    gap_tolerance: float = 1e-8
    utility_floor: float = 1e-12
    away_steps: bool = True

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be positive, got {self.max_iterations}")
        if self.gap_tolerance < 0:
            raise ValueError(f"gap_tolerance must be >= 0, got {self.gap_tolerance}")
        if self.utility_floor <= 0:
            raise ValueError(f"utility_floor must be > 0, got {self.utility_floor}")


# Settings for the reference optimum that regret is measured against.
REFERENCE_SETTINGS = SolverSettings(max_iterations=20000, gap_tolerance=1e-10)


@dataclass(frozen=True, eq=False)
class SolverResult:
    policy: Policy
    value: float
    iterations: int
    gap: float
    degenerate: bool = False
    history: tuple[float, ...] = ()
    converged: bool = True
    stalled: bool = False


def nsw_value(policy: Policy, scores: ScoreMatrix) -> float:
    return float(np.prod(scores.scores @ policy.weights))


def utilitarian_value(policy: Policy, scores: ScoreMatrix) -> float:
    return float(np.sum(scores.scores @ policy.weights))


def nsw_lipschitz_bound(policy: Policy, s1: ScoreMatrix, s2: ScoreMatrix) -> float:
    """Σ_d Σ_i |s1 - s2|, an upper bound on |NSW(π, s1) - NSW(π, s2)| for every π."""
    if s1.scores.shape != s2.scores.shape or s1.num_arms != policy.num_arms:
        raise ValueError(f"shape mismatch: {s1.scores.shape}, {s2.scores.shape}, K={policy.num_arms}")
    return float(np.abs(s1.scores - s2.scores).sum())


def log_objective(weights: np.ndarray, scores: np.ndarray, floor: float) -> float:
    return float(np.log(np.maximum(scores @ weights, floor)).sum())


def log_gradient(weights: np.ndarray, scores: np.ndarray, floor: float) -> np.ndarray:
    """∂g/∂π_a = Σ_d s_d(a) / max(⟨π, s_d⟩, floor)."""
    return scores.T @ (1.0 / np.maximum(scores @ weights, floor))


def _line_search(
    utilities: np.ndarray, slope: np.ndarray, step_max: float, floor: float, iteration: int
) -> float:
    """Maximize Σ_d ln(u_d + γ w_d) over γ in [0, step_max] by bisection on the derivative."""

    def derivative(step: float) -> float:
        return float(np.sum(slope / np.maximum(utilities + step * slope, floor)))

    at_zero, at_max = derivative(0.0), derivative(step_max)
    if np.isfinite(at_max) and at_max >= 0.0 and np.isfinite(at_zero) and at_zero > 0.0:
        return step_max
    if not (np.isfinite(at_zero) and np.isfinite(at_max)):
        return min(2.0 / (iteration + 2.0), step_max)
    if at_zero <= 0.0:
        return 0.0
    return bisect(
        derivative,
        0.0,
        step_max,
        xtol=1e-16,
        rtol=4 * np.finfo(float).eps,
        maxiter=LINE_SEARCH_ITERATIONS,
        disp=False,
    )


def maximize_nsw(
    scores: ScoreMatrix, settings: SolverSettings = SolverSettings(), *, record_history: bool = False
) -> SolverResult:
    """Frank-Wolfe (with away steps by default) on the log-NSW objective, started at uniform.

    The linear subproblem breaks ties towards the lowest arm index. Drops of the log objective
    within rounding noise are accepted; a larger drop, or a zero step, is rejected and ends the
    run with `stalled` set. `converged` tells whether the duality gap reached the tolerance.
    """
    S = scores.scores
    num_arms = scores.num_arms
    floor = settings.utility_floor
    uniform = Policy.uniform(num_arms)

    if not S.any():
        logger.warning("All-zero score matrix: returning the uniform policy")
        return SolverResult(uniform, 0.0, 0, 0.0, degenerate=True)
    degenerate = bool((~S.any(axis=1)).any())
    if degenerate:
        logger.warning("Some user scores every arm 0; NSW is 0 for every policy")

    x = uniform.weights.copy()
    utilities = S @ x
    objective = log_objective(x, S, floor)
    history = [objective] if record_history else []
    gap = np.inf
    iteration = 0
    stalled = False

    for iteration in range(settings.max_iterations):
        grad = log_gradient(x, S, floor)
        toward = argmax_lowest(grad)
        inner = float(grad @ x)
        gap = float(grad[toward] - inner)
        if gap <= settings.gap_tolerance:
            break

        direction = -x.copy()
        direction[toward] += 1.0
        step_max = 1.0
        away = None
        if settings.away_steps:
            active = np.flatnonzero(x > 0.0)
            away = int(active[np.argmin(grad[active])])
            if inner - grad[away] > gap and x[away] < 1.0:
                direction = x.copy()
                direction[away] -= 1.0
                step_max = x[away] / (1.0 - x[away])
            else:
                away = None

        slope = S @ direction
        step = _line_search(utilities, slope, step_max, floor, iteration)
        candidate = x + step * direction
        if away is not None and step >= step_max:
            candidate[away] = 0.0
        candidate = np.clip(candidate, 0.0, None)
        candidate /= candidate.sum()
        new_objective = log_objective(candidate, S, floor)
        if step <= 0.0 or new_objective < objective - OBJECTIVE_NOISE * max(1.0, abs(objective)):
            stalled = True
            logger.warning(
                "Frank-Wolfe stalled",
                extra={"iteration": iteration, "gap": gap, "step": step, "drop": objective - new_objective},
            )
            break
        x, objective = candidate, new_objective
        utilities = S @ x
        if record_history:
            history.append(objective)
    else:
        iteration = settings.max_iterations
        logger.debug("Frank-Wolfe hit max_iterations", extra={"gap": gap})

    policy = Policy(x)
    gap = max(gap, 0.0)
    return SolverResult(
        policy,
        nsw_value(policy, scores),
        iteration,
        gap,
        degenerate=degenerate,
        history=tuple(history),
        converged=gap <= settings.gap_tolerance,
        stalled=stalled,
    )


def maximize_utilitarian(scores: ScoreMatrix) -> SolverResult:
    """Point mass on the arm with the largest column sum; ties go to the lowest index."""
    arm = argmax_lowest(scores.scores.sum(axis=0))
    policy = Policy.point_mass(scores.num_arms, arm)
    return SolverResult(policy, utilitarian_value(policy, scores), 0, 0.0)
