import numpy as np
import pytest

import tools.welfare as welfare
from resources.core import Policy, RngSeed, ScoreMatrix
from resources.envgen import InstanceSpec, gen_random
from tools.welfare import (
    OBJECTIVE_NOISE,
    REFERENCE_SETTINGS,
    SolverSettings,
    log_gradient,
    log_objective,
    maximize_nsw,
    maximize_utilitarian,
    nsw_lipschitz_bound,
    nsw_value,
    utilitarian_value,
)


def grid_optimum(scores: np.ndarray, resolution: int = 1000) -> float:
    """Brute-force NSW maximum over two-arm policies."""
    grid = np.linspace(0.0, 1.0, resolution + 1)
    weights = np.stack([grid, 1.0 - grid], axis=1)
    return float(np.prod(weights @ scores.T, axis=1).max())


class TestWelfareValues:
    def test_all_ones(self):
        scores = ScoreMatrix(np.ones((3, 4)))
        policy = Policy(np.array([0.1, 0.2, 0.3, 0.4]))
        assert nsw_value(policy, scores) == pytest.approx(1.0)
        assert utilitarian_value(policy, scores) == pytest.approx(3.0)

    def test_nsw_hand_example(self):
        scores = ScoreMatrix(np.array([[1.0, 0.2], [0.4, 1.0]]))
        assert nsw_value(Policy.uniform(2), scores) == pytest.approx(0.42)

    def test_zero_user_annihilates(self):
        scores = ScoreMatrix(np.array([[1.0, 1.0], [0.0, 0.0]]))
        assert nsw_value(Policy.uniform(2), scores) == 0.0

    def test_utilitarian_point_mass(self):
        scores = ScoreMatrix(np.array([[0.3, 1.0], [0.5, 1.0]]))
        assert utilitarian_value(Policy.point_mass(2, 0), scores) == pytest.approx(0.8)

    def test_gradient_matches_finite_differences(self):
        scores = np.array([[1.0, 0.2, 0.5], [0.4, 1.0, 0.1]])
        x = np.array([0.2, 0.5, 0.3])
        step = 1e-7
        grad = log_gradient(x, scores, 1e-12)
        for a in range(3):
            bumped = x.copy()
            bumped[a] += step
            numeric = (log_objective(bumped, scores, 1e-12) - log_objective(x, scores, 1e-12)) / step
            assert grad[a] == pytest.approx(numeric, rel=1e-5)


class TestMaximizeNsw:
    def test_single_user_picks_best_arm(self):
        result = maximize_nsw(ScoreMatrix(np.array([[0.2, 0.9, 0.4]])))
        assert result.policy.weights == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)
        assert result.value == pytest.approx(0.9)

    def test_opposed_users_split_evenly(self):
        scores = np.array([[1.0, 0.0], [0.0, 1.0]])
        result = maximize_nsw(ScoreMatrix(scores), REFERENCE_SETTINGS)
        assert result.policy.weights == pytest.approx([0.5, 0.5], abs=1e-6)
        assert result.value == pytest.approx(0.25, abs=1e-9)
        assert result.value >= grid_optimum(scores) - 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_beats_grid_search(self, seed):
        scores = np.random.default_rng(seed).uniform(0.05, 1.0, size=(3, 2))
        result = maximize_nsw(ScoreMatrix(scores), REFERENCE_SETTINGS)
        assert result.value >= grid_optimum(scores) - 1e-6

    @pytest.mark.parametrize("away_steps", [True, False])
    def test_objective_never_decreases(self, away_steps):
        scores = np.random.default_rng(3).uniform(0.0, 1.0, size=(5, 6))
        settings = SolverSettings(max_iterations=300, gap_tolerance=0.0, away_steps=away_steps)
        result = maximize_nsw(ScoreMatrix(scores), settings, record_history=True)
        history = np.asarray(result.history)
        assert history.size >= 2
        noise = OBJECTIVE_NOISE * np.maximum(1.0, np.abs(history[:-1]))
        assert np.all(np.diff(history) >= -noise)

    def test_away_steps_reach_tight_gap(self):
        scores = np.random.default_rng(8).uniform(0.1, 1.0, size=(6, 3))
        result = maximize_nsw(ScoreMatrix(scores), REFERENCE_SETTINGS)
        assert result.gap <= 1e-6
        plain = maximize_nsw(ScoreMatrix(scores), SolverSettings(away_steps=False))
        assert result.value >= plain.value - 1e-6

    @pytest.mark.parametrize("seed", range(20))
    def test_runs_to_tolerance_or_budget(self, seed):
        instance = gen_random(InstanceSpec(users=10, arms=10, gap=0.1, seed=RngSeed(seed, 3)))
        result = maximize_nsw(instance.scores, REFERENCE_SETTINGS)
        assert not result.stalled
        assert result.gap <= REFERENCE_SETTINGS.gap_tolerance or result.iterations == REFERENCE_SETTINGS.max_iterations
        assert result.converged == (result.gap <= REFERENCE_SETTINGS.gap_tolerance)

    def test_loose_tolerance_converges_early(self):
        scores = np.random.default_rng(8).uniform(0.1, 1.0, size=(6, 3))
        result = maximize_nsw(ScoreMatrix(scores), SolverSettings(gap_tolerance=1e-3))
        assert result.converged
        assert not result.stalled
        assert result.iterations < 2000

    def test_iterations_use_log_gradient(self, monkeypatch):
        calls = []

        def counting(weights, scores, floor):
            calls.append(weights.copy())
            return log_gradient(weights, scores, floor)

        monkeypatch.setattr(welfare, "log_gradient", counting)
        scores = np.random.default_rng(5).uniform(0.1, 1.0, size=(4, 4))
        result = welfare.maximize_nsw(ScoreMatrix(scores), SolverSettings(max_iterations=5, gap_tolerance=0.0))
        assert calls and len(calls) in (result.iterations, result.iterations + 1)
        assert calls[0] == pytest.approx(Policy.uniform(4).weights)

    def test_budget_exhaustion_is_not_convergence(self):
        scores = np.random.default_rng(4).uniform(0.1, 1.0, size=(8, 8))
        result = maximize_nsw(ScoreMatrix(scores), SolverSettings(max_iterations=1, gap_tolerance=0.0))
        assert result.iterations == 1
        assert not result.converged

    def test_all_zero_matrix(self):
        result = maximize_nsw(ScoreMatrix(np.zeros((2, 3))))
        assert result.degenerate
        assert result.value == 0.0
        assert np.array_equal(result.policy.weights, Policy.uniform(3).weights)

    def test_zero_user_row_is_flagged(self):
        scores = ScoreMatrix(np.array([[1.0, 0.5], [0.0, 0.0]]))
        result = maximize_nsw(scores)
        assert result.degenerate
        assert result.value == 0.0

    def test_flat_scores_keep_uniform_start(self):
        result = maximize_nsw(ScoreMatrix(np.array([[0.5, 0.5, 0.5]])))
        assert result.iterations == 0
        assert np.array_equal(result.policy.weights, Policy.uniform(3).weights)

    def test_rejects_bad_settings(self):
        with pytest.raises(ValueError):
            SolverSettings(max_iterations=0)
        with pytest.raises(ValueError):
            SolverSettings(utility_floor=0.0)


class TestMaximizeUtilitarian:
    def test_tie_goes_to_lowest_arm(self):
        scores = ScoreMatrix(np.array([[0.6, 0.2, 0.4], [0.6, 1.0, 0.5]]))
        result = maximize_utilitarian(scores)
        assert np.array_equal(result.policy.weights, [1.0, 0.0, 0.0])
        assert result.value == pytest.approx(1.2)

    def test_single_user_agrees_with_nsw(self):
        scores = ScoreMatrix(np.array([[0.2, 0.4, 0.9, 0.3]]))
        expected = maximize_utilitarian(scores).policy.weights
        assert maximize_nsw(scores).policy.weights == pytest.approx(expected, abs=1e-12)


class TestLipschitzBound:
    def test_identical_scores(self):
        s = ScoreMatrix(np.array([[1.0, 0.3], [0.2, 1.0]]))
        assert nsw_lipschitz_bound(Policy.uniform(2), s, s) == 0.0

    def test_single_perturbation(self):
        s1 = np.array([[1.0, 0.3], [0.2, 1.0]])
        s2 = s1.copy()
        s2[0, 1] += 0.1
        policy = Policy(np.array([0.3, 0.7]))
        bound = nsw_lipschitz_bound(policy, ScoreMatrix(s1), ScoreMatrix(s2))
        diff = abs(nsw_value(policy, ScoreMatrix(s1)) - nsw_value(policy, ScoreMatrix(s2)))
        assert bound == pytest.approx(0.1)
        assert diff <= bound

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nsw_lipschitz_bound(Policy.uniform(2), ScoreMatrix(np.ones((2, 2))), ScoreMatrix(np.ones((3, 2))))


def simplex_grid(num_arms: int, step: float) -> np.ndarray:
    ticks = np.round(np.arange(0.0, 1.0 + step / 2, step), 10)
    if num_arms == 1:
        return np.ones((1, 1))
    if num_arms == 2:
        return np.stack([ticks, 1.0 - ticks], axis=1)
    a, b = np.meshgrid(ticks, ticks, indexing="ij")
    keep = a + b <= 1.0 + 1e-12
    return np.stack([a[keep], b[keep], np.clip(1.0 - a[keep] - b[keep], 0.0, None)], axis=1)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(100))
def test_matches_simplex_grid(seed):
    rng = np.random.default_rng(seed)
    users, arms = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    scores = rng.uniform(size=(users, arms))
    grid = simplex_grid(arms, 0.005)
    oracle = float(np.prod(grid @ scores.T, axis=1).max())
    assert abs(maximize_nsw(ScoreMatrix(scores), REFERENCE_SETTINGS).value - oracle) <= 1e-3


def test_gradient_central_differences():
    rng = np.random.default_rng(12)
    for _ in range(100):
        scores = rng.uniform(0.05, 1.0, size=(3, 4))
        x = rng.dirichlet(np.ones(4))
        grad = log_gradient(x, scores, 1e-12)
        h = 1e-6
        for a in range(4):
            bump = np.zeros(4)
            bump[a] = h
            numeric = (log_objective(x + bump, scores, 1e-12) - log_objective(x - bump, scores, 1e-12)) / (2 * h)
            assert grad[a] == pytest.approx(numeric, rel=1e-4)


def test_lipschitz_bound_fuzz():
    rng = np.random.default_rng(21)
    for _ in range(1000):
        users, arms = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        s1, s2 = rng.uniform(size=(2, users, arms))
        policy = Policy(rng.dirichlet(np.ones(arms)))
        diff = abs(nsw_value(policy, ScoreMatrix(s1)) - nsw_value(policy, ScoreMatrix(s2)))
        assert diff <= nsw_lipschitz_bound(policy, ScoreMatrix(s1), ScoreMatrix(s2)) + 1e-12
