import numpy as np
import pytest

from harness.metrics import (
    cumulative_utilities,
    gini,
    instantaneous_regret,
    mean_ci,
    optimal_nsw,
    run_metrics,
    summary_metrics,
)
from harness.records import EXPLOIT, EXPLORE, TraceRecorder, checkpoint_steps, read_trace
from resources.core import Policy, ScoreMatrix

OPPOSED = ScoreMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))


class TestRegret:
    def test_optimal_policy_has_no_regret(self):
        optimum = optimal_nsw(OPPOSED)
        assert instantaneous_regret(OPPOSED, optimum.value, optimum.policy, optimum.policy) == pytest.approx(0.0)

    def test_zero_score_arm(self):
        scores = ScoreMatrix(np.array([[1.0, 0.0], [1.0, 0.0]]))
        point = Policy.point_mass(2, 1)
        assert instantaneous_regret(scores, 1.0, point, point) == 1.0

    def test_point_mass_on_one_side(self):
        optimum = optimal_nsw(OPPOSED).value
        point = Policy.point_mass(2, 0)
        assert optimum == pytest.approx(0.25)
        assert instantaneous_regret(OPPOSED, optimum, point, point) == pytest.approx(0.25)


class TestUtilities:
    def test_always_playing_the_winner(self):
        scores = ScoreMatrix(np.array([[1.0, 0.3]]))
        assert cumulative_utilities(np.zeros(10, int), np.zeros(10, int), scores).tolist() == [10.0]

    def test_winner_against_zero_arm(self):
        assert cumulative_utilities(np.array([0, 0]), np.array([1, 1]), OPPOSED).tolist() == [1.0, 1.0]

    def test_additive_over_traces(self):
        scores = ScoreMatrix(np.random.default_rng(0).uniform(size=(3, 4)))
        rng = np.random.default_rng(1)
        i, j = rng.integers(4, size=50), rng.integers(4, size=50)
        whole = cumulative_utilities(i, j, scores)
        parts = cumulative_utilities(i[:20], j[:20], scores) + cumulative_utilities(i[20:], j[20:], scores)
        assert np.allclose(whole, parts)


class TestGini:
    def test_equal_utilities(self):
        assert gini(np.array([3.0, 3.0, 3.0])) == 0.0

    def test_two_users(self):
        assert gini(np.array([0.0, 1.0])) == pytest.approx(0.5)

    def test_scale_invariant(self):
        u = np.array([0.2, 1.5, 0.7, 3.0])
        assert gini(7.5 * u) == pytest.approx(gini(u))

    def test_all_zero(self, caplog):
        assert gini(np.zeros(4)) == 0.0
        assert "undefined" in caplog.text


class TestAggregation:
    def test_single_run_has_zero_width(self):
        stats = mean_ci([4.2])
        assert stats.mean == 4.2
        assert stats.ci95 == 0.0
        assert stats.degenerate

    def test_normal_interval(self):
        values = [1.0, 2.0, 3.0, 4.0]
        stats = mean_ci(values)
        assert stats.mean == pytest.approx(2.5)
        assert stats.ci95 == pytest.approx(1.96 * np.std(values, ddof=1) / 2.0)

    def test_nsw_of_equal_utilities(self):
        metrics = run_metrics(12.0, np.array([5.0, 5.0, 5.0]))
        assert metrics["nash_social_welfare"] == pytest.approx(5.0)
        assert metrics["min_welfare"] == 5.0
        assert metrics["utilitarian_welfare"] == 15.0
        assert metrics["gini"] == 0.0

    def test_summary_means_within_range(self):
        runs = [run_metrics(r, np.array([u, 2 * u])) for r, u in [(1.0, 1.0), (3.0, 2.0), (2.0, 4.0)]]
        summary = summary_metrics(runs)
        for name, stats in summary.items():
            values = [run[name] for run in runs]
            assert min(values) - 1e-12 <= stats.mean <= max(values) + 1e-12
            assert stats.ci95 >= 0.0


class TestTraceRecorder:
    def test_point_mass_charges(self):
        recorder = TraceRecorder("fair-etc", 4, OPPOSED, 0.25)
        recorder.record_duels(EXPLORE, np.array([0, 1]), 1)
        assert recorder._regret[:2].tolist() == [0.25, 0.25]
        recorder.record_policy_duels(EXPLOIT, np.array([0, 1]), np.array([1, 0]), 0.0)
        record = recorder.finish(checkpoint_stride=3)
        assert record.completed
        assert record.cumulative_regret == 0.5
        assert record.checkpoint_steps.tolist() == [3, 4]
        assert record.checkpoint_utilities[-1].tolist() == [1.5, 2.5]

    def test_overflow_is_cut(self):
        recorder = TraceRecorder("fair-etc", 3, OPPOSED, 0.25)
        stored = recorder.record_duels(EXPLORE, np.zeros(5, int), 1)
        assert stored == 3
        assert recorder.remaining == 0

    @pytest.mark.parametrize("steps, stride, expected", [(10, 4, [4, 8, 10]), (8, 4, [4, 8]), (3, 100, [3]), (0, 5, [])])
    def test_checkpoint_steps(self, steps, stride, expected):
        assert checkpoint_steps(steps, stride).tolist() == expected

    def test_trace_file(self, tmp_path):
        recorder = TraceRecorder("fair-etc", 3, OPPOSED, 0.25)
        recorder.record_duels(EXPLORE, np.array([0, 1, 0]), 1)
        record = recorder.finish(checkpoint_stride=100)
        frame = read_trace(record.write_csv(tmp_path / "trace.csv"))
        assert frame.columns.tolist() == ["t", "phase", "arm_i", "arm_j", "regret_inst", "regret_cum"]
        assert frame["t"].tolist() == [1, 2, 3]
        assert frame["phase"].tolist() == ["explore"] * 3
        assert frame["regret_cum"].iloc[-1] == record.cumulative_regret
