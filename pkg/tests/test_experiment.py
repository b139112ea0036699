import json
from pathlib import Path

import pandas as pd
import pytest

import main
from harness.experiment import (
    SUMMARY_COLUMNS,
    ExperimentConfig,
    derive_stream,
    load_experiment_config,
    run_experiment,
)
from harness.report import build_report

SHARED = Path(__file__).resolve().parent.parent / "shared_files"


def small_config(**overrides) -> dict:
    data = {
        "instances": [{"kind": "random", "users": 2, "arms": 3, "gap": 0.3}],
        "agents": ["fair-etc", {"kind": "uniform-users"}],
        "horizon": 6000,
        "repetitions": 2,
        "master_seed": 11,
        "checkpoint_stride": 500,
    }
    data.update(overrides)
    return data


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    result = run_experiment(ExperimentConfig.from_dict(small_config()), out)
    assert result.failed == 0
    return out


class TestConfig:
    def test_parses_agents_and_horizons(self):
        config = ExperimentConfig.from_dict(small_config(horizon=[100, 200]))
        assert [a.name for a in config.agents] == ["fair-etc", "uniform-users"]
        assert config.horizons == (100, 200)
        assert config.instances[0].label == "random-D2-K3"

    def test_duplicate_labels_get_suffixes(self):
        spec = {"kind": "random", "users": 2, "arms": 3}
        config = ExperimentConfig.from_dict(small_config(instances=[spec, spec]))
        assert [s.label for s in config.instances] == ["random-D2-K3-0", "random-D2-K3-1"]

    def test_round_trip(self):
        config = ExperimentConfig.from_dict(small_config())
        assert ExperimentConfig.from_dict(config.to_dict()) == config

    @pytest.mark.parametrize("overrides", [{"repetitions": 0}, {"agents": []}, {"horizon": 0}])
    def test_rejects_bad_config(self, overrides):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(small_config(**overrides))

    @pytest.mark.parametrize("name", ["regret_scaling.json", "table2.json", "clustered.json"])
    def test_shared_configs_load(self, name):
        config = load_experiment_config(SHARED / name)
        assert config.repetitions == 30

    def test_stream_derivation(self):
        assert derive_stream("agent", 0, 1, 0, 3) == derive_stream("agent", 0, 1, 0, 3)
        assert derive_stream("agent", 0, 1, 0, 3) != derive_stream("agent", 0, 1, 0, 4)
        assert derive_stream("agent", 0) != derive_stream("instance", 0)
        assert 0 <= derive_stream("instance", 5) < 2**64


class TestRunExperiment:
    def test_artifacts(self, sweep_dir):
        traces = sorted(p.name for p in (sweep_dir / "traces").iterdir())
        assert len(traces) == 4
        assert "random-D2-K3__fair-etc__T6000__rep000.csv" in traces
        assert len(list((sweep_dir / "instances").iterdir())) == 2
        runs = json.loads((sweep_dir / "runs.json").read_text())
        assert len(runs) == 4
        assert all(run["error"] is None and not run["truncated"] for run in runs)

    def test_summary(self, sweep_dir):
        summary = pd.read_csv(sweep_dir / "summary.csv")
        assert summary.columns.tolist() == SUMMARY_COLUMNS
        assert len(summary) == 2 * 5
        assert (summary["n_runs"] == 2).all()
        assert (summary["ci95"] >= 0).all()
        assert json.loads((sweep_dir / "summary.json").read_text())[0]["metric"] == "cumulative_regret"

    def test_rerun_is_byte_identical(self, sweep_dir, tmp_path):
        run_experiment(ExperimentConfig.from_dict(small_config()), tmp_path)
        assert (tmp_path / "summary.csv").read_bytes() == (sweep_dir / "summary.csv").read_bytes()

    def test_worker_pool_matches_serial(self, sweep_dir, tmp_path):
        run_experiment(ExperimentConfig.from_dict(small_config()), tmp_path, jobs=2)
        assert (tmp_path / "summary.csv").read_bytes() == (sweep_dir / "summary.csv").read_bytes()

    def test_truncation_is_flagged(self, tmp_path):
        result = run_experiment(ExperimentConfig.from_dict(small_config(horizon=50)), tmp_path)
        assert result.failed == 0
        assert (result.summary["truncated_runs"] == 2).all()
        assert (result.summary["n_runs"] == 2).all()
        assert result.summary["mean"].notna().all()

    def test_truncated_runs_enter_the_means(self, tmp_path):
        result = run_experiment(ExperimentConfig.from_dict(small_config(horizon=50)), tmp_path)
        assert all(o.truncated and o.played for o in result.outcomes)
        summary = result.summary.set_index(["agent", "metric"])
        for agent in ("fair-etc", "uniform-users"):
            regrets = [o.metrics["cumulative_regret"] for o in result.outcomes if o.agent == agent]
            assert summary.loc[(agent, "cumulative_regret"), "mean"] == pytest.approx(sum(regrets) / 2)
            assert summary.loc[(agent, "cumulative_regret"), "mean"] > 0.0

    def test_report_keeps_truncated_curves(self, tmp_path):
        run_experiment(ExperimentConfig.from_dict(small_config(horizon=50, checkpoint_stride=10)), tmp_path / "sweep")
        _, _, curves_path = build_report(tmp_path / "sweep", tmp_path / "report.csv")
        curves = pd.read_csv(curves_path)
        assert set(curves["agent"]) == {"fair-etc", "uniform-users"}
        assert curves.groupby("agent")["t"].max().tolist() == [50, 50]

    def test_failed_runs_are_recorded(self, tmp_path):
        bad = {"kind": "hard", "users": 3, "arms": 4}
        result = run_experiment(ExperimentConfig.from_dict(small_config(instances=[bad])), tmp_path)
        assert result.failed == 4
        assert (result.summary["failed_runs"] == 2).all()
        runs = json.loads((tmp_path / "runs.json").read_text())
        assert all("InstanceError" in run["error"] for run in runs)


class TestReport:
    def test_replay_matches_online(self, sweep_dir, tmp_path):
        summary_path, table_path, curves_path = build_report(sweep_dir, tmp_path / "report.csv")
        assert summary_path.read_bytes() == (sweep_dir / "summary.csv").read_bytes()
        assert table_path.name == "report_table.csv"
        assert curves_path.name == "report_curves.csv"

    def test_table_shape(self, sweep_dir, tmp_path):
        _, table_path, _ = build_report(sweep_dir, tmp_path / "report.csv")
        table = pd.read_csv(table_path)
        assert table.columns.tolist() == ["instance_id", "metric", "fair-etc T=6000", "uniform-users T=6000"]
        assert table["metric"].tolist()[0] == "cumulative_regret"

    def test_curves_are_monotone(self, sweep_dir, tmp_path):
        _, _, curves_path = build_report(sweep_dir, tmp_path / "report.csv")
        curves = pd.read_csv(curves_path)
        for _, group in curves.groupby("agent"):
            assert group["t"].tolist() == list(range(500, 6001, 500))
            assert (group["mean_regret"].diff().dropna() >= -1e-9).all()


class TestCli:
    def test_gen_run_and_report(self, tmp_path):
        env = tmp_path / "env.json"
        trace = tmp_path / "trace.csv"
        assert main.main(["gen", "--kind", "random", "--users", "2", "--arms", "3", "--gap", "0.3", "--seed", "4", "--out", str(env)]) == 0
        assert json.loads(env.read_text())["users"] == 2
        assert main.main(["run", "--env", str(env), "--agent", "fair-etc", "--horizon", "6000", "--seed", "1", "--out", str(trace)]) == 0
        assert len(pd.read_csv(trace)) == 6000

    def test_missing_env(self, tmp_path, capsys):
        code = main.main(["run", "--env", str(tmp_path / "nope.json"), "--agent", "fair-etc", "--horizon", "10", "--out", str(tmp_path / "t.csv")])
        assert code == 1
        assert capsys.readouterr().err.startswith("Error:")

    def test_bad_hard_instance(self, tmp_path, capsys):
        code = main.main(["gen", "--kind", "hard", "--users", "3", "--arms", "4", "--out", str(tmp_path / "h.json")])
        assert code == 1
        assert "Error:" in capsys.readouterr().err

    def test_sweep_and_report(self, tmp_path):
        config_path = tmp_path / "grid.json"
        config_path.write_text(json.dumps(small_config(repetitions=1)))
        assert main.main(["sweep", "--config", str(config_path), "--out", str(tmp_path / "out")]) == 0
        assert main.main(["report", "--in", str(tmp_path / "out"), "--out", str(tmp_path / "r.csv")]) == 0
        assert (tmp_path / "r_curves.csv").exists()
