"""Experiment sweeps: (instance, agent, horizon, repetition) cells, run in a worker pool.

Layout of an output directory:
    config.json                                   resolved configuration
    instances/<instance_id>__rep<r>.json          one drawn instance per repetition
    traces/<instance_id>__<agent>__T<T>__rep<r>.csv
    runs.json                                     per-run manifest (files, flags, durations, errors)
    summary.csv, summary.json                     per-cell mean and 95% CI of every metric
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import pandas as pd

import config as settings
from agent import AgentConfig, run_agent
from harness.metrics import METRICS, optimal_nsw, record_metrics, summary_metrics
from harness.records import FLOAT_FORMAT
from resources.core import RngSeed
from resources.envgen import InstanceSpec, generate
from resources.instance_io import resolve_resource_path, save_instance

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "instance_id", "agent", "metric", "mean", "ci95", "horizon", "n_runs", "truncated_runs", "failed_runs",
]


def derive_stream(tag: str, *indices: int) -> int:
    """64-bit stream index for a sweep cell: blake2b over the tag and the cell indices."""
    payload = json.dumps([tag, *indices]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class ExperimentConfig:
    instances: tuple[InstanceSpec, ...]
    agents: tuple[AgentConfig, ...]
    horizons: tuple[int, ...]
    repetitions: int = 30
    master_seed: int = 0
    checkpoint_stride: int = settings.DEFAULT_CHECKPOINT_STRIDE

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if not self.instances or not self.agents or not self.horizons:
            raise ValueError("an experiment needs at least one instance, agent and horizon")
        if any(h < 1 for h in self.horizons):
            raise ValueError(f"horizons must be >= 1, got {self.horizons}")
        ids = [spec.label for spec in self.instances]
        if len(set(ids)) != len(ids):
            raise ValueError(f"instance ids must be unique, got {ids}")
        names = [agent.name for agent in self.agents]
        if len(set(names)) != len(names):
            raise ValueError(f"agents must be distinct, got {names}")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        horizon = data.get("horizon")
        if horizon is None:
            raise ValueError("experiment config needs 'horizon'")
        horizons = tuple(int(h) for h in (horizon if isinstance(horizon, list) else [horizon]))
        stride = int(data.get("checkpoint_stride", settings.DEFAULT_CHECKPOINT_STRIDE))

        specs = [InstanceSpec.from_dict(spec) for spec in data.get("instances", [])]
        labels = [spec.label for spec in specs]
        specs = [
            spec if labels.count(spec.label) == 1 else replace(spec, instance_id=f"{spec.label}-{idx}")
            for idx, spec in enumerate(specs)
        ]
        agents = []
        for entry in data.get("agents", []):
            entry = {"kind": entry} if isinstance(entry, str) else dict(entry)
            entry.pop("horizon", None)
            agents.append(AgentConfig.from_dict(entry, horizon=horizons[0], checkpoint_stride=stride))
        return cls(
            instances=tuple(specs),
            agents=tuple(agents),
            horizons=horizons,
            repetitions=int(data.get("repetitions", 30)),
            master_seed=int(data.get("master_seed", 0)),
            checkpoint_stride=stride,
        )

    def to_dict(self) -> dict:
        agents = []
        for agent in self.agents:
            entry = agent.to_dict()
            for key in ("horizon", "seed", "checkpoint_stride"):
                entry.pop(key)
            agents.append(entry)
        return {
            "instances": [spec.to_dict() for spec in self.instances],
            "agents": agents,
            "repetitions": self.repetitions,
            "horizon": list(self.horizons),
            "master_seed": self.master_seed,
            "checkpoint_stride": self.checkpoint_stride,
        }


def load_experiment_config(path: str | os.PathLike) -> ExperimentConfig:
    resolved = resolve_resource_path(path)
    return ExperimentConfig.from_dict(json.loads(resolved.read_text(encoding="utf-8")))


@dataclass
class RunOutcome:
    instance_id: str
    agent: str
    horizon: int
    repetition: int
    instance_file: str | None = None
    trace_file: str | None = None
    metrics: dict[str, float] | None = None
    truncated: bool = False
    truncation_reason: str | None = None
    identification_steps: int | None = None
    duration: float = 0.0
    error: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def played(self) -> bool:
        """Ran to its end or out of horizon without an error; truncated runs count."""
        return self.error is None and self.metrics is not None


def instance_filename(instance_id: str, repetition: int) -> str:
    return f"instances/{instance_id}__rep{repetition:03d}.json"


def trace_filename(instance_id: str, agent: str, horizon: int, repetition: int) -> str:
    return f"traces/{instance_id}__{agent}__T{horizon}__rep{repetition:03d}.csv"


def run_unit(config: ExperimentConfig, instance_index: int, repetition: int, out_dir: str) -> list[RunOutcome]:
    """One repetition of one instance spec: draw the instance once, then run every agent and horizon on it."""
    out = Path(out_dir)
    base = config.instances[instance_index]
    instance_id = base.label
    cells = [
        (a, agent, h, horizon)
        for a, agent in enumerate(config.agents)
        for h, horizon in enumerate(config.horizons)
    ]
    outcomes = [RunOutcome(instance_id, agent.name, horizon, repetition) for _, agent, _, horizon in cells]

    try:
        seed = RngSeed(config.master_seed, derive_stream("instance", instance_index, repetition))
        instance = generate(base.with_seed(seed))
        optimum = optimal_nsw(instance.scores).value
        instance_file = instance_filename(instance_id, repetition)
        save_instance(instance, out / instance_file)
    except Exception as exc:
        logger.exception("Instance %s rep %d could not be generated", instance_id, repetition)
        for outcome in outcomes:
            outcome.error = f"{type(exc).__name__}: {exc}"
        return outcomes

    for outcome, (a, agent, h, horizon) in zip(outcomes, cells):
        outcome.instance_file = instance_file
        agent_seed = RngSeed(config.master_seed, derive_stream("agent", instance_index, a, h, repetition))
        agent_config = replace(agent, horizon=horizon, seed=agent_seed, checkpoint_stride=config.checkpoint_stride)
        try:
            record = run_agent(instance, agent_config, optimum)
            trace_file = trace_filename(instance_id, agent.name, horizon, repetition)
            record.write_csv(out / trace_file)
        except Exception as exc:
            logger.error(
                "Run failed: %s",
                exc,
                extra={"instance": instance_id, "agent": agent.name, "horizon": horizon, "rep": repetition},
            )
            outcome.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
            continue
        outcome.trace_file = trace_file
        outcome.metrics = record_metrics(record, instance.scores)
        outcome.truncated = record.truncated
        outcome.truncation_reason = record.truncation_reason
        outcome.identification_steps = record.extra.get("identification_steps")
        outcome.duration = record.duration
        outcome.extra = {k: v for k, v in record.extra.items() if k != "identification_steps"}
    return outcomes


def summarize(config: ExperimentConfig, outcomes: list[RunOutcome]) -> pd.DataFrame:
    """Tidy per-cell summary in config order.

    Means cover every run that did not fail, truncated ones included; `truncated_runs` flags how
    many of those ran out of horizon. Cells where every run failed get empty mean and ci95.
    """
    rows = []
    for spec in config.instances:
        for agent in config.agents:
            for horizon in config.horizons:
                cell = sorted(
                    (o for o in outcomes if (o.instance_id, o.agent, o.horizon) == (spec.label, agent.name, horizon)),
                    key=lambda o: o.repetition,
                )
                played = [o.metrics for o in cell if o.played]
                summary = summary_metrics(played) if played else {}
                for metric in METRICS:
                    stats = summary.get(metric)
                    rows.append(
                        {
                            "instance_id": spec.label,
                            "agent": agent.name,
                            "metric": metric,
                            "mean": stats.mean if stats else math.nan,
                            "ci95": stats.ci95 if stats else math.nan,
                            "horizon": horizon,
                            "n_runs": len(played),
                            "truncated_runs": sum(o.truncated for o in cell),
                            "failed_runs": sum(o.error is not None for o in cell),
                        }
                    )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary(summary: pd.DataFrame, out_dir: str | os.PathLike) -> None:
    out = Path(out_dir)
    summary.to_csv(out / "summary.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    records = summary.astype(object).where(summary.notna(), None).to_dict(orient="records")
    (out / "summary.json").write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")


@dataclass
class ExperimentResult:
    summary: pd.DataFrame
    outcomes: list[RunOutcome]

    @property
    def failed(self) -> int:
        return sum(o.error is not None for o in self.outcomes)


def run_experiment(config: ExperimentConfig, out_dir: str | os.PathLike, jobs: int = 1) -> ExperimentResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")

    units = [(i, rep) for i in range(len(config.instances)) for rep in range(config.repetitions)]
    logger.info(
        "Starting sweep",
        extra={"units": len(units), "agents": len(config.agents), "horizons": list(config.horizons), "jobs": jobs},
    )
    outcomes: list[RunOutcome] = []
    if jobs <= 1:
        for done, (i, rep) in enumerate(units, start=1):
            outcomes.extend(run_unit(config, i, rep, str(out)))
            logger.info("Finished %d/%d units", done, len(units))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_unit, config, i, rep, str(out)): (i, rep) for i, rep in units}
            for done, future in enumerate(as_completed(futures), start=1):
                outcomes.extend(future.result())
                logger.info("Finished %d/%d units", done, len(units))

    outcomes.sort(key=lambda o: (o.instance_id, o.agent, o.horizon, o.repetition))
    manifest = [asdict(o) for o in outcomes]
    (out / "runs.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    summary = summarize(config, outcomes)
    write_summary(summary, out)

    failed = sum(o.error is not None for o in outcomes)
    if failed:
        logger.error("%d of %d runs failed; see runs.json", failed, len(outcomes))
    logger.info("Sweep written to %s", out)
    return ExperimentResult(summary, outcomes)


def load_manifest(in_dir: str | os.PathLike) -> tuple[ExperimentConfig, list[RunOutcome]]:
    root = Path(in_dir)
    config = ExperimentConfig.from_dict(json.loads((root / "config.json").read_text(encoding="utf-8")))
    runs = json.loads((root / "runs.json").read_text(encoding="utf-8"))
    return config, [RunOutcome(**run) for run in runs]
