"""Rebuild summaries from a sweep directory by replaying its persisted traces and instances."""
from __future__ import annotations

import logging
import os
from pathlib import Path

import numpy as np
import pandas as pd

from harness.experiment import load_manifest, summarize
from harness.metrics import cumulative_utilities, mean_ci, run_metrics
from harness.records import FLOAT_FORMAT, checkpoint_steps, read_trace
from resources.instance_io import load_instance

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["instance_id", "agent", "horizon", "t", "mean_regret", "ci95"]


def replay_metrics(trace: pd.DataFrame, instance) -> dict[str, float]:
    """Metrics of one run from its trace: R_T from the last regret_cum, utilities from the played arms."""
    regret = float(trace["regret_cum"].iloc[-1]) if len(trace) else 0.0
    utilities = cumulative_utilities(trace["arm_i"].to_numpy(), trace["arm_j"].to_numpy(), instance.scores)
    return run_metrics(regret, utilities)


def regret_curves(groups: dict[tuple[str, str, int], list[np.ndarray]], stride: int) -> pd.DataFrame:
    rows = []
    for (instance_id, agent, horizon), curves in groups.items():
        for t in checkpoint_steps(horizon, stride):
            stats = mean_ci([curve[t - 1] for curve in curves])
            rows.append(
                {
                    "instance_id": instance_id,
                    "agent": agent,
                    "horizon": horizon,
                    "t": int(t),
                    "mean_regret": stats.mean,
                    "ci95": stats.ci95,
                }
            )
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)


def summary_table(summary: pd.DataFrame) -> pd.DataFrame:
    """One row per (instance, metric), one 'mean ± ci95' column per agent and horizon."""
    cells = summary.assign(
        column=summary["agent"] + " T=" + summary["horizon"].astype(str),
        value=[
            "" if pd.isna(mean) else f"{mean:.4f} ± {ci:.4f}"
            for mean, ci in zip(summary["mean"], summary["ci95"])
        ],
    )
    table = cells.pivot(index=["instance_id", "metric"], columns="column", values="value")
    metric_order = {name: idx for idx, name in enumerate(dict.fromkeys(summary["metric"]))}
    instance_order = {name: idx for idx, name in enumerate(dict.fromkeys(summary["instance_id"]))}
    table = table.reset_index()
    table = table.sort_values(
        ["instance_id", "metric"],
        key=lambda col: col.map(instance_order if col.name == "instance_id" else metric_order),
    )
    column_order = list(dict.fromkeys(cells["column"]))
    return table[["instance_id", "metric", *column_order]]


def build_report(in_dir: str | os.PathLike, out_path: str | os.PathLike) -> tuple[Path, Path, Path]:
    """Write PATH.csv (tidy summary), PATH_table.csv (pivot) and PATH_curves.csv (regret curves)."""
    root = Path(in_dir)
    config, outcomes = load_manifest(root)
    instances = {}
    curves: dict[tuple[str, str, int], list[np.ndarray]] = {}

    for outcome in outcomes:
        if outcome.error is not None or outcome.trace_file is None:
            continue
        if outcome.instance_file not in instances:
            instances[outcome.instance_file] = load_instance(root / outcome.instance_file)
        trace = read_trace(root / outcome.trace_file)
        outcome.metrics = replay_metrics(trace, instances[outcome.instance_file])
        if outcome.played:
            key = (outcome.instance_id, outcome.agent, outcome.horizon)
            curves.setdefault(key, []).append(trace["regret_cum"].to_numpy())

    summary = summarize(config, outcomes)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    table_path = out.with_name(f"{out.stem}_table.csv")
    curves_path = out.with_name(f"{out.stem}_curves.csv")
    summary.to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    summary_table(summary).to_csv(table_path, index=False, lineterminator="\n")
    regret_curves(curves, config.checkpoint_stride).to_csv(
        curves_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )
    logger.info("Report written", extra={"summary": str(out), "table": str(table_path), "curves": str(curves_path)})
    return out, table_path, curves_path
