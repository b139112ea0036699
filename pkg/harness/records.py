"""Per-step run traces and the recorder agents write them through.

Regret is charged against the true scores: identification and exploration duels
as point-mass policies on the played arms, exploitation steps at the policy the
arms were drawn from.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from resources.core import Policy, ScoreMatrix, WinnerSet
from resources.errors import HorizonExhausted
from tools.welfare import nsw_value

logger = logging.getLogger(__name__)

PHASES = ("identify", "explore", "exploit")
IDENTIFY, EXPLORE, EXPLOIT = range(3)
TRACE_COLUMNS = ["t", "phase", "arm_i", "arm_j", "regret_inst", "regret_cum"]
FLOAT_FORMAT = "%.17g"


@dataclass(eq=False)
class RunRecord:
    agent: str
    horizon: int
    phases: np.ndarray
    arm_i: np.ndarray
    arm_j: np.ndarray
    regret: np.ndarray
    checkpoint_steps: np.ndarray
    checkpoint_utilities: np.ndarray  # (checkpoints, D) cumulative û_d(t)
    optimal_value: float
    final_policy: Policy | None = None
    estimated_winners: WinnerSet | None = None
    truncated: bool = False
    truncation_reason: str | None = None
    duration: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return int(self.phases.size)

    @property
    def completed(self) -> bool:
        return self.steps == self.horizon and not self.truncated

    def phase_steps(self, phase: int) -> int:
        return int(np.count_nonzero(self.phases == phase))

    @property
    def regret_curve(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def cumulative_regret(self) -> float:
        return float(self.regret_curve[-1]) if self.steps else 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": np.arange(1, self.steps + 1),
                "phase": np.asarray(PHASES)[self.phases],
                "arm_i": self.arm_i,
                "arm_j": self.arm_j,
                "regret_inst": self.regret,
                "regret_cum": self.regret_curve,
            },
            columns=TRACE_COLUMNS,
        )

    def write_csv(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path


def read_trace(path: str | os.PathLike) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"phase": str}, float_precision="round_trip")
    missing = set(TRACE_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"trace {path} lacks columns {sorted(missing)}")
    return frame


class TraceRecorder:
    """Preallocated trace of at most `horizon` steps; extra steps are cut off, never stored."""

    def __init__(self, agent: str, horizon: int, true_scores: ScoreMatrix, optimal_value: float) -> None:
        self.agent = agent
        self.horizon = horizon
        self.true_scores = true_scores
        self.optimal_value = optimal_value
        self._vertex_nsw = np.prod(true_scores.scores, axis=0)
        self._phases = np.zeros(horizon, dtype=np.int8)
        self._arm_i = np.zeros(horizon, dtype=np.int64)
        self._arm_j = np.zeros(horizon, dtype=np.int64)
        self._regret = np.zeros(horizon, dtype=np.float64)
        self.steps = 0

    @property
    def remaining(self) -> int:
        return self.horizon - self.steps

    def policy_regret(self, policy: Policy) -> float:
        """Instantaneous regret when both arms are drawn from `policy`."""
        return self.optimal_value - nsw_value(policy, self.true_scores)

    def _store(self, phase: int, arm_i, arm_j, regret) -> int:
        arm_i = np.atleast_1d(arm_i)
        n = min(arm_i.size, self.remaining)
        window = slice(self.steps, self.steps + n)
        self._phases[window] = phase
        self._arm_i[window] = arm_i[:n]
        self._arm_j[window] = np.broadcast_to(arm_j, arm_i.shape)[:n]
        self._regret[window] = np.broadcast_to(regret, arm_i.shape)[:n]
        self.steps += n
        return n

    def record_duels(self, phase: int, arm_i, arm_j) -> int:
        """Duels played as deterministic pairs, charged as point-mass policies."""
        arm_i = np.atleast_1d(arm_i)
        arm_j = np.broadcast_to(arm_j, arm_i.shape)
        regret = self.optimal_value - 0.5 * (self._vertex_nsw[arm_i] + self._vertex_nsw[arm_j])
        return self._store(phase, arm_i, arm_j, regret)

    def record_policy_duels(self, phase: int, arm_i, arm_j, regret: float) -> int:
        """Duels whose arms were drawn from a policy with the given instantaneous regret."""
        return self._store(phase, arm_i, arm_j, regret)

    def finish(
        self,
        checkpoint_stride: int,
        *,
        final_policy: Policy | None = None,
        estimated_winners: WinnerSet | None = None,
        truncation_reason: str | None = None,
        duration: float = 0.0,
        **extra,
    ) -> RunRecord:
        n = self.steps
        arm_i, arm_j = self._arm_i[:n].copy(), self._arm_j[:n].copy()
        steps = checkpoint_steps(n, checkpoint_stride)
        per_step = 0.5 * (self.true_scores.scores[:, arm_i] + self.true_scores.scores[:, arm_j])
        utilities = np.cumsum(per_step, axis=1)[:, steps - 1].T if n else np.zeros((0, self.true_scores.num_users))
        if truncation_reason:
            logger.warning("Run of %s truncated: %s", self.agent, truncation_reason)
        return RunRecord(
            agent=self.agent,
            horizon=self.horizon,
            phases=self._phases[:n].copy(),
            arm_i=arm_i,
            arm_j=arm_j,
            regret=self._regret[:n].copy(),
            checkpoint_steps=steps,
            checkpoint_utilities=utilities,
            optimal_value=self.optimal_value,
            final_policy=final_policy,
            estimated_winners=estimated_winners,
            truncated=truncation_reason is not None,
            truncation_reason=truncation_reason,
            duration=duration,
            extra=extra,
        )


def checkpoint_steps(steps: int, stride: int) -> np.ndarray:
    """1-based steps stride, 2·stride, ... plus the final step."""
    if steps == 0:
        return np.zeros(0, dtype=np.int64)
    marks = np.arange(stride, steps + 1, stride, dtype=np.int64)
    if marks.size == 0 or marks[-1] != steps:
        marks = np.append(marks, steps)
    return marks


class RecordingSampler:
    """Wraps a duel source so every batch lands in the trace; raises once the horizon runs out."""

    def __init__(self, sampler, recorder: TraceRecorder, phase: int) -> None:
        self._sampler = sampler
        self._recorder = recorder
        self.phase = phase
        self.num_users = sampler.num_users

    def duel_batch(self, arm_i: int, arm_j: int, n: int) -> np.ndarray:
        if n > self._recorder.remaining:
            self._recorder.record_duels(self.phase, np.full(self._recorder.remaining, arm_i), arm_j)
            raise HorizonExhausted(self._recorder.steps)
        outcomes = self._sampler.duel_batch(arm_i, arm_j, n)
        self._recorder.record_duels(self.phase, np.full(n, arm_i), arm_j)
        return outcomes
