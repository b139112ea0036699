"""Online agents for the multi-user dueling bandit: explore-then-commit, ε-greedy, and baselines.

Every agent starts with the shared Condorcet tournament, then estimates each user's
scores against its estimated winner and plays pairs drawn from a welfare-maximizing policy.
The recorder charges regret against the true scores; agents never look at them.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

import config as settings
from harness.metrics import optimal_nsw
from harness.records import EXPLOIT, EXPLORE, IDENTIFY, RecordingSampler, RunRecord, TraceRecorder
from resources.core import Policy, RngSeed, ScoreMatrix, WinnerSet
from resources.envgen import Instance, InstanceSampler
from resources.errors import HorizonExhausted
from resources.selectors import round_robin_pairs
from tools.condorcet import dkwt
from tools.welfare import SolverResult, SolverSettings, maximize_nsw, maximize_utilitarian

logger = logging.getLogger(__name__)

AGENT_KINDS = ("fair_etc", "fair_eps", "util_etc", "util_eps", "uniform_users")
MIN_DELTA = 1e-12

# substreams of an agent seed
FEEDBACK_STREAM = 0
POLICY_STREAM = 1


@dataclass(frozen=True)
class AgentConfig:
    kind: str
    horizon: int
    delta_hat: float = 0.0025
    etc_scale: float = 0.25
    eps_scale: float = 0.1
    solver: SolverSettings = field(default_factory=SolverSettings)
    seed: RngSeed = field(default_factory=RngSeed)
    recompute_every: int = 1
    fixed_eps: float | None = None
    identification_budget: int | None = None
    gap_hint: float | None = None
    checkpoint_stride: int = settings.DEFAULT_CHECKPOINT_STRIDE

    def __post_init__(self) -> None:
        kind = self.kind.replace("-", "_")
        if kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent {self.kind!r}; expected one of {[k.replace('_', '-') for k in AGENT_KINDS]}")
        object.__setattr__(self, "kind", kind)
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not 0.0 < self.delta_hat < 1.0:
            raise ValueError(f"delta_hat must lie in (0, 1), got {self.delta_hat}")
        if self.etc_scale <= 0 or self.eps_scale <= 0:
            raise ValueError("etc_scale and eps_scale must be positive")
        if self.recompute_every < 1:
            raise ValueError(f"recompute_every must be >= 1, got {self.recompute_every}")
        if self.fixed_eps is not None and not 0.0 <= self.fixed_eps <= 1.0:
            raise ValueError(f"fixed_eps must lie in [0, 1], got {self.fixed_eps}")
        if self.checkpoint_stride < 1:
            raise ValueError(f"checkpoint_stride must be >= 1, got {self.checkpoint_stride}")

    @property
    def name(self) -> str:
        return self.kind.replace("_", "-")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = self.name
        return data

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> AgentConfig:
        data = {**dict(data), **overrides}
        if "agent" in data:
            data["kind"] = data.pop("agent")
        if isinstance(data.get("solver"), dict):
            data["solver"] = SolverSettings(**data["solver"])
        seed = data.get("seed")
        if isinstance(seed, dict):
            data["seed"] = RngSeed(**seed)
        elif isinstance(seed, int):
            data["seed"] = RngSeed(seed, 0)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown agent config fields: {sorted(unknown)}")
        return cls(**data)


def compute_delta(num_arms: int, horizon: int, delta_hat: float) -> float:
    """δ = K ln(K/2) / (2 Δ̂ T), clamped into [1e-12, 1]."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    raw = num_arms * math.log(num_arms / 2.0) / (2.0 * delta_hat * horizon)
    if raw > 1.0:
        logger.warning("Confidence %.6g exceeds 1 for K=%d, T=%d; clamped to 1", raw, num_arms, horizon)
        return 1.0
    if raw < MIN_DELTA:
        logger.warning("Confidence %.6g is below %g for K=%d; clamped", raw, MIN_DELTA, num_arms)
        return MIN_DELTA
    return raw


def compute_L(num_arms: int, num_users: int, num_winners: int, horizon: int, scale: float) -> int:
    """Duels per (arm, estimated winner) pair during exploration."""
    if num_winners < 1:
        raise ValueError("num_winners must be >= 1")
    value = (
        scale
        * (num_arms * num_winners) ** (-2.0 / 3.0)
        * (num_users * horizon) ** (2.0 / 3.0)
        * math.log(num_users * num_arms * horizon) ** (1.0 / 3.0)
    )
    return max(1, math.ceil(value))


def compute_eps_t(num_users: int, num_arms: int, num_winners: int, t: int, t0: int, scale: float) -> float:
    """Exploration probability at step t, t0 steps after which the tournament ended."""
    elapsed = t - t0
    if elapsed < 1:
        raise ValueError(f"t must exceed t0, got t={t}, t0={t0}")
    if elapsed == 1:
        log_term = max(math.log(num_users * num_arms), 1.0)
    else:
        log_term = math.log(num_users * num_arms * elapsed)
    value = (
        scale
        * num_users ** (2.0 / 3.0)
        * (num_arms * num_winners) ** (1.0 / 3.0)
        * (log_term / elapsed) ** (1.0 / 3.0)
    )
    return min(1.0, value)


class EstimatedScores:
    """Empirical P̂_d(a, â*_d) for every user and arm, turned into scores ŝ = clamp(2 P̂, 0, 1).

    Unsampled arms score 0; the estimated winner always scores 1.
    """

    def __init__(self, winners: WinnerSet, num_arms: int) -> None:
        self.winners = winners
        self.num_users = len(winners)
        self.num_arms = num_arms
        self._winner_idx = np.asarray(winners.winners, dtype=np.intp)
        self.wins = np.zeros((self.num_users, num_arms), dtype=np.int64)
        self.counts = np.zeros((self.num_users, num_arms), dtype=np.int64)
        self.version = 0

    def update(self, arm_i: int, arm_j: int, outcomes: np.ndarray) -> None:
        """Fold in duels of (arm_i, arm_j); only users whose winner is one of the two arms learn."""
        if arm_i == arm_j:
            return
        outcomes = np.atleast_2d(outcomes)
        n = outcomes.shape[0]
        won_i = outcomes.sum(axis=0, dtype=np.int64)
        against_j = self._winner_idx == arm_j
        against_i = self._winner_idx == arm_i
        if against_j.any():
            self.wins[against_j, arm_i] += won_i[against_j]
            self.counts[against_j, arm_i] += n
        if against_i.any():
            self.wins[against_i, arm_j] += n - won_i[against_i]
            self.counts[against_i, arm_j] += n
        if against_i.any() or against_j.any():
            self.version += 1

    @property
    def preference(self) -> np.ndarray:
        return np.divide(self.wins, self.counts, out=np.zeros(self.wins.shape), where=self.counts > 0)

    def scores(self) -> ScoreMatrix:
        scores = np.clip(2.0 * self.preference, 0.0, 1.0)
        scores[np.arange(self.num_users), self._winner_idx] = 1.0
        return ScoreMatrix(scores)


Solver = Callable[[ScoreMatrix], SolverResult]


def _solver_for(config: AgentConfig) -> Solver:
    if config.kind.startswith("util"):
        return maximize_utilitarian
    return lambda scores: maximize_nsw(scores, config.solver)


def make_sampler(instance: Instance, config: AgentConfig) -> InstanceSampler:
    return InstanceSampler(instance, config.seed.generator(FEEDBACK_STREAM))


class _Run:
    """State shared by every agent: recorder, private random stream, clock, tournament outcome."""

    def __init__(self, sampler: InstanceSampler, config: AgentConfig, optimal_value: float | None) -> None:
        instance = sampler.instance
        if optimal_value is None:
            optimal_value = optimal_nsw(instance.scores).value
        self.sampler = sampler
        self.config = config
        self.num_users = instance.num_users
        self.num_arms = instance.num_arms
        self.recorder = TraceRecorder(config.name, config.horizon, instance.scores, optimal_value)
        self.rng = config.seed.generator(POLICY_STREAM)
        self.started = time.perf_counter()
        self.winners: WinnerSet | None = None
        self.identification_steps = 0

    def identify(self) -> bool:
        delta = compute_delta(self.num_arms, self.config.horizon, self.config.delta_hat)
        source = RecordingSampler(self.sampler, self.recorder, IDENTIFY)
        try:
            result = dkwt(
                self.num_arms,
                self.num_users,
                delta / self.num_users,
                source,
                budget=self.config.identification_budget,
                gap=self.config.gap_hint,
            )
        except HorizonExhausted:
            self.identification_steps = self.recorder.steps
            return False
        self.winners = result.winners
        self.identification_steps = result.steps_used
        return True

    def finish(self, policy: Policy | None = None, reason: str | None = None, **extra) -> RunRecord:
        return self.recorder.finish(
            self.config.checkpoint_stride,
            final_policy=policy,
            estimated_winners=self.winners,
            truncation_reason=reason,
            duration=time.perf_counter() - self.started,
            identification_steps=self.identification_steps,
            **extra,
        )

    def exploit(self, policy: Policy) -> None:
        """Spend the rest of the horizon on pairs drawn independently from a fixed policy."""
        remaining = self.recorder.remaining
        if remaining == 0:
            return
        arm_i = policy.sample(self.rng, remaining)
        arm_j = policy.sample(self.rng, remaining)
        self.recorder.record_policy_duels(EXPLOIT, arm_i, arm_j, self.recorder.policy_regret(policy))


IDENTIFY_TRUNCATED = "horizon exhausted during identification"
EXPLORE_TRUNCATED = "horizon exhausted during exploration"


def _explore_then_commit(sampler: InstanceSampler, config: AgentConfig, optimal_value: float | None) -> RunRecord:
    run = _Run(sampler, config, optimal_value)
    if not run.identify():
        return run.finish(reason=IDENTIFY_TRUNCATED)

    distinct = run.winners.distinct_winners
    length = compute_L(run.num_arms, run.num_users, len(distinct), config.horizon, config.etc_scale)
    estimates = EstimatedScores(run.winners, run.num_arms)
    source = RecordingSampler(sampler, run.recorder, EXPLORE)
    try:
        for winner in distinct:
            for arm in range(run.num_arms):
                estimates.update(arm, winner, source.duel_batch(arm, winner, length))
    except HorizonExhausted:
        return run.finish(reason=EXPLORE_TRUNCATED, exploration_length=length)

    result = _solver_for(config)(estimates.scores())
    logger.info(
        "Committed after %d steps",
        run.recorder.steps,
        extra={"agent": config.name, "exploration_length": length, "winners": distinct},
    )
    run.exploit(result.policy)
    return run.finish(result.policy, exploration_length=length)


def _epsilon_greedy(sampler: InstanceSampler, config: AgentConfig, optimal_value: float | None) -> RunRecord:
    run = _Run(sampler, config, optimal_value)
    if not run.identify():
        return run.finish(reason=IDENTIFY_TRUNCATED)

    recorder = run.recorder
    solve = _solver_for(config)
    estimates = EstimatedScores(run.winners, run.num_arms)
    num_winners = len(run.winners.distinct_winners)
    schedule = round_robin_pairs(run.winners.distinct_winners, run.num_arms)
    cursor = 0
    start = recorder.steps
    policy: Policy | None = None
    regret = 0.0
    solved_version = -1
    since_solve = 0

    for t in range(start + 1, config.horizon + 1):
        if config.fixed_eps is not None:
            eps = config.fixed_eps
        else:
            eps = compute_eps_t(run.num_users, run.num_arms, num_winners, t, start, config.eps_scale)
        if schedule and run.rng.random() <= eps:
            arm, winner = schedule[cursor % len(schedule)]
            cursor += 1
            estimates.update(arm, winner, sampler.duel_batch(arm, winner, 1))
            recorder.record_duels(EXPLORE, arm, winner)
            continue

        if policy is None or (since_solve >= config.recompute_every and estimates.version != solved_version):
            policy = solve(estimates.scores()).policy
            regret = recorder.policy_regret(policy)
            solved_version = estimates.version
            since_solve = 0
        since_solve += 1
        arm_i, arm_j = (int(a) for a in policy.sample(run.rng, 2))
        estimates.update(arm_i, arm_j, sampler.duel_batch(arm_i, arm_j, 1))
        recorder.record_policy_duels(EXPLOIT, arm_i, arm_j, regret)

    if policy is None:
        policy = solve(estimates.scores()).policy
    return run.finish(policy, exploration_pairs=cursor)


def run_fair_etc(sampler: InstanceSampler, config: AgentConfig, optimal_value: float | None = None) -> RunRecord:
    if config.kind != "fair_etc":
        raise ValueError(f"run_fair_etc needs kind 'fair_etc', got {config.kind!r}")
    return _explore_then_commit(sampler, config, optimal_value)


def run_fair_eps(sampler: InstanceSampler, config: AgentConfig, optimal_value: float | None = None) -> RunRecord:
    if config.kind != "fair_eps":
        raise ValueError(f"run_fair_eps needs kind 'fair_eps', got {config.kind!r}")
    return _epsilon_greedy(sampler, config, optimal_value)


def run_utilitarian_variant(
    sampler: InstanceSampler, config: AgentConfig, optimal_value: float | None = None
) -> RunRecord:
    """The fair agents' control flow with the sum of utilities as the objective."""
    if config.kind == "util_etc":
        return _explore_then_commit(sampler, config, optimal_value)
    if config.kind == "util_eps":
        return _epsilon_greedy(sampler, config, optimal_value)
    raise ValueError(f"run_utilitarian_variant needs kind 'util_etc' or 'util_eps', got {config.kind!r}")


def uniform_users_policy(winners: WinnerSet, num_arms: int) -> Policy:
    """Pick a user uniformly and play its winner: π(w) = share of users whose winner is w."""
    counts = np.bincount(np.asarray(winners.winners), minlength=num_arms)
    return Policy(counts / counts.sum())


def run_uniform_users(sampler: InstanceSampler, config: AgentConfig, optimal_value: float | None = None) -> RunRecord:
    if config.kind != "uniform_users":
        raise ValueError(f"run_uniform_users needs kind 'uniform_users', got {config.kind!r}")
    run = _Run(sampler, config, optimal_value)
    if not run.identify():
        return run.finish(reason=IDENTIFY_TRUNCATED)
    policy = uniform_users_policy(run.winners, run.num_arms)
    run.exploit(policy)
    return run.finish(policy)


RUNNERS = {
    "fair_etc": run_fair_etc,
    "fair_eps": run_fair_eps,
    "util_etc": run_utilitarian_variant,
    "util_eps": run_utilitarian_variant,
    "uniform_users": run_uniform_users,
}


def run_agent(instance: Instance, config: AgentConfig, optimal_value: float | None = None) -> RunRecord:
    """Run one agent over a fresh feedback stream drawn from the agent's seed."""
    return RUNNERS[config.kind](make_sampler(instance, config), config, optimal_value)
