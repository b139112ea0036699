"""Multi-user Condorcet-winner identification by a DKW elimination tournament.

Every duel batch of a pair is shared by all users: each user still holding both arms
in its candidate set judges the pair on the pair's accumulated samples.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from resources.core import WinnerSet
from resources.errors import IdentificationBudgetError
from resources.selectors import select_pair, select_user

logger = logging.getLogger(__name__)

UNKNOWN_GAP_BUDGET = 10**8


class DuelSampler(Protocol):
    num_users: int

    def duel_batch(self, arm_i: int, arm_j: int, n: int) -> np.ndarray:
        """n duels of (arm_i, arm_j) as an (n, D) array, 1 where arm_i won."""
        ...


@dataclass(frozen=True)
class RoundParams:
    width: float  # h_r
    confidence: float  # δ_r
    samples: int  # N_r


def round_params(r: int, delta_prime: float) -> RoundParams:
    """h_r = 2^-(r+1), δ_r = 6δ'/(π² r²), N_r = ⌈8 ln(4/δ_r) / h_r²⌉ (natural log)."""
    if r < 1:
        raise ValueError(f"round index must be >= 1, got {r}")
    if not 0.0 < delta_prime < 1.0:
        raise ValueError(f"delta_prime must lie in (0, 1), got {delta_prime}")
    width = 2.0 ** -(r + 1)
    confidence = 6.0 * delta_prime / (math.pi**2 * r**2)
    samples = math.ceil(8.0 * math.log(4.0 / confidence) / width**2)
    return RoundParams(width, confidence, samples)


def default_budget(num_arms: int, num_users: int, gap: float | None = None) -> int:
    if gap is None or gap <= 0:
        return UNKNOWN_GAP_BUDGET
    return math.ceil(50 * num_arms**2 * num_users / gap**2)


@dataclass
class TournamentState:
    """Candidate sets S_d, shared round trackers R(i, j) and shared pair counts.

    Pair keys are ordered (i < j); `pair_wins[(i, j)][d]` counts duels user d saw i win.
    """

    num_arms: int
    num_users: int
    candidate_sets: list[set[int]] = field(default_factory=list)
    round_trackers: dict[tuple[int, int], int] = field(default_factory=dict)
    pair_wins: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    pair_totals: dict[tuple[int, int], int] = field(default_factory=dict)
    steps_used: int = 0
    resolved_at: list[int | None] = field(default_factory=list)

    @classmethod
    def fresh(cls, num_arms: int, num_users: int) -> TournamentState:
        state = cls(num_arms, num_users)
        state.candidate_sets = [set(range(num_arms)) for _ in range(num_users)]
        state.resolved_at = [0 if num_arms == 1 else None for _ in range(num_users)]
        return state

    def round_of(self, i: int, j: int) -> int:
        return self.round_trackers.get((min(i, j), max(i, j)), 1)

    def pair_counts(self, user: int, i: int, j: int) -> tuple[int, int]:
        """(wins of i over j, total duels) seen by `user`."""
        key = (min(i, j), max(i, j))
        total = self.pair_totals.get(key, 0)
        if total == 0:
            return 0, 0
        low_wins = int(self.pair_wins[key][user])
        return (low_wins, total) if i < j else (total - low_wins, total)

    def _record(self, i: int, j: int, outcomes: np.ndarray) -> None:
        key = (min(i, j), max(i, j))
        wins = outcomes.sum(axis=0, dtype=np.int64)
        if i > j:
            wins = outcomes.shape[0] - wins
        if key in self.pair_wins:
            self.pair_wins[key] += wins
        else:
            self.pair_wins[key] = wins
        self.pair_totals[key] = self.pair_totals.get(key, 0) + outcomes.shape[0]

    def unresolved(self) -> dict[int, list[int]]:
        return {d: sorted(s) for d, s in enumerate(self.candidate_sets) if len(s) > 1}


def dkw_compare(
    i: int,
    j: int,
    user: int,
    delta_prime: float,
    state: TournamentState,
    sampler: DuelSampler,
    budget: int | None = None,
) -> TournamentState:
    """Duel (i, j) in rounds of N_r until `user` drops one of them.

    Each round updates every user still holding both arms; the loser is dropped once
    |p̂ - 0.5| > h_r / 2 on the pair's accumulated samples.
    """
    if i == j:
        raise ValueError("dkw_compare needs two distinct arms")
    if not {i, j} <= state.candidate_sets[user]:
        raise ValueError(f"arms {i}, {j} are not both candidates of user {user}")
    key = (min(i, j), max(i, j))
    r = state.round_of(i, j)
    while {i, j} <= state.candidate_sets[user]:
        params = round_params(r, delta_prime)
        if budget is not None and state.steps_used + params.samples > budget:
            raise IdentificationBudgetError(
                f"identification budget of {budget} duels exceeded at pair ({i}, {j}), round {r}; "
                f"unresolved users: {state.unresolved()}",
                steps_used=state.steps_used,
                budget=budget,
                unresolved=state.unresolved(),
            )
        outcomes = sampler.duel_batch(i, j, params.samples)
        state._record(i, j, outcomes)
        state.steps_used += params.samples

        low, high = key
        total = state.pair_totals[key]
        for other, candidates in enumerate(state.candidate_sets):
            if not {i, j} <= candidates:
                continue
            p_low = state.pair_wins[key][other] / total
            if abs(p_low - 0.5) > 0.5 * params.width:
                candidates.discard(high if p_low > 0.5 else low)
                if len(candidates) == 1:
                    state.resolved_at[other] = state.steps_used
        r += 1
        state.round_trackers[key] = r
    return state


@dataclass(frozen=True)
class IdentificationResult:
    winners: WinnerSet
    steps_used: int
    state: TournamentState


def dkwt(
    num_arms: int,
    num_users: int,
    delta: float,
    sampler: DuelSampler,
    *,
    budget: int | None = None,
    gap: float | None = None,
) -> IdentificationResult:
    """Run DKW-Compare at per-pair confidence δ/K until every candidate set is a singleton.

    Users are served in index order and each compares its two lowest-indexed candidates.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    budget = default_budget(num_arms, num_users, gap) if budget is None else budget
    state = TournamentState.fresh(num_arms, num_users)
    per_pair = delta / num_arms

    while (user := select_user(state.candidate_sets)) is not None:
        i, j = select_pair(state.candidate_sets[user])
        dkw_compare(i, j, user, per_pair, state, sampler, budget)

    winners = WinnerSet(tuple(next(iter(s)) for s in state.candidate_sets))
    logger.info(
        "Identification finished after %d duels: winners %s",
        state.steps_used,
        winners.winners,
    )
    for user, step in enumerate(state.resolved_at):
        logger.debug("User %d resolved after %s duels", user, step)
    return IdentificationResult(winners, state.steps_used, state)
