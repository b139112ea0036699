"""Domain types shared by every module: preference tensors, winners, scores, policies.

Arms and users are 0-based everywhere. All types are immutable after
construction; their arrays are read-only copies.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from resources.errors import InstanceError

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
U64 = 2**64


def _frozen(array: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RngSeed:
    """A (master_seed, stream_index) pair naming one reproducible random stream."""

    master_seed: int = 0
    stream_index: int = 0

    def __post_init__(self) -> None:
        for name in ("master_seed", "stream_index"):
            value = getattr(self, name)
            if not 0 <= int(value) < U64:
                raise InstanceError(f"{name} must be an unsigned 64-bit integer, got {value}")

    def _sequence(self, *substream: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=int(self.master_seed), spawn_key=(int(self.stream_index), *substream)
        )

    def generator(self, *substream: int) -> np.random.Generator:
        """Philox-backed generator; identical seeds give identical draws on every platform."""
        return np.random.Generator(np.random.Philox(self._sequence(*substream)))


@dataclass(frozen=True, eq=False)
class PreferenceTensor:
    """D×K×K pairwise win probabilities; probs[d, i, j] = P(i beats j | user d)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 3 or probs.shape[1] != probs.shape[2] or 0 in probs.shape:
            raise InstanceError(f"preference tensor must have shape (D, K, K), got {probs.shape}")
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def num_users(self) -> int:
        return self.probs.shape[0]

    @property
    def num_arms(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class WinnerSet:
    """Per-user Condorcet winners a*_d and their deduplicated set."""

    winners: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "winners", tuple(int(w) for w in self.winners))

    @property
    def distinct_winners(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.winners)))

    def __len__(self) -> int:
        return len(self.winners)

    def __getitem__(self, user: int) -> int:
        return self.winners[user]


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """D×K utilities s_d(a) in [0, 1]."""

    scores: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2 or 0 in scores.shape:
            raise InstanceError(f"score matrix must have shape (D, K), got {scores.shape}")
        object.__setattr__(self, "scores", _frozen(scores))

    @property
    def num_users(self) -> int:
        return self.scores.shape[0]

    @property
    def num_arms(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True, eq=False)
class Policy:
    """A point on the K-simplex."""

    weights: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError(f"policy weights must be a non-empty vector, got shape {weights.shape}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("policy weights must be finite and non-negative")
        if abs(weights.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"policy weights must sum to 1, got {weights.sum()!r}")
        object.__setattr__(self, "weights", _frozen(weights))
        cdf = np.cumsum(weights)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", _frozen(cdf))

    @classmethod
    def uniform(cls, num_arms: int) -> Policy:
        return cls(np.full(num_arms, 1.0 / num_arms))

    @classmethod
    def point_mass(cls, num_arms: int, arm: int) -> Policy:
        weights = np.zeros(num_arms)
        weights[arm] = 1.0
        return cls(weights)

    @property
    def num_arms(self) -> int:
        return self.weights.size

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw `size` independent arms."""
        draws = np.searchsorted(self._cdf, rng.random(size), side="right")
        return np.minimum(draws, self.num_arms - 1)


@dataclass(frozen=True, eq=False)
class FeedbackVector:
    """Binary duel outcomes, one per user (1 means the first arm won)."""

    outcomes: np.ndarray

    def __post_init__(self) -> None:
        outcomes = np.asarray(self.outcomes)
        if not np.isin(outcomes, (0, 1)).all():
            raise ValueError("feedback outcomes must be 0 or 1")
        object.__setattr__(self, "outcomes", _frozen(outcomes, dtype=np.uint8))


def condorcet_winner(matrix: np.ndarray) -> int | None:
    """Return the arm beating every other arm with probability > 0.5, if any."""
    num_arms = matrix.shape[0]
    beats = matrix > 0.5
    np.fill_diagonal(beats, True)
    rows = np.flatnonzero(beats.all(axis=1))
    if num_arms == 1:
        return 0
    return int(rows[0]) if rows.size == 1 else None


def find_true_winners(tensor: PreferenceTensor) -> WinnerSet | None:
    """Brute-force Condorcet winners; None if some user has none (each such user is logged)."""
    winners: list[int] = []
    missing: list[int] = []
    for user in range(tensor.num_users):
        winner = condorcet_winner(tensor.probs[user])
        if winner is None:
            missing.append(user)
            logger.warning("No Condorcet winner for user %d", user)
        else:
            winners.append(winner)
    if missing:
        return None
    return WinnerSet(tuple(winners))


def derive_scores(tensor: PreferenceTensor, winners: WinnerSet) -> ScoreMatrix:
    """s_d(i) = clamp(2·P[d, i, a*_d], 0, 1), with the winner's own score pinned to 1."""
    if len(winners) != tensor.num_users:
        raise InstanceError(
            f"winner set covers {len(winners)} users but the tensor has {tensor.num_users}"
        )
    idx = np.asarray(winners.winners, dtype=np.intp)
    if np.any(idx < 0) or np.any(idx >= tensor.num_arms):
        raise InstanceError(f"winner index out of range for K={tensor.num_arms}: {winners.winners}")
    users = np.arange(tensor.num_users)
    scores = np.clip(2.0 * tensor.probs[users, :, idx], 0.0, 1.0)
    scores[users, idx] = 1.0
    return ScoreMatrix(scores)


def expected_utility(policy: Policy, user_scores: np.ndarray) -> float:
    return float(np.dot(policy.weights, user_scores))
