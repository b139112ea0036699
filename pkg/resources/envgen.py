"""Problem-instance generators (random, clustered, hard) and duel feedback sampling."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from resources.core import (
    FeedbackVector,
    PreferenceTensor,
    RngSeed,
    ScoreMatrix,
    WinnerSet,
    condorcet_winner,
    derive_scores,
    find_true_winners,
)
from resources.errors import InstanceError

logger = logging.getLogger(__name__)

KINDS = ("random", "clustered", "hard")
MAX_RESAMPLES = 100


@dataclass(frozen=True)
class InstanceSpec:
    kind: str = "random"
    users: int = 5
    arms: int = 5
    gap: float = 0.1
    rho: float = 1.0
    eps: float = 0.1
    eps_prime: float = 0.01
    target_m: int = 0
    seed: RngSeed = field(default_factory=RngSeed)
    instance_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InstanceError(f"unknown instance kind {self.kind!r}; expected one of {KINDS}")
        if self.users < 1 or self.arms < 1:
            raise InstanceError(f"users and arms must be positive, got D={self.users}, K={self.arms}")

    @property
    def label(self) -> str:
        return self.instance_id or f"{self.kind}-D{self.users}-K{self.arms}"

    def with_seed(self, seed: RngSeed) -> InstanceSpec:
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> InstanceSpec:
        data = dict(data)
        if "id" in data:
            data["instance_id"] = data.pop("id")
        seed = data.pop("seed", None)
        if isinstance(seed, dict):
            data["seed"] = RngSeed(**seed)
        elif seed is not None:
            data["seed"] = RngSeed(int(seed), 0)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InstanceError(f"unknown instance spec fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class Instance:
    tensor: PreferenceTensor
    winners: WinnerSet
    scores: ScoreMatrix
    spec: InstanceSpec | None = None

    @property
    def num_users(self) -> int:
        return self.tensor.num_users

    @property
    def num_arms(self) -> int:
        return self.tensor.num_arms

    @classmethod
    def from_tensor(cls, tensor: PreferenceTensor, spec: InstanceSpec | None = None) -> Instance:
        """Bundle a tensor with its true winners and scores; refuses tensors without winners."""
        winners = find_true_winners(tensor)
        if winners is None:
            raise InstanceError("no Condorcet winner for at least one user; refusing the instance")
        return cls(tensor, winners, derive_scores(tensor, winners), spec)


def _gap_floor(gap: float) -> float:
    """Smallest float p with p - 0.5 >= gap, so every sampled entry honours the gap exactly."""
    low = 0.5 + gap
    while low - 0.5 < gap:
        low = float(np.nextafter(low, 2.0))
    return low


def _check_gap(spec: InstanceSpec) -> None:
    if not 0.0 < spec.gap < 0.5:
        raise InstanceError(f"gap must lie in (0, 0.5), got {spec.gap}")


def _user_matrix(num_arms: int, winner: int, gap: float, rng: np.random.Generator) -> np.ndarray:
    """One user's matrix: winner row in [0.5+gap, 1]; other pairs on either side of 0.5 by a fair coin.

    The larger entry of each pair is sampled and its complement set to 1 - p, which is exact
    for p in [0.5, 1], so reciprocity holds bit-for-bit.
    """
    low = _gap_floor(gap)
    matrix = np.full((num_arms, num_arms), 0.5)
    for j in range(num_arms):
        if j != winner:
            p = rng.uniform(low, 1.0)
            matrix[winner, j], matrix[j, winner] = p, 1.0 - p
    for i in range(num_arms):
        for j in range(i + 1, num_arms):
            if winner in (i, j):
                continue
            p = rng.uniform(low, 1.0)
            if rng.random() < 0.5:
                matrix[i, j], matrix[j, i] = p, 1.0 - p
            else:
                matrix[j, i], matrix[i, j] = p, 1.0 - p
    return matrix


def _generate(spec: InstanceSpec, winners: list[int], rng: np.random.Generator) -> Instance:
    matrices = []
    for user, winner in enumerate(winners):
        for attempt in range(MAX_RESAMPLES):
            matrix = _user_matrix(spec.arms, winner, spec.gap, rng)
            if condorcet_winner(matrix) == winner:
                break
            logger.debug("Resampling user %d (attempt %d): intended winner not unique", user, attempt + 1)
        else:
            raise InstanceError(f"user {user}: no valid matrix after {MAX_RESAMPLES} attempts")
        matrices.append(matrix)
    instance = Instance.from_tensor(PreferenceTensor(np.stack(matrices)), spec)
    if list(instance.winners.winners) != winners:
        raise InstanceError("generated tensor does not reproduce the intended winners")
    logger.info(
        "Generated instance",
        extra={"kind": spec.kind, "users": spec.users, "arms": spec.arms, "winners": winners},
    )
    return instance


def gen_random(spec: InstanceSpec) -> Instance:
    if spec.kind != "random":
        raise InstanceError(f"gen_random needs kind 'random', got {spec.kind!r}")
    _check_gap(spec)
    rng = spec.seed.generator()
    winners = [int(rng.integers(spec.arms)) for _ in range(spec.users)]
    return _generate(spec, winners, rng)


def majority_size(users: int, rho: float) -> int:
    # round first: 0.7 * 10 is 7.000000000000001 in binary floating point
    return math.ceil(round(rho * users, 9))


def gen_clustered(spec: InstanceSpec) -> Instance:
    """The first ⌈ρD⌉ users share one winner w; the rest get winners drawn from [K] minus w."""
    if spec.kind != "clustered":
        raise InstanceError(f"gen_clustered needs kind 'clustered', got {spec.kind!r}")
    _check_gap(spec)
    if not 0.0 < spec.rho <= 1.0 or spec.rho * spec.users < 1.0:
        raise InstanceError(f"rho must lie in (0, 1] with rho*D >= 1, got rho={spec.rho}, D={spec.users}")
    majority = majority_size(spec.users, spec.rho)
    if majority < spec.users and spec.arms < 2:
        raise InstanceError("a minority group needs at least two arms")
    rng = spec.seed.generator()
    shared = int(rng.integers(spec.arms))
    others = [arm for arm in range(spec.arms) if arm != shared]
    winners = [shared] * majority + [
        others[int(rng.integers(len(others)))] for _ in range(spec.users - majority)
    ]
    return _generate(spec, winners, rng)


# The 1-based rule "user d has winner (d mod K) + 1" reads (u + 1) mod K with 0-based users u.
# Here user u gets winner u mod K, i.e. the same users shifted by one position; winner sets,
# good/bad halves and every welfare value (a product over users) are unchanged.
def hard_partition(spec: InstanceSpec) -> tuple[list[int], list[int], list[int]]:
    """Winners per user (u mod K), good winners (first half of the distinct ones) and bad winners."""
    winners = [d % spec.arms for d in range(spec.users)]
    distinct = sorted(set(winners))
    half = len(distinct) // 2
    return winners, distinct[:half], distinct[half:]


def _check_hard(spec: InstanceSpec) -> None:
    if spec.kind != "hard":
        raise InstanceError(f"gen_hard needs kind 'hard', got {spec.kind!r}")
    for name, value in (("K", spec.arms), ("D", spec.users)):
        if value < 4 or value % 2:
            raise InstanceError(f"hard instances need even {name} >= 4, got {value}")
    if not 0.0 < spec.eps < 0.2:
        raise InstanceError(f"eps must lie in (0, 0.2), got {spec.eps}")
    if not 0.0 < spec.eps_prime < 0.05:
        raise InstanceError(f"eps_prime must lie in (0, 0.05), got {spec.eps_prime}")
    good = hard_partition(spec)[1]
    if not 0 <= spec.target_m < len(good):
        raise InstanceError(f"target_m must index one of the {len(good)} good winners, got {spec.target_m}")


def gen_hard(spec: InstanceSpec) -> Instance:
    """Lower-bound construction with good winners, bad winners and a distinguished good arm m.

    The winner's row of each user follows the construction; remaining pairs are filled with
    winners beating non-winners (1), good beating bad (1) and otherwise the lower index winning
    with 1/2 + eps_prime. The filler never enters a score.
    """
    _check_hard(spec)
    winners, good, bad = hard_partition(spec)
    good_set, bad_set = set(good), set(bad)
    target = good[spec.target_m]
    close = 0.5 + spec.eps_prime
    far = close + spec.eps
    num_arms = spec.arms

    def filler(i: int, j: int) -> float:
        """P(i beats j) for a pair not involving the user's winner, i < j."""
        i_win, j_win = i in good_set or i in bad_set, j in good_set or j in bad_set
        if i_win != j_win:
            return 1.0 if i_win else 0.0
        if (i in good_set and j in bad_set) or (i in bad_set and j in good_set):
            return 1.0 if i in good_set else 0.0
        return close

    matrices = []
    for winner in winners:
        matrix = np.full((num_arms, num_arms), 0.5)
        for i in range(num_arms):
            for j in range(i + 1, num_arms):
                if winner not in (i, j):
                    p = filler(i, j)
                    matrix[i, j], matrix[j, i] = p, 1.0 - p
        for arm in range(num_arms):
            if arm == winner:
                continue
            if winner in good_set:
                p = close if arm in good_set else 1.0
            elif arm in good_set:
                p = close if arm == target else far
            else:
                p = 1.0
            matrix[winner, arm], matrix[arm, winner] = p, 1.0 - p
        matrices.append(matrix)

    instance = Instance.from_tensor(PreferenceTensor(np.stack(matrices)), spec)
    if list(instance.winners.winners) != winners:
        raise InstanceError("hard instance does not reproduce its intended winners")
    return instance


def hard_instance_optimum(spec: InstanceSpec) -> float:
    """Optimal NSW of the hard instance: the point mass on arm m gives (1 - 2 eps_prime)^(D-1)."""
    _check_hard(spec)
    return (1.0 - 2.0 * spec.eps_prime) ** (spec.users - 1)


GENERATORS = {"random": gen_random, "clustered": gen_clustered, "hard": gen_hard}


def generate(spec: InstanceSpec) -> Instance:
    return GENERATORS[spec.kind](spec)


def sample_duel(instance: Instance, arm_i: int, arm_j: int, rng: np.random.Generator) -> FeedbackVector:
    """Independently per user, outcome 1 (arm_i wins) with probability P[d, arm_i, arm_j]."""
    return FeedbackVector(rng.random(instance.num_users) < instance.tensor.probs[:, arm_i, arm_j])


class InstanceSampler:
    """Duel feedback source over a fixed instance, drawing from its own private stream."""

    def __init__(self, instance: Instance, rng: np.random.Generator) -> None:
        self.instance = instance
        self.num_users = instance.num_users
        self.num_arms = instance.num_arms
        self._rng = rng

    def duel_batch(self, arm_i: int, arm_j: int, n: int) -> np.ndarray:
        """n duels of (arm_i, arm_j) as an (n, D) array of 0/1 outcomes."""
        probs = self.instance.tensor.probs[:, arm_i, arm_j]
        return (self._rng.random((n, self.num_users)) < probs).astype(np.uint8)
