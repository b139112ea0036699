import numpy as np
import pytest

from resources.core import PreferenceTensor, RngSeed
from resources.envgen import Instance, InstanceSpec, generate


def ranking_tensor(rankings: list[list[int]]) -> PreferenceTensor:
    """Deterministic preferences: each user's arm ranked earlier beats a later one with probability 1."""
    num_arms = len(rankings[0])
    probs = np.full((len(rankings), num_arms, num_arms), 0.5)
    for d, ranking in enumerate(rankings):
        for pos, i in enumerate(ranking):
            for j in ranking[pos + 1:]:
                probs[d, i, j], probs[d, j, i] = 1.0, 0.0
    return PreferenceTensor(probs)


@pytest.fixture
def deterministic_instance() -> Instance:
    # user 0 ranks 0 > 1 > 2, user 1 ranks 2 > 1 > 0
    return Instance.from_tensor(ranking_tensor([[0, 1, 2], [2, 1, 0]]))


@pytest.fixture
def random_instance() -> Instance:
    return generate(InstanceSpec(kind="random", users=3, arms=4, gap=0.2, seed=RngSeed(7, 0)))


@pytest.fixture
def hard_spec() -> InstanceSpec:
    # dyadic eps values keep every score exact in binary floating point
    return InstanceSpec(kind="hard", users=4, arms=4, eps=0.125, eps_prime=0.03125, target_m=0)
