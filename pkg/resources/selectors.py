import numpy as np


def argmax_lowest(values: np.ndarray) -> int:
    """Index of the largest value; ties go to the lowest index."""
    return int(np.argmax(values))


def select_pair(candidates: set[int]) -> tuple[int, int]:
    """The two lowest-indexed candidates of a user's tournament set."""
    first, second = sorted(candidates)[:2]
    return first, second


def select_user(candidate_sets: list[set[int]]) -> int | None:
    """Lowest-indexed user whose candidate set still holds more than one arm."""
    for user, candidates in enumerate(candidate_sets):
        if len(candidates) > 1:
            return user
    return None


def round_robin_pairs(winners: tuple[int, ...], num_arms: int) -> list[tuple[int, int]]:
    """Fixed cyclic schedule over (a, w) for each estimated winner w and every arm a != w."""
    return [(arm, w) for w in sorted(winners) for arm in range(num_arms) if arm != w]
