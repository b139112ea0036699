class FairDuelError(Exception):
    """Base class for every error raised by this package."""


class InstanceError(FairDuelError, ValueError):
    """An instance, spec or score table is malformed or unusable."""


class IdentificationBudgetError(FairDuelError, RuntimeError):
    """The Condorcet tournament ran past its step budget."""

    def __init__(self, message: str, steps_used: int, budget: int, unresolved: dict[int, list[int]]) -> None:
        super().__init__(message)
        self.steps_used = steps_used
        self.budget = budget
        self.unresolved = unresolved


class HorizonExhausted(FairDuelError):
    """The horizon ended while a batch of duels was still owed."""

    def __init__(self, steps_recorded: int) -> None:
        super().__init__(f"horizon exhausted after {steps_recorded} steps")
        self.steps_recorded = steps_recorded
