from dataclasses import dataclass, field

import numpy as np

from resources.core import PreferenceTensor

# One unit in the last place at 1.0: the slack allowed for P(i,j) + P(j,i) = 1.
RECIPROCITY_TOL = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class Violation:
    kind: str  # "range", "diagonal" or "reciprocity"
    user: int
    i: int
    j: int
    value: float

    def describe(self) -> str:
        if self.kind == "reciprocity":
            return (
                f"probs[{self.user}][{self.i}][{self.j}] + probs[{self.user}][{self.j}][{self.i}]"
                f" = {self.value!r}, expected 1"
            )
        if self.kind == "diagonal":
            return f"probs[{self.user}][{self.i}][{self.i}] = {self.value!r}, expected 0.5"
        return f"probs[{self.user}][{self.i}][{self.j}] = {self.value!r} is outside [0, 1]"


@dataclass(frozen=True)
class ValidationResult:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [f"Error: {v.describe()}" for v in self.violations]


def validate_tensor(tensor: PreferenceTensor) -> ValidationResult:
    """Check range, diagonal and reciprocity; report every violating coordinate, never raise.

    Reciprocity is reported once per unordered pair, at (d, i, j) with i < j.
    """
    probs = tensor.probs
    violations: list[Violation] = []

    bad_range = ~((probs >= 0.0) & (probs <= 1.0))
    for d, i, j in zip(*np.nonzero(bad_range)):
        violations.append(Violation("range", int(d), int(i), int(j), float(probs[d, i, j])))

    diag = np.diagonal(probs, axis1=1, axis2=2)
    for d, i in zip(*np.nonzero(diag != 0.5)):
        violations.append(Violation("diagonal", int(d), int(i), int(i), float(diag[d, i])))

    sums = probs + np.transpose(probs, (0, 2, 1))
    upper = np.triu(np.ones(probs.shape[1:], dtype=bool), k=1)
    off = ~(np.abs(sums - 1.0) <= RECIPROCITY_TOL) & upper
    for d, i, j in zip(*np.nonzero(off)):
        violations.append(Violation("reciprocity", int(d), int(i), int(j), float(sums[d, i, j])))

    return ValidationResult(violations)
