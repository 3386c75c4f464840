"""Report-valued validation results shared by the scoring and event modules."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of a structural validation pass.

    ``violations`` holds one human-readable message per broken rule; an empty
    tuple means the checked value is valid.
    """

    violations: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.passed
