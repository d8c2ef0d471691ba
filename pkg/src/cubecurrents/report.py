from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any


def jsonable(value: Any) -> Any:
    """Recursively convert values for JSON output; rationals become "p/q" strings."""
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if hasattr(value, "to_dict"):
        return value.to_dict()
    if hasattr(value, "item"):  # numpy scalars
        return value.item()
    return value


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: dict = field(default_factory=dict)
    locator: dict | None = None
    detail: Any = None

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        out = {"name": self.name, "passed": self.passed, "witness": jsonable(self.witness)}
        if self.locator is not None:
            out["locator"] = jsonable(self.locator)
        if self.detail is not None:
            out["detail"] = jsonable(self.detail)
        return out


@dataclass
class Report:
    """An ordered collection of check results."""

    checks: list[CheckResult] = field(default_factory=list)

    def add(self, result: CheckResult) -> CheckResult:
        self.checks.append(result)
        return result

    def extend(self, results) -> None:
        for r in results:
            self.add(r)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def first_failure(self) -> CheckResult | None:
        return next((c for c in self.checks if not c.passed), None)

    def __getitem__(self, name: str) -> list[CheckResult]:
        return [c for c in self.checks if c.name == name]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}
