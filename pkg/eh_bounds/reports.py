"""Result records shared by the analytic bound modules."""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional


@dataclass(frozen=True)
class Condition:
    """A precondition of a bound, evaluated as ``lhs`` against ``rhs``."""

    name: str
    holds: bool
    lhs: float
    rhs: float

    def __str__(self) -> str:
        verdict = "holds" if self.holds else "fails"
        return f"{self.name} {verdict} ({self.lhs:.6g} vs {self.rhs:.6g})"


@dataclass(frozen=True)
class BoundReport:
    """A bound on log M together with its terms and checked conditions.

    Attributes:
        value: The bound itself, in bits
        first_order: Capacity term
        second_order: Square-root term
        log_term: Logarithmic correction
        residual: Constant (kappa) term
        conditions: Every precondition evaluated for this point
    """

    value: float
    first_order: float
    second_order: float
    log_term: float
    residual: float
    conditions: List[Condition] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return all(c.holds for c in self.conditions)

    def violated(self) -> List[str]:
        return [c.name for c in self.conditions if not c.holds]

    def condition(self, name: str) -> Optional[Condition]:
        for c in self.conditions:
            if c.name == name:
                return c
        return None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["feasible"] = self.feasible
        return data
