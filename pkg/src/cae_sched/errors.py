"""Exception types shared across the solver modules."""


class CaeSchedError(Exception):
    """Base class for all library errors."""


class ScenarioValidationError(CaeSchedError):
    """Raised when a scenario violates one or more invariants.

    Carries the full list of violations so callers can report all
    problems at once instead of fixing them one by one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{v.code} at {v.location}: {v.message}" for v in self.violations)
        super().__init__(f"invalid scenario: {lines}")


class Violation:
    """One violated invariant: a machine-readable code plus a location."""

    __slots__ = ("code", "location", "message")

    def __init__(self, code, location, message):
        self.code = code
        self.location = location
        self.message = message

    def __repr__(self):
        return f"Violation({self.code!r}, {self.location!r}, {self.message!r})"


class CapacityError(CaeSchedError):
    """The joint state space exceeds the configured ceiling."""


class MultichainError(CaeSchedError):
    """The induced chain has more than one closed recurrent class."""

    def __init__(self, classes):
        self.classes = [sorted(c) for c in classes]
        super().__init__(
            f"induced chain is multichain: {len(self.classes)} closed classes"
        )


class NonConvergence(CaeSchedError):
    """Value iteration failed to converge within the iteration cap."""


class BadBracket(CaeSchedError):
    """The bisection upper endpoint is not feasible."""


class InfeasiblePair(CaeSchedError):
    """Policy pair cannot be mixed to hit the frequency budget."""


class DegenerateSlope(CaeSchedError):
    """Both tangent anchors share the same slope; no intersection exists."""
