"""Exception hierarchy shared across the package."""


class WupError(Exception):
    """Base class for all package errors."""


class DomainError(WupError, ValueError):
    """An argument lies outside the domain of the operation."""


class AlignmentError(WupError, ValueError):
    """A function vector does not match the vertex set of its space."""


class DegenerateInputError(WupError, ValueError):
    """Input makes the quantity undefined (zero function, zero energy, ...)."""


class PreconditionError(WupError, ValueError):
    pass


class CapacityError(WupError):
    """Requested construction exceeds the configured vertex cap."""


class ConstructionError(WupError):
    pass


class InfiniteResistanceError(WupError):
    pass


class InsufficientDataError(WupError):
    """Not enough admissible samples to estimate a constant."""


class HypothesisViolation(WupError):
    pass


class IncompleteReportError(WupError, KeyError):
    pass


class ConfigValidationError(WupError):
    """Raised with the full list of offending fields."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
