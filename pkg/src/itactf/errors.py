"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`ItaCtfError`,
which the CLI maps to exit code 1.
"""


class ItaCtfError(Exception):
    """Base class for all library errors."""


class DimensionError(ItaCtfError, ValueError):
    """Array shapes do not agree."""


class DomainError(ItaCtfError, ValueError):
    """Input is outside the domain of the operation."""


class ContractError(ItaCtfError, ValueError):
    """An argument violates a structural precondition (e.g. an invalid warp path)."""


class SingularMatrixError(ItaCtfError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DegenerateBatchError(DomainError):
    """A prototype mini-batch lacks same-class or different-class members."""


class DegenerateRowError(DomainError):
    """A coefficient row has zero norm, so its cosine similarity is undefined."""


class UndefinedMetricError(DomainError):
    """A metric needs a class that has no support."""

    def __init__(self, message, classes=()):
        super().__init__(message)
        self.classes = tuple(classes)


class DivergenceError(ItaCtfError, ArithmeticError):
    def __init__(self, message, epoch=None, block=None):
        super().__init__(message)
        self.epoch = epoch
        self.block = block


class ParseError(DomainError):
    def __init__(self, message, path=None, line=None, column=None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.column = column


class StageError(ItaCtfError):
    """A pipeline stage failed; wraps the underlying library error."""

    def __init__(self, stage, seed, cause):
        super().__init__(f"stage {stage!r} failed for seed {seed}: {cause}")
        self.stage = stage
        self.seed = seed
        self.cause = cause
