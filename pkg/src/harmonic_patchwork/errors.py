"""Exception hierarchy shared by all modules."""


class PatchworkError(Exception):
    """Base class for every error raised by the package."""


class FamilyError(PatchworkError, ValueError):
    """Invalid analytic family (r < 2, duplicate members, base point outside)."""


class GridError(PatchworkError, ValueError):
    pass


class AmbiguousCellError(PatchworkError):
    """A field was evaluated in a cell flagged as a tie."""


class DuplicateValueError(PatchworkError, ValueError):
    """Two members take the same value at the point under study."""


class SingularPointError(PatchworkError):
    def __init__(self, message: str, location: complex):
        super().__init__(f"{message} at {location}")
        self.location = location


class StepTooLargeError(PatchworkError):
    def __init__(self, message: str, location: complex):
        super().__init__(f"{message} at {location}")
        self.location = location


class NoEscapeError(PatchworkError):
    pass


class UnderResolvedError(PatchworkError, ValueError):
    """Mollifier radius or flux band too small for the grid spacing."""


class NearSingularityError(PatchworkError, ValueError):
    pass


class UnderdeterminedError(PatchworkError, ValueError):
    pass


class DegenerateInputError(PatchworkError, ValueError):
    pass


class PreconditionError(PatchworkError, ValueError):
    pass


class ConfigError(PatchworkError):
    """Scenario could not be parsed or validated.

    ``pointer`` is a JSON pointer into the offending document when the problem
    is semantic; ``line``/``column`` are set for parse errors.
    """

    def __init__(self, message: str, pointer: str = "", line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        elif pointer:
            where = f" at {pointer}"
        super().__init__(message + where)
        self.pointer = pointer
        self.line = line
        self.column = column
