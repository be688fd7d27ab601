"""Exception hierarchy shared by every zsl module."""

from typing import Optional, Sequence


class ZslError(Exception):
    """Base class for all domain errors raised by the package."""


class ParseError(ZslError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class ConsistencyError(ZslError):
    def __init__(self, first: str, second: str, detail: str):
        self.first = first
        self.second = second
        super().__init__(f"lineages '{first}' and '{second}' are inconsistent: {detail}")


class DuplicationError(ZslError):
    pass


class TaxonLookupError(ZslError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class PreconditionError(ZslError):
    pass


class SelectionError(ZslError):
    def __init__(self, message: str, qualified: int):
        self.qualified = qualified
        super().__init__(f"{message} (only {qualified} candidates qualified)")


class ShapeError(ZslError):
    def __init__(self, op: str, left: Sequence[int], right: Sequence[int]):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{op}: incompatible shapes {self.left} and {self.right}")


class LabelError(ZslError):
    pass


class DivergenceError(ZslError):
    pass


class CoverageError(ZslError):
    pass


class CapacityError(ZslError):
    pass


class FormatError(ZslError):
    def __init__(self, path: str, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class DomainError(ZslError, ValueError):
    pass


class StageError(ZslError):
    """Wraps a failure with the name of the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
