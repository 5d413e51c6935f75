"""Exception hierarchy shared by every meld module."""

from typing import List, Optional, Tuple


class MeldError(Exception):
    """Root of all errors raised by meld."""


# graph data model

class SmilesSyntaxError(MeldError, ValueError):
    """Grammar violation in a SMILES-subset string."""

    def __init__(self, position: int, expected: str, text: str = ""):
        self.position = position
        self.expected = expected
        self.text = text
        super().__init__(f"at position {position}: expected {expected}")


class UnknownAtom(MeldError, ValueError):
    """Atom symbol outside the configured vocabulary."""

    def __init__(self, symbol: str, position: int = -1):
        self.symbol = symbol
        self.position = position
        super().__init__(f"unknown atom symbol {symbol!r} at position {position}")


class UnclosedRing(MeldError, ValueError):
    """Ring-closure digit opened but never closed."""

    def __init__(self, digits: List[int]):
        self.digits = digits
        super().__init__(f"unclosed ring closure digit(s) {digits}")


class UnclosedBranch(MeldError, ValueError):
    """Unbalanced parentheses."""

    def __init__(self, position: int):
        self.position = position
        super().__init__(f"unbalanced branch parenthesis at position {position}")


class DisconnectedGraph(MeldError, ValueError):
    pass


class MaskedInput(MeldError, ValueError):
    pass


class TooLarge(MeldError, ValueError):
    pass


class EmptyDataset(MeldError, ValueError):
    pass


class RecordIndexError(MeldError, IndexError):
    """Edge index outside [0, n) in a dataset record.

    Attributes:
        line: 1-based line of the record when raised while loading a file
    """

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message)


class DatasetError(MeldError):
    """Too many dataset lines failed to parse.

    Attributes:
        failures: (line number, exception) pairs, line numbers are 1-based
    """

    def __init__(self, failures: List[Tuple[int, Exception]], total: int):
        self.failures = failures
        self.total = total
        first = ", ".join(f"line {line}: {err}" for line, err in failures[:3])
        super().__init__(f"{len(failures)}/{total} records failed ({first})")


# differentiable core

class ShapeMismatch(MeldError, ValueError):
    pass


class NonPositiveTemperature(MeldError, ValueError):
    pass


class NumericalError(MeldError, ArithmeticError):
    pass


class NotScalar(MeldError, ValueError):
    pass


class DetachedRoot(MeldError, RuntimeError):
    pass


# schedules and models

class ModeMismatch(MeldError, ValueError):
    pass


class OrderViolation(MeldError, ValueError):
    pass


class DegenerateEmbedding(MeldError, ValueError):
    pass


class SizeOverflow(MeldError, ValueError):
    pass


# checkpoints

class CheckpointError(MeldError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptBuffer(CheckpointError):
    pass


# evaluation

class EmptySet(MeldError, ValueError):
    pass


class MixedSizes(MeldError, ValueError):
    pass


# cli

class ConfigError(MeldError, ValueError):
    pass
