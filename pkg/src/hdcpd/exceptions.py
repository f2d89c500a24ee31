"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`HdcpdError`,
which itself subclasses :class:`ValueError` so that callers treating bad input
generically keep working.
"""

from __future__ import annotations


class HdcpdError(ValueError):
    """Base class for all package errors."""


class NonFinite(HdcpdError):
    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, column {col}")


class TooFewRows(HdcpdError):
    pass


class DimensionMismatch(HdcpdError):
    pass


class LengthMismatch(HdcpdError):
    pass


class TooFewPoints(HdcpdError):
    pass


class UnsupportedBlockSize(HdcpdError):
    pass


class InvalidPartition(HdcpdError):
    pass


class EmptyCluster(HdcpdError):
    pass


class DegenerateInput(HdcpdError):
    pass


class TooLarge(HdcpdError):
    """Exact enumeration would exceed the configured cap."""


class CacheIO(HdcpdError):
    pass


class IndexOutOfRange(HdcpdError):
    pass


class ConstantLabeling(HdcpdError):
    """The clustering put every observation in the same cluster."""


class TooShort(HdcpdError):
    pass


class BadCovariance(HdcpdError):
    pass


class BadRange(HdcpdError):
    pass


class BadParameter(HdcpdError):
    pass


class UnknownScenario(HdcpdError):
    pass


class ParseError(HdcpdError):
    def __init__(self, line: int, col: int, token: str = ""):
        self.line = line
        self.col = col
        self.token = token
        super().__init__(f"cannot parse {token!r} at line {line}, column {col}")


class RaggedRows(HdcpdError):
    pass
