"""Exception types raised across the package."""


class PinwalkError(Exception):
    """Base class for all package errors."""


class InvalidNodeError(PinwalkError):
    """Node ID out of range for the graph."""


class NoNeighborError(PinwalkError):
    """Sampling requested from a node with degree zero."""


class WalkDeadEndError(PinwalkError):
    """A walk reached a node with no outgoing edges."""

    def __init__(self, node: int):
        super().__init__(f"walk dead-ends at node {node} (degree 0)")
        self.node = node


class InvalidDegreeError(PinwalkError):
    """Degree-dependent computation got a degree-0 node."""


class InvalidQueryPinError(PinwalkError):
    """A query references a pin that cannot start a walk."""


class CounterFullError(PinwalkError):
    """Open-addressing counter exceeded its load-factor budget."""


class GraphFormatError(PinwalkError):
    """Binary graph file cannot be decoded."""


class BadMagicError(GraphFormatError):
    pass


class VersionMismatchError(GraphFormatError):
    pass


class TruncatedFileError(GraphFormatError):
    pass


class ChecksumError(GraphFormatError):
    pass


class InvariantViolationError(GraphFormatError):
    """Decoded graph fails structural validation."""


class ParseError(PinwalkError):
    """Malformed line in a raw input file."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class MissingTopicsError(PinwalkError):
    """Board has no member pin with a topic vector."""


class UndefinedSimilarityError(PinwalkError):
    """Cosine similarity of a zero vector is undefined."""


class EmptyQueryError(PinwalkError):
    """No usable query pin remains after filtering."""


class ConfigError(PinwalkError):
    """Configuration value out of range."""
