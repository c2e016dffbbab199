"""Exception types shared across the engine."""


class TierqueryError(Exception):
    """Base class for all errors raised by this package."""


# -- columnar / interchange ------------------------------------------------

class SchemaMismatch(TierqueryError):
    """Input data does not match the declared schema."""


class ParseError(TierqueryError):
    """A cell could not be parsed; carries row/column coordinates."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where = f" (row {row}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class CorruptFrame(TierqueryError):
    """Bad magic, frame length, or checksum in a TIERCOL stream."""


class VersionUnsupported(TierqueryError):
    """TIERCOL stream written by an unsupported format version."""


# -- plan IR / SQL frontend -------------------------------------------------

class GrammarError(TierqueryError):
    """Malformed plan text; carries line/column coordinates."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" at line {line}:{column}" if line is not None else ""
        super().__init__(message + where)


class UnknownFunction(TierqueryError):
    """A function name used in a plan is missing from its registry."""


class SqlSyntaxError(TierqueryError):
    """SQL text outside the supported grammar; carries position info."""

    def __init__(self, message, position=None, expected=None):
        self.position = position
        self.expected = expected or []
        where = f" at position {position}" if position is not None else ""
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(message + where + hint)


class UnsupportedFeature(TierqueryError):
    """SQL construct recognized but deliberately out of scope (e.g. JOIN)."""

    def __init__(self, construct):
        self.construct = construct
        super().__init__(f"unsupported construct: {construct}")


# -- statistics / cost model --------------------------------------------------

class UnsupportedColumnType(TierqueryError):
    """Histogram requested over a non-numeric or list column."""


class UnclassifiableOperator(TierqueryError):
    """Coefficient requested for an operator outside classes 1 and 2."""


class EstimationUnavailable(TierqueryError):
    """A size estimate was required but some coefficient is unknown."""


# -- decomposition / execution -------------------------------------------------

class NonDecomposableMeasure(TierqueryError):
    """Aggregate measure (median) cannot be split into partial/final form."""


class InvalidSplit(TierqueryError):
    """Split index out of range or inside a rewritten aggregate pair."""


class ExecError(TierqueryError):
    """Runtime failure inside the executor, tagged with the node index."""

    def __init__(self, node_index, message):
        self.node_index = node_index
        super().__init__(f"node {node_index}: {message}")


# -- object store ---------------------------------------------------------------

class DuplicateKey(TierqueryError):
    """PUT of an object key that already exists in the bucket."""


class NoSuchBucket(TierqueryError):
    """Referenced bucket does not exist."""


class NoSuchObject(TierqueryError):
    """Referenced object does not exist."""
