"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: config/usage -> 1,
data -> 2, numerical -> 3.
"""


class SplatmapError(Exception):
    """Base class for all errors raised by splatmap."""


class ConfigError(SplatmapError):
    """Invalid configuration, flags, or precondition on a request."""


class DataError(SplatmapError):
    """Input data is missing, malformed, or inconsistent."""


class CsvParseError(DataError):
    """CSV could not be parsed; carries 1-based row/column location.

    ``kind`` is one of: missing-file, empty, ragged-row, non-numeric,
    bad-column.
    """

    def __init__(self, kind: str, message: str, row: int | None = None,
                 column: int | None = None):
        self.kind = kind
        self.row = row
        self.column = column
        loc = ""
        if row is not None:
            loc += f" (row {row}"
            loc += f", column {column})" if column is not None else ")"
        super().__init__(f"{kind}: {message}{loc}")


class DegenerateDataError(DataError):
    """Data has no usable variation (e.g. all points identical)."""


class NumericalError(SplatmapError):
    """Optimization or numerical routine produced non-finite values."""


class DegenerateQuaternionError(NumericalError):
    """A quaternion with zero norm cannot be normalized."""
