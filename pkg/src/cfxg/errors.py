"""Exception types shared across the package."""


class CfxgError(Exception):
    """Base class for all package errors."""


class ParseError(CfxgError):
    """Malformed input document."""

    def __init__(self, path, offset, message):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: byte {offset}: {message}")


class SchemaError(CfxgError):
    """A tabular input lacks required columns."""


class RowError(CfxgError):
    """A single row of a tabular input is invalid."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class AmbiguityError(CfxgError):
    """Two rating rows cannot be told apart."""


class ConfigError(CfxgError):
    """Inconsistent configuration or arguments."""


class GeometryError(CfxgError):
    """Degenerate shot geometry (e.g. a shot taken from a goal post)."""


class DataError(CfxgError):
    """Input data violates a modelling precondition."""


class NonFiniteError(CfxgError, FloatingPointError):
    """A log-density evaluation produced a non-finite value."""

    def __init__(self, index, message="non-finite value"):
        self.index = index
        super().__init__(f"{message} at parameter index {index}")
