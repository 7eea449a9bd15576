"""Exception hierarchy shared across the package."""


class SurviclError(Exception):
    """Base class for all package errors."""


class ConfigError(SurviclError, ValueError):
    """Invalid configuration bounds or malformed config file."""


class ParameterError(SurviclError, ValueError):
    """Distribution parameters outside their valid region."""


class DomainError(SurviclError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class GenerationError(SurviclError, RuntimeError):
    """Synthetic generation failed after the retry budget was exhausted."""


class UndefinedMetricError(SurviclError, ValueError):
    """Metric has no comparable pairs (or otherwise undefined)."""


class ShapeError(SurviclError, ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class ParseError(SurviclError, ValueError):
    """Malformed dataset file; carries the offending location."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SchemaError(SurviclError, ValueError):
    """Data file does not match its declared schema."""


class CheckpointError(SurviclError, ValueError):
    """Checkpoint file is corrupt, truncated or incompatible."""


class TrainingAborted(SurviclError, RuntimeError):
    """Training hit the consecutive non-finite loss limit."""

    def __init__(self, message: str, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class GraphError(SurviclError, RuntimeError):
    """Misuse of the autodiff graph (stale gradients, reused graph)."""
