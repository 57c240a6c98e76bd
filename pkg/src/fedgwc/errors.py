"""Exception hierarchy shared across the package."""


class FedGWCError(Exception):
    """Base class for all errors raised by fedgwc."""


class ShapeError(FedGWCError, ValueError):
    """Inputs have inconsistent lengths or dimensions."""


class CohortTooSmallError(FedGWCError, ValueError):
    """Too few clients to compute cohort statistics or to sample."""


class DomainError(FedGWCError, ValueError):
    """An argument lies outside the domain of the operation."""


class ClusterTooSmallError(FedGWCError, ValueError):
    """A cluster has fewer members than the operation requires."""


class ConfigError(FedGWCError, ValueError):
    """Invalid configuration value.

    ``line`` is the 1-based line of the offending key in the source file,
    when known.
    """

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class DivergenceError(FedGWCError, RuntimeError):
    """Local training produced a non-finite loss."""


class MissingInputError(FedGWCError, FileNotFoundError):
    """A required input file or directory does not exist."""
