"""Exception types shared across the package."""


class NlocchError(Exception):
    """Base class for all package errors."""


class GridMismatchError(NlocchError, ValueError):
    """Two fields (or a field and an operator) live on different grids."""


class ResolutionError(NlocchError, ValueError):
    """The interaction kernel is too narrow for the grid spacing."""


class ConfigError(NlocchError, ValueError):
    """Invalid experiment configuration.

    Attributes:
        field: dotted ``section.key`` name of the offending entry, if known.
        line: 1-based line number in the source text, if known.
    """

    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class SolverAbort(NlocchError, RuntimeError):
    """A time step produced non-finite values."""

    def __init__(self, message, time=None, max_phi=None):
        self.time = time
        self.max_phi = max_phi
        super().__init__(f"{message} (t={time}, max|phi|={max_phi})")
