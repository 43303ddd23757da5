"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid solver or experiment configuration (bad rank, shapes, keys)."""


class DivergenceError(RuntimeError):
    """Solver state became non-finite; carries the iteration it happened at."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DataFormatError(ValueError):
    """Malformed data file; carries path and 1-based line number when known."""

    def __init__(self, message, path=None, line=None):
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)
        self.path = path
        self.line = line
