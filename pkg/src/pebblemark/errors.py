"""Exception hierarchy shared by every module."""


class PebblemarkError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class RangeError(PebblemarkError, ValueError):
    pass


class ShapeError(PebblemarkError, ValueError):
    pass


class ParseError(PebblemarkError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LegalityError(PebblemarkError):
    pass


class ResolutionError(PebblemarkError):
    """A dynamic parent was requested before it could be resolved."""


class ContractError(PebblemarkError):
    pass


class ConfigurationError(PebblemarkError):
    pass


class MemoryFault(PebblemarkError):
    pass
