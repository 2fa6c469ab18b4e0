"""Exception types shared across the package."""


class DualSLError(Exception):
    pass


class ShapeError(DualSLError, ValueError):
    pass


class ContractError(DualSLError):
    """A caller violated an operation's precondition."""


class ValidationError(DualSLError, ValueError):
    pass


class IngestionError(DualSLError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParseError(DualSLError, ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class ConfigurationError(DualSLError):
    pass


class CheckpointError(DualSLError):
    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
