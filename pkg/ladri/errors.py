"""Exception hierarchy shared by every pipeline stage."""


class LadriError(ValueError):
    """Root of all LADRI errors. Messages carry the ``[LADRI]`` prefix."""

    def __init__(self, message: str):
        super().__init__(f"[LADRI] {message}")


class InvalidState(LadriError):
    pass


class InvalidScene(LadriError):
    pass


class InvalidInput(LadriError):
    pass


class ModelError(LadriError):
    pass


class DataError(LadriError):
    pass


class VersionError(LadriError):
    pass


class SchemaError(LadriError):
    pass


class ConfigError(LadriError):
    """Configuration violation; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ParseError(LadriError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class StratifyError(LadriError):
    def __init__(self, label: int, message: str):
        self.label = label
        super().__init__(message)


class CoverageError(LadriError):
    def __init__(self, label: int, message: str):
        self.label = label
        super().__init__(message)
