class DataError(ValueError):
    """Input data is missing, malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyInputError(DataError):
    pass


class DomainError(ValueError):
    """An argument lies outside the operation's domain."""
