"""Exception hierarchy shared by all modules."""


class PufError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(PufError, ValueError):
    pass


class UnsupportedSizeError(PufError, ValueError):
    pass


class NotEnrolledError(PufError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else "not enrolled"


class ParseError(PufError, ValueError):
    """Malformed enrollment/transcript file; message carries line and field."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class UnsupportedVersionError(PufError, ValueError):
    pass


class ChannelClosedError(PufError, RuntimeError):
    pass
