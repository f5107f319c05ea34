"""Exception types shared across the toolkit."""


class JqfError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(JqfError, ValueError):
    """A caller-supplied value violates an operation's precondition."""


class DegenerateScaleError(JqfError):
    """Quality maps to a zero scale percent, so unscaling is undefined."""


class DegenerateEnergyError(JqfError):
    """Annealing energy reached zero; acceptance ratios are undefined."""


class FormatError(JqfError):
    """A persisted file does not match its declared format."""


class JpegParseError(JqfError):
    """Malformed JPEG stream. Carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DimensionMismatchError(JqfError, ValueError):
    """Two images that must share dimensions do not."""
