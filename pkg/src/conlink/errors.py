"""Exception types shared across the package."""


class ConlinkError(Exception):
    """Base class for all conlink errors."""


class ParseError(ConlinkError):
    """A text input file could not be parsed. Carries the offending line."""

    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class ValidationError(ConlinkError):
    """Loaded data violates a structural invariant (cycles, bad headers, ...)."""


class NotFoundError(ConlinkError):
    """A referenced CUI does not exist in the terminology."""


class SkipRecord(ConlinkError):
    """Signal that a mention cannot contribute training triples.

    Raised when none of a record's gold CUIs exist in the terminology (or no
    negative pool can be formed). Callers count these and move on; the signal
    is never fatal.
    """


class FingerprintMismatch(ConlinkError):
    """An index was built with a different encoder than the one supplied."""


class TrainingError(ConlinkError):
    """Training cannot proceed (no usable records, non-finite loss, ...)."""
