"""Exception types shared across the toolkit."""

from __future__ import annotations


class DraftError(Exception):
    """Base class for draft document failures; carries a JSON-path hint."""

    def __init__(self, message: str, path: str = "$") -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


class DraftSyntaxError(DraftError):
    """The input is not well-formed JSON text."""


class SchemaError(DraftError):
    """A field is missing, unexpected, or of the wrong type."""


class InvariantError(DraftError):
    """Structurally valid JSON that breaks a draft invariant."""


class DecodeError(Exception):
    """A raster asset could not be decoded."""


class MissingAsset(Exception):
    """A placement references an element id with no supplied asset."""

    def __init__(self, element_id: str) -> None:
        self.element_id = element_id
        super().__init__(f"no asset supplied for element {element_id!r}")


class IdMismatch(Exception):
    """Predicted and reference element id sets differ."""


class DimensionMismatch(Exception):
    """Array shapes disagree with the operation's contract."""


class EmptyCorpus(Exception):
    """There are no cases to aggregate."""


class DivisibilityError(Exception):
    """Grid dimensions are not divisible by the pooling factor."""


class EmptyInput(Exception):
    """The solver needs at least one element."""


class ManifestError(Exception):
    """A manifest line is unusable; records the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None) -> None:
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class GeneratorError(Exception):
    """A per-case draft generator failed; the case is skipped."""


class TransportError(Exception):
    """The judge endpoint was unreachable or answered abnormally."""


class FormatError(Exception):
    """The judge answered, but not with a usable payload."""
