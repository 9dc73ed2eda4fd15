"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable contract: 2 for bad input, 3 for provider trouble, 4 for anything else.
"""

from __future__ import annotations


class ViscaError(Exception):
    exit_code = 4


class InputError(ViscaError):
    exit_code = 2


class BundleIncomplete(InputError):
    """A snapshot bundle is missing one of its required files."""


class BundleInvalid(InputError):
    """A snapshot bundle violates the manifest schema or a snapshot invariant."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ConfigError(InputError):
    pass


class NotRenderable(ViscaError):
    """Raised when a rendering is requested for a hidden node."""


class GeometryError(ViscaError):
    pass


class SelectorError(ViscaError):
    pass


class ProviderError(ViscaError):
    exit_code = 3


class ProviderAuthError(ProviderError):
    pass


class ProviderUnavailable(ProviderError):
    pass


class ProviderProtocolError(ProviderError):
    pass


class ResponseFormatError(ProviderError):
    """The model answered, but not with parseable JSON (even after a repair prompt)."""

    def __init__(self, message: str, text: str = ""):
        self.text = text
        super().__init__(message)


class ClassificationError(ViscaError):
    pass


class InvalidSegmentation(InputError):
    pass


class ElementMismatch(InputError):
    pass


class StageError(ViscaError):
    """Wraps a failure inside one pipeline stage, keeping the original exit code."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
