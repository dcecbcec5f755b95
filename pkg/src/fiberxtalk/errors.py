"""Exception taxonomy shared by the library and the command-line front end.

Exit codes follow the CLI contract: 2 input, 3 data, 4 parameter, 5 resource.
Each error carries a short machine-readable code (``E_INPUT``, ``E_NO_TRIGGER``,
``E_CONFIG``, ...) that the CLI emits on stderr.
"""

from __future__ import annotations


class XtalkError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    default_code = "E_ERROR"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        self.code = code or self.default_code


class InputError(XtalkError, ValueError):
    """A required input (file, document, schema) is missing or malformed."""

    exit_code = 2
    default_code = "E_INPUT"


class DataError(XtalkError, ValueError):
    """An input parsed, but its content cannot be analyzed."""

    exit_code = 3
    default_code = "E_DATA"


class ParameterError(XtalkError, ValueError):
    """A parameter value is outside its valid domain."""

    exit_code = 4
    default_code = "E_PARAM"


class ResourceError(XtalkError, RuntimeError):
    """A run would exceed a configured resource budget."""

    exit_code = 5
    default_code = "E_RESOURCE"
