"""Common base class for all package-specific errors."""


class SlotprojError(Exception):
    """Base class for every error raised by this package.

    The CLI maps these to exit code 1 (validation / data errors) unless a
    more specific family applies (backend errors map to 3, plain OSError
    to 2).
    """
