"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration problem the caller must fix.

    The message always names the offending key or flag.  The command line
    maps this to exit code 2.
    """


class EstimationFailedError(RuntimeError):
    """Raised when an estimation run produces no usable objective values.

    Carries ``diagnostics`` with evaluation counts and collapse information.
    The command line maps this to exit code 1.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
