"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or construction parameters."""


class NoSymmetricPointError(ValueError):
    """The asymmetric component does not change sign inside the clip range."""


class PrecisionError(ValueError):
    """Requested numerical precision cannot be met with the given settings."""


class AnalysisError(RuntimeError):
    """A fit or comparison could not be carried out on the supplied data."""
