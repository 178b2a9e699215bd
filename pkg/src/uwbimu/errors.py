"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario / configuration input (CLI exit code 2)."""


class NumericalFailure(RuntimeError):
    """A numerical routine left its validated regime (CLI exit code 3)."""
