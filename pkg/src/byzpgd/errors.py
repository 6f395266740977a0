"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or usage: bad dimensions, out-of-range knobs."""


class FilterCollapse(RuntimeError):
    """Iterative filtering removed too many points to trust its output.

    The caller is expected to fall back to a coordinate-wise median of the
    original batch and note the fallback in its audit record.
    """
