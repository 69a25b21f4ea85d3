"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """Invalid or inconsistent configuration (bad stage order, mismatched
    component sizes, unknown config keys).  The CLI maps this to exit code 2."""


class StateError(RuntimeError):
    """A mutable protocol object (e.g. the sampling mask state) is inconsistent
    with what the current step expects."""
