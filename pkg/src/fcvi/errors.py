"""Exception and warning types shared across the simulator."""


class ContractError(ValueError):
    """An operation was called with arguments that break its preconditions."""


class ConfigError(ValueError):
    """A scenario/run configuration is malformed or infeasible.

    ``key`` names the offending configuration key (dotted path) when known.
    """

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class MonitorInconclusive(RuntimeError):
    """No class produced a positive change ratio, so R_min is undefined.

    ``report`` holds the per-class cases with an all-ones mu for fallback.
    """

    def __init__(self, report=None):
        self.report = report
        super().__init__("no class has a positive change ratio; mu falls back to all ones")


class DegenerateInputWarning(UserWarning):
    """Emitted when an operation degrades to a no-op on empty input."""
