"""Exception types raised across the package."""


class GskorError(Exception):
    """Base class for all package errors."""


class InvalidArgument(GskorError, ValueError):
    pass


class GridMismatch(GskorError, ValueError):
    pass


class SeparationViolation(GskorError, ValueError):
    """Upper and lower obstacles are not strictly separated."""

    def __init__(self, gap, index=None):
        self.gap = float(gap)
        self.index = index
        where = "" if index is None else f" at node {index}"
        super().__init__(f"obstacle gap {self.gap!r} is not positive{where}")


class RootNotFound(GskorError, ArithmeticError):
    def __init__(self, index, message="no sign change in bracket"):
        self.index = int(index)
        super().__init__(f"{message} (node {self.index})")


class NumericFailure(GskorError, ArithmeticError):
    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message if index is None else f"{message} (node {index})")


class FunctionalError(GskorError, RuntimeError):
    """A path functional failed; carries the scenario and path coordinates."""

    def __init__(self, scenario, path, cause):
        self.scenario = scenario
        self.path = path
        super().__init__(f"functional failed at scenario {scenario}, path {path}: {cause}")


class ConfigError(GskorError, ValueError):
    """Aggregated configuration errors, each tagged with a JSON pointer."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"{e['pointer'] or '/'}: {e['message']}" for e in self.errors)
        super().__init__(f"invalid configuration: {lines}")
