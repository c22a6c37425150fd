"""Exception types shared across the library."""


class UsageError(ValueError):
    """An operation was called with arguments violating its contract."""


class SpaceMismatchError(UsageError):
    """Points from different spaces were combined."""


class DegenerateGeodesicError(UsageError):
    """No unique minimal geodesic exists between the given points."""


class ComparisonRangeError(UsageError):
    """Triangle perimeter is too large for a spherical comparison triangle."""


class HorizonError(UsageError):
    """Proximal step size at or beyond the coercivity horizon."""


class SolverError(RuntimeError):
    """Inner proximal solver failed to converge; carries solver stats."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = dict(stats or {})


class ConvergenceFailure(RuntimeError):
    """Mesh refinement did not produce a Cauchy sequence of curves."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ValueError):
    """Scenario configuration is unreadable or schema-invalid."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
