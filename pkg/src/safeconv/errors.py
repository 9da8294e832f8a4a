"""Exception types shared across the package."""


class SafeconvError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(SafeconvError):
    """A scenario, case file, or network description is not usable as given."""


class NumericalError(SafeconvError):
    """An iterative numerical routine failed to converge to its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleOutputsError(SafeconvError):
    """The requested output pair cannot be realized by any real current."""


class ScenarioError(SafeconvError):
    """Scenario file validation failed; carries every problem found, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
