"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """An experiment or CLI configuration is invalid."""


class InfeasibleError(ValueError):
    """A feasibility requirement fails (resource shortfall, bad marginals).

    ``deficit`` carries the missing amount when one is known.
    """

    def __init__(self, message: str, deficit: float | None = None):
        super().__init__(message)
        self.deficit = deficit


class NumericallyInfeasibleError(InfeasibleError):
    """An iterative feasibility search stalled without finding a solution.

    Distinct from :class:`InfeasibleError` raised on a failed necessary
    condition: the necessary condition is not sufficient, so a stall does
    not certify that no solution exists.
    """


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 gap: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.gap = gap


class ReadjustBudgetError(RuntimeError):
    """The re-adjustment budget ran out before all deficiencies were met.

    ``residual_deficiencies`` maps demand id to the unmet deficiency.
    """

    def __init__(self, message: str, residual_deficiencies: dict[int, float]):
        super().__init__(message)
        self.residual_deficiencies = residual_deficiencies
