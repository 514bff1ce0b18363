"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, model, or experiment configuration."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class BudgetExceeded(RuntimeError):
    """A run would exceed a configured resource cap."""


class SimulationBlowup(FloatingPointError):
    """A simulated state or weight became non-finite."""
