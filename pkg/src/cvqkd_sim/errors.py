"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class InfeasibleError(ValueError):
    """No solution exists under the requested constraints."""


class InapplicableError(ValueError):
    """A threshold formula is used outside its stated validity range."""


class ModelViolationError(ValueError):
    """Inputs describe a physical situation the model does not cover."""


class EstimationError(ValueError):
    """Sample statistics are degenerate or too few to estimate from."""


class ConfigError(ValueError):
    """A scenario configuration is invalid."""
