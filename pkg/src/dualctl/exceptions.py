"""Exception types shared across the package."""


class DomainError(ValueError):
    """A state, control or parameter lies outside its admissible set."""


class InfeasibleError(DomainError):
    """The initial state is outside the viability kernel for the requested peak."""


class IntegrationError(RuntimeError):
    """Numerical integration produced a non-finite state or lost the sliding surface."""


class QuadratureError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass
