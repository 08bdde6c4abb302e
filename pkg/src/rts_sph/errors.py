"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scene file, preset name, or CLI configuration."""


class NumericalError(RuntimeError):
    """The simulation left its stable regime (blow-up, escaped particles,
    or a pressure solve that refused to converge within the iteration cap)."""
