"""Exception types raised across the package."""


class ContractError(ValueError):
    """An input violates a documented precondition."""


class SceneFormatError(ValueError):
    """A scene or camera file could not be parsed or validated."""


class ConfigError(ValueError):
    """A configuration value is out of its allowed range."""
