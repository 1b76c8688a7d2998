"""Exception types shared across the package."""


class ArteryWallError(Exception):
    """Base class for package errors."""


class ConfigError(ArteryWallError):
    """Bad or missing configuration; mapped to CLI exit code 1."""


class ParameterError(ConfigError):
    """Physically invalid parameter combination."""


class SimulationError(ArteryWallError):
    """Numerical failure during integration; mapped to CLI exit code 2."""
