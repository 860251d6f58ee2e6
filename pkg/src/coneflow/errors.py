"""Exception types shared across the package."""


class ConeFlowError(Exception):
    """Base class for all package errors."""


class DomainError(ConeFlowError, ValueError):
    """A coordinate or time lies outside the region where a formula is defined."""


class ParameterError(ConeFlowError, ValueError):
    """A model parameter (cone exponent, constant, grid size) is invalid."""


class BarrierWindowError(DomainError):
    """The barrier cap radius reached the edge of the unit disc."""


class ConfigError(ConeFlowError, ValueError):
    """A configuration file or override failed validation."""
