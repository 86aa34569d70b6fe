"""Exception types shared across the package.

The CLI maps these onto exit codes: config errors -> 1, numeric
failures -> 2, I/O problems -> 3.
"""


class CacheNetError(Exception):
    """Base class for package-specific errors."""


class ConfigError(CacheNetError):
    """Invalid experiment specification or configuration file."""


class UnsupportedConfig(CacheNetError):
    """A closed form was requested outside its validity conditions."""


class NumericError(CacheNetError):
    """A numerical routine failed to converge or produced garbage."""


class InfeasibleTarget(CacheNetError):
    """A root-finding target lies outside the searched bracket."""


class InvalidSnapshot(CacheNetError):
    """A Monte Carlo realization violates a structural assumption."""
