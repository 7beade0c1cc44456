"""Exception taxonomy shared across the package.

Exit-code mapping for the CLI lives in cli.py; everything here derives from
ToolkitError so commands can catch one base class.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(ToolkitError):
    """Operands have incompatible shapes; message names both shapes."""


class ConfigError(ToolkitError):
    """Invalid configuration value."""


class ContractError(ToolkitError):
    """A documented precondition was violated by the caller."""


class DegenerateVectorError(ToolkitError):
    """A vector with (near-)zero norm where a direction is required."""


class NumericError(ToolkitError):
    """Non-finite values appeared where finite math was expected."""


class InputError(ToolkitError):
    """Unusable user input (paths, raw data files, mixed dimensions)."""


class FormatError(ToolkitError):
    """Malformed or truncated binary file."""


class UnknownMagicError(FormatError):
    """File does not start with any known magic bytes."""


class DeterminismError(ToolkitError):
    """A function expected to be deterministic returned differing values."""
