"""Exception types shared across the package.

The CLI maps these onto exit codes: data/format problems exit 2,
numerical failures exit 3 (usage errors exit 1 via argparse).
"""


class ShapeError(ValueError):
    """Tensor shapes are inconsistent with an operation's contract."""


class ConfigError(ValueError):
    """A configuration value (rate, split size, ...) is out of range."""


class FormatError(ValueError):
    """A file or byte stream does not match its declared format."""


class ParseError(FormatError):
    """A text field (age label, param line, ...) failed to parse."""


class NumericsError(ArithmeticError):
    """A non-finite value appeared where training cannot continue."""
