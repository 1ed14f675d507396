"""Errors raised by :mod:`hyperagg`.

Every error derives from :class:`HyperAggError`. The command line maps the
families onto the stable ``EXIT_*`` codes below.
"""

#: Exit code for a successful command.
EXIT_OK = 0
#: Exit code for usage and configuration errors.
EXIT_CONFIG = 2
#: Exit code for unreadable or malformed data.
EXIT_DATA = 3
#: Exit code for numerical failures (diverged training, failed gradcheck).
EXIT_NUMERICAL = 4


class HyperAggError(Exception):
    """Base class of all :mod:`hyperagg` errors."""
    exit_code = 1


class DimensionError(HyperAggError, ValueError):
    """Operands have incompatible shapes."""
    exit_code = EXIT_CONFIG

    @classmethod
    def mismatch(cls, op, a_shape, b_shape):
        return cls('{0}: incompatible shapes {1}x{2} and {3}x{4}'.format(
            op, a_shape[0], a_shape[1], b_shape[0], b_shape[1]))


class ConfigError(HyperAggError, ValueError):
    """A hyperparameter, config file entry or override is invalid.

    :param str key: The offending configuration key, if known.
    """
    exit_code = EXIT_CONFIG

    def __init__(self, message, key=None):
        if key is not None:
            message = '{0}: {1}'.format(key, message)
        super(ConfigError, self).__init__(message)
        self.key = key


class DataError(HyperAggError):
    """A dataset is missing or inconsistent."""
    exit_code = EXIT_DATA


class GraphFormatError(DataError):
    """A HAGRAPH file could not be parsed.

    :param int line: 1-based line number where parsing failed.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = 'line {0}: {1}'.format(line, message)
        super(GraphFormatError, self).__init__(message)
        self.line = line


class SupervisionError(HyperAggError, ValueError):
    """A loss or metric was asked for over an empty mask."""
    exit_code = EXIT_CONFIG


class NumericalError(HyperAggError, ArithmeticError):
    """Non-finite values appeared where finite ones are required."""
    exit_code = EXIT_NUMERICAL
