"""Exceptions raised by ugd.

The command line maps each class to an exit code, see :mod:`ugd.cli`.
"""


class UGDError(Exception):
    """Base class for all ugd errors."""

    kind = 'error'


class InvalidParameterValue(UGDError):
    """A configuration value, argument or precondition is not acceptable."""

    kind = 'invalid-parameter'


class GraphFormatError(UGDError):
    """A graph file on disk is malformed or inconsistent."""

    kind = 'graph-format'


class NumericalError(UGDError):
    """Non-finite values showed up during training or propagation.

    :param message: diagnostic
    :param report: partial :class:`ugd.driver.RunReport` if raised by the driver
    """

    kind = 'numerical'

    def __init__(self, message, report=None):
        super(NumericalError, self).__init__(message)
        self.report = report
