"""Exception hierarchy.

Input problems derive from :class:`InputError` (also a ``ValueError``);
failures of the numerics on otherwise valid input derive from
:class:`NumericalError`. The CLI maps the two families to distinct exit codes.
"""


class LrcovError(Exception):
    pass


class InputError(LrcovError, ValueError):
    pass


class NumericalError(LrcovError, ArithmeticError):
    pass


class EmptyWindow(NumericalError):
    pass


class WindowTooLarge(InputError):
    pass


class TrimTooLarge(InputError):
    pass


class SingularOmega(NumericalError):
    def __init__(self, message, flagged=None):
        super().__init__(message)
        self.flagged = flagged


class SingularDesign(NumericalError):
    pass


class SingularLocalDesign(NumericalError):
    pass


class SingularMhat(NumericalError):
    pass


class AllSingular(NumericalError):
    pass


class NotPSD(NumericalError):
    pass


class ParseError(InputError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NonNumeric(ParseError):
    pass


class TooFewRows(InputError):
    pass


class IoError(LrcovError, OSError):
    pass
