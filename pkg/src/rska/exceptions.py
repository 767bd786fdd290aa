"""Exception hierarchy for rska."""


class RSKAError(Exception):
    """Base class for all errors raised by rska."""


class DimensionMismatch(RSKAError, ValueError):
    pass


class SubgradientMismatch(RSKAError, ValueError):
    """The supplied dual point is not a subgradient of f at the primal point."""


class NoConvergence(RSKAError, ArithmeticError):
    pass


class TooLarge(RSKAError, ValueError):
    """A combinatorial quantity was requested for too many columns."""


class ZeroRhs(RSKAError, ValueError):
    pass


class ZeroRow(RSKAError, ValueError):
    pass


class ZeroVector(RSKAError, ValueError):
    pass


class InvalidEta(RSKAError, ValueError):
    pass


class InvalidSparsity(RSKAError, ValueError):
    pass


class OutOfRange(RSKAError, ValueError):
    """A certificate quantity fell outside its admissible interval."""


class FormatError(RSKAError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class IoError(RSKAError, OSError):
    pass
