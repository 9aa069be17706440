"""Exception hierarchy shared by every layer of the package."""


class MerchantStorageError(Exception):
    """Base class for all package errors."""


class CaseError(MerchantStorageError, ValueError):
    """Invalid case data (violated type invariant, unknown bus, bad shape)."""


class ScheduleShapeError(CaseError):
    """Schedule length does not match the horizon."""


class SolverError(MerchantStorageError, RuntimeError):
    """Numerical failure inside the LP/MILP engines."""


class InfeasibleError(MerchantStorageError):
    """A model that was expected to be feasible is not.

    ``rows`` lists the constraint names carrying a nonzero phase-1
    (Farkas) multiplier, i.e. the rows that jointly prove infeasibility.
    """

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class DerivationError(MerchantStorageError):
    """KKT derivation or objective substitution is not applicable."""


class BigMPolicyError(MerchantStorageError):
    """A complementarity pair cannot be given a finite big-M."""


class MpsParseError(MerchantStorageError, ValueError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no
