"""Exception types shared across the package.

Each class maps to a distinct CLI exit code so batch callers can tell
apart malformed input, empty results and numerical failures.
"""


class GwastepError(Exception):
    """Base class for all package-specific errors."""

    exit_code = 1


class FormatError(GwastepError):
    """A binary input file has wrong magic bytes or an unsupported mode."""

    exit_code = 3


class FileSizeError(GwastepError):
    """A binary input file is truncated or padded relative to its header."""

    exit_code = 4


class ValidationError(GwastepError):
    """Input records violate a structural requirement (e.g. non-biallelic)."""

    exit_code = 5


class EmptyResultError(GwastepError):
    """A filter removed every record."""

    exit_code = 6


class InfeasibleScenarioError(GwastepError):
    """A simulation scenario cannot be satisfied by the given genotypes."""

    exit_code = 7


class DegenerateResponseError(GwastepError):
    """The phenotype is unusable for regression (one class, or absent)."""

    exit_code = 8


class RankDeficiencyError(GwastepError):
    """The design matrix does not have full column rank."""

    exit_code = 9

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class UndefinedStatisticError(GwastepError):
    """A statistic is undefined for the given data (e.g. zero variance)."""

    exit_code = 10
