"""Exception hierarchy; the CLI maps each class to an exit code."""


class InnerCoreError(Exception):
    exit_code = 3


class InputError(InnerCoreError, ValueError):
    """Bad input data or configuration."""

    exit_code = 1


class IngestError(InputError):
    def __init__(self, message, rows=()):
        self.rows = list(rows)
        if self.rows:
            shown = ", ".join(str(r) for r in self.rows[:10])
            more = "" if len(self.rows) <= 10 else f" (+{len(self.rows) - 10} more)"
            message = f"{message} [rows: {shown}{more}]"
        super().__init__(message)


class SingularCovarianceError(InnerCoreError, ArithmeticError):
    """Covariance stayed singular after the full ridge schedule."""

    exit_code = 2

    def __init__(self, message, columns=()):
        self.columns = list(columns)
        super().__init__(message)


class InvariantViolation(InnerCoreError, AssertionError):
    exit_code = 3
