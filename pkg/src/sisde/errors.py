"""Exception hierarchy shared by every module of the package."""


class SisdeError(Exception):
    """Base class for all library errors."""


class InputDomainError(SisdeError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class AssumptionViolation(SisdeError, ValueError):
    """A model assumption (nonnegative rates, declared constants) does not hold."""


class RootConditionError(AssumptionViolation):
    """The discriminant alpha**2 + 4*beta is negative, so no root interval exists."""


class DegenerateMatrixError(SisdeError, ArithmeticError):
    """A covariance matrix is not positive semidefinite or its square root is undefined."""


class StepSizeError(SisdeError, ValueError):
    """The time step is too large for the probabilities or the stability bound."""


class NumericalFailure(SisdeError, ArithmeticError):
    """A simulation produced a state it cannot continue from."""

    def __init__(self, message, step=None, path=None):
        super().__init__(message)
        self.step = step
        self.path = path


class ConfigError(SisdeError):
    """A scenario configuration is invalid; carries every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
