"""Exception hierarchy shared by every module of the package."""


class KSLSDAError(Exception):
    """Base class for all package errors."""


class ConfigError(KSLSDAError, ValueError):
    """Invalid configuration or inconsistent inputs.

    ``line`` carries the 1-based line number when the error comes from
    parsing a config file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractError(KSLSDAError, ValueError):
    """A documented precondition of an operation does not hold."""


class NumericError(KSLSDAError, FloatingPointError):
    """Non-finite values where finite ones are required."""


class SolverError(KSLSDAError, RuntimeError):
    """An iterative solver did not converge.

    Parameters
    ----------
    message : str
    residuals : array_like, optional
        Best residual norms reached.
    history : list, optional
        Per-iteration diagnostics, when the solver keeps them.
    """

    def __init__(self, message, residuals=None, history=None):
        super().__init__(message)
        self.residuals = residuals
        self.history = history if history is not None else []
