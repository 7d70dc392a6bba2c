"""Exception hierarchy shared by the library and the CLI."""


class SocBayesError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DomainError(SocBayesError, ValueError):
    """A distribution or model parameter lies outside its admissible domain."""

    exit_code = 4


class DecompositionError(SocBayesError, ArithmeticError):
    """A matrix that must be symmetric positive definite could not be factorized."""

    exit_code = 4


class SamplerError(SocBayesError, RuntimeError):
    """A sampler could not start or continue (e.g. non-finite target at init)."""

    exit_code = 4


class DiagnosticsError(SocBayesError, ValueError):
    """A chain cannot be summarized (empty, constant, too short)."""

    exit_code = 4


class DataError(SocBayesError, ValueError):
    """Input data is malformed or violates a model precondition."""

    exit_code = 3
