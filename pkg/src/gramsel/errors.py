"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract, so new error conditions
should subclass whichever category fits rather than raising bare
ValueError from library code.
"""


class GramselError(Exception):
    """Base class for all package errors."""


class ValidationError(GramselError):
    """Malformed input: parse failures, dimension mismatches, bad ids."""


class InstabilityError(ValidationError):
    """Dynamics matrix is not (strictly) stable.

    Carries the offending spectral abscissa in ``abscissa``.
    """

    def __init__(self, abscissa: float, message: str | None = None):
        self.abscissa = abscissa
        super().__init__(
            message or f"dynamics matrix is not stable: spectral abscissa = {abscissa:.6g}"
        )


class NumericalError(GramselError):
    """A computation failed to meet its accuracy contract."""


class LyapunovResidualError(NumericalError):
    """Lyapunov solve did not reach the required residual bound."""

    def __init__(self, achieved: float, required: float):
        self.achieved = achieved
        self.required = required
        super().__init__(
            f"Lyapunov residual {achieved:.3e} exceeds bound {required:.3e}"
        )


class PsdViolationError(NumericalError):
    """A matrix that must be positive semidefinite has an eigenvalue below
    the clipping band."""


class ConvergenceError(NumericalError):
    """An iterative refinement (quadrature, simulation) did not converge."""


class UncontrollableError(NumericalError):
    """Gramian is numerically rank deficient where invertibility is required.

    ``rank`` holds the numerical rank that was found.
    """

    def __init__(self, rank: int, n: int, message: str | None = None):
        self.rank = rank
        self.n = n
        super().__init__(message or f"Gramian numerical rank {rank} < {n}")


class BoundUnavailableError(GramselError):
    """A-posteriori optimality bound cannot be formed (infinite marginals)."""


class SamplingExhaustedError(GramselError):
    """Sampler could not find enough valid triples within its resample budget."""


class EnumerationLimitError(GramselError):
    """Requested subset enumeration exceeds the safety guard.

    ``count`` is the number of subsets that would have been enumerated.
    """

    def __init__(self, count: int, limit: int):
        self.count = count
        self.limit = limit
        super().__init__(f"enumeration of {count} subsets exceeds guard of {limit}")
