"""Exception types raised by problem construction and the Newton machinery."""


class ProblemError(ValueError):
    """Base class for malformed problem data."""


class DimensionMismatch(ProblemError):
    pass


class NonPositiveWeight(ProblemError):
    pass


class MalformedSet(ProblemError):
    pass


class DegenerateProblem(ProblemError):
    pass


class EigFailure(ArithmeticError):
    pass


class SingularMiddleFactor(ArithmeticError):
    pass


class NotPositiveDefinite(ArithmeticError):
    """Raised by the block Cholesky factorization.

    Attributes:
        stage: index of the diagonal block whose Schur complement failed.
    """

    def __init__(self, stage):
        super().__init__(f"block {stage} of the reduced Newton matrix is not positive definite")
        self.stage = stage


class Singular(ArithmeticError):
    pass
