"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class InvalidParams(ValueError):
    """A weight tensor violates the uniform-marginal constraints."""


class InvalidTauBar(ValueError):
    """Aggregated responsibilities cannot be turned into a feasible weight tensor."""


class BracketFailure(RuntimeError):
    """No sign change was found while bracketing a root."""


class DegenerateDensity(FloatingPointError):
    """An observation has zero density under the current model."""


class DegenerateModel(ValueError):
    """The fitted model is not identifiable (e.g. order 1 in the H+/H- family)."""


class NonConvergence(RuntimeError):
    """An iteration hit its cap before meeting the tolerance.

    The last iterate is kept on ``result`` so callers can still use it.
    """

    def __init__(self, message, result=None, residual=None):
        super().__init__(message)
        self.result = result
        self.residual = residual
