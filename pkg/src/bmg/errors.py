"""Exception hierarchy shared by the library and the CLI."""


class BMGError(Exception):
    """Base class for every error raised by :mod:`bmg`."""


class InputError(BMGError, ValueError):
    """Malformed or inconsistent input (maps to CLI exit status 2)."""


class MismatchedSpaceError(BMGError, ValueError):
    pass


class NonConvergenceError(BMGError, RuntimeError):
    """Refinement budget exhausted before the certified bound reached eps."""

    def __init__(self, message, best_bound=float("inf"), blocks=0):
        super().__init__(f"{message} (best bound {best_bound:.6g} with {blocks} blocks)")
        self.best_bound = best_bound
        self.blocks = blocks


class AssumptionViolation(BMGError):
    """A Girsanov-type hypothesis does not hold for the given process."""


class CrossComponentError(AssumptionViolation):
    """Coordinate-wise density ratios disagree beyond tolerance."""


class AdaptednessError(BMGError, ValueError):
    pass


class SizeBudgetError(BMGError, ValueError):
    pass


class ConstructionInfeasible(BMGError, RuntimeError):
    pass
