"""Exception hierarchy shared by all modules."""


class NeutralSupplyError(Exception):
    """Base class for every error raised by this package."""


class InvalidMatrix(NeutralSupplyError, ValueError):
    """Non-finite, mis-shaped or non-symmetric matrix data."""


class InvalidBasis(NeutralSupplyError, ValueError):
    """A basis that was expected to be orthonormal is not."""


class SingularPivot(NeutralSupplyError, ArithmeticError):
    """Schur complement pivot block is numerically singular."""


class InvalidInput(NeutralSupplyError, ValueError):
    """Inconsistent dimensions or arguments."""


class IllPosed(NeutralSupplyError):
    """The static interconnection equations have no unique solution."""


class HypothesisViolated(NeutralSupplyError):
    """A sign condition that the theory guarantees under its hypotheses failed.

    The ``which`` attribute names the failing check.
    """

    def __init__(self, which, message=None, *, margin=None):
        self.which = which
        self.margin = margin
        super().__init__(message or which)


class RankAssumption(HypothesisViolated):
    """An output matrix lacks full row rank where it is required."""

    def __init__(self, message):
        super().__init__("rank", message)


class NotALyapunovFunction(HypothesisViolated):
    """The supplied block-diagonal matrix does not certify stability."""

    def __init__(self, message, *, margin=None):
        super().__init__("lyapunov", message, margin=margin)


class GammaSearchExhausted(NeutralSupplyError):
    """The scalar search for the extension weight hit its iteration cap."""


class Undecided(NeutralSupplyError):
    """A feasibility search ended without a certificate either way."""


class NotAcyclic(NeutralSupplyError):
    """The undirected interconnection graph contains a cycle."""


class CycleDetected(NotAcyclic):
    """The requested edge lies on a cycle, so it does not split the graph."""


class PreconditionFailed(NeutralSupplyError):
    """A documented precondition of a certificate does not hold."""

    def __init__(self, item, message=None):
        self.item = item
        super().__init__(message or item)


class UnknownSystem(NeutralSupplyError, KeyError):
    """A system id that is not part of the network."""
