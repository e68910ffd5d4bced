"""Exception hierarchy shared by all perturbix modules."""


class PerturbixError(Exception):
    """Base class for every error raised by this package."""


class NonMixing(PerturbixError):
    """The chain has no unique, strictly positive stationary vector."""


class ZeroBudget(PerturbixError):
    pass


class SingularSystem(PerturbixError):
    pass


class InfeasibleEpsilon(PerturbixError):
    """``M + eps * P`` has negative entries."""


class DomainError(PerturbixError, ValueError):
    pass


class AsymmetricMask(PerturbixError):
    """Some transition ``j -> i`` exists without its reverse ``i -> j``."""


class DegenerateObjective(PerturbixError):
    pass


class EmptyFeasibleSpace(PerturbixError):
    pass


class SingularMultiplierSystem(PerturbixError):
    pass


class ZeroProjection(PerturbixError):
    pass


class LengthMismatch(PerturbixError, ValueError):
    pass


class ParameterError(PerturbixError, ValueError):
    pass


class EmptyEstimate(PerturbixError):
    pass


class NumericalBlowup(PerturbixError):
    pass


class SeriesDivergence(PerturbixError):
    pass


class ComplexLogBranch(PerturbixError):
    pass


class UnknownObservable(PerturbixError, KeyError):
    pass


class GridMismatch(PerturbixError, ValueError):
    pass
