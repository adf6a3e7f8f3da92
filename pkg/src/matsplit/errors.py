"""Exception hierarchy shared by all matsplit modules."""


class MatsplitError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(MatsplitError):
    """Input violates a documented precondition (shape, finiteness, range)."""


class DegenerateInput(MatsplitError):
    """Input lies in the measure-zero set where a projection is not unique.

    Callers are expected to perturb and retry; see the module that raised it.
    """


class NotPSD(MatsplitError):
    """Matrix is not positive semidefinite within tolerance."""


class SingularPencil(MatsplitError):
    """A Sylvester pencil has a near-zero eigenvalue sum; factor rank collapsed."""


class DegeneratePair(MatsplitError):
    """Neither quasiprojection option restores the product constraint."""


class ProjectionFailed(MatsplitError):
    """A projection could not be computed even after the deterministic retry."""


class NotRankOne(MatsplitError):
    """A summand expected to be rank-1 is not, within tolerance."""


class GenerationFailed(MatsplitError):
    """An instance generator exhausted its retry budget."""


class ResourceLimit(MatsplitError):
    """Requested instance exceeds the configured memory budget."""


class Unsupported(MatsplitError):
    """Requested combination of structure and construction is not implemented."""
