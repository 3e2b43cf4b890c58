"""Exception types raised by pertloss.

Every error derives from ValueError so callers that already guard bad input
with ``except ValueError`` keep working.
"""


class PertlossError(ValueError):
    """Base class for all pertloss errors."""


class ShapeMismatchError(PertlossError):
    """A hypothesis, data array or statistic has the wrong shape."""


class UnsupportedFamilyError(PertlossError):
    """The problem class has no exponential-family likelihood."""


class NonFiniteError(PertlossError):
    """A loss or objective evaluated to inf or nan."""


class WrongKindError(PertlossError):
    """A mechanism was called with a perturbation spec of another kind."""


class NonBinaryDataError(PertlossError):
    """Input that must live in {-1, +1} has other entries."""


class AlphaBelowTwoError(PertlossError):
    """The penalty multiplier alpha is below 2."""


class InvalidCombinationError(PertlossError):
    """The problem class and regularizer column have no rate (NA or NG)."""


class NonPositiveEntropyError(PertlossError):
    """Fano's inequality was given a nonpositive entropy."""


class InfeasibleQueryError(PertlossError):
    """An irrecoverability query violates the theorem's feasibility conditions."""


class IntractableInstanceError(PertlossError):
    """The exhaustive adversary was asked for an instance beyond its budget."""


class MechanismMismatchError(PertlossError):
    """The perturbation mechanism does not match the problem class."""


class ConfigError(PertlossError):
    """An experiment configuration failed to load or validate."""
