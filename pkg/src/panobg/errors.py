"""Exception types for degenerate numerical situations.

Argument misuse raises plain ValueError everywhere; the classes below
mark conditions that arise from the data or the optimization itself and
map to a distinct process exit code in the CLI.
"""


class NumericalError(RuntimeError):
    """Base class for degeneracies detected during computation."""


class HorizonError(NumericalError):
    """A projective transform sent a point to (or past) the horizon."""


class DegenerateBatchError(NumericalError):
    """Every frame in a batch fell below the coverage floor."""


class DivergenceError(NumericalError):
    """The joint alignment lost all coverage for an entire epoch."""


class NoOverlapError(NumericalError):
    """A frame could not be placed over any covered panorama region."""


class ConstantFieldError(NumericalError):
    """An error field is constant, so [0, 1] rescaling is undefined."""
