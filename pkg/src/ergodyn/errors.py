"""Exception hierarchy shared by all ergodyn modules."""


class ErgodynError(Exception):
    """Base class for computation errors raised by ergodyn."""


class InvalidMapError(ErgodynError):
    """A map produced a value outside [0, 1] or has an inconsistent layout."""


class UnsupportedMapError(ErgodynError):
    """The requested operation needs monotone branches and the map has none."""


class InvalidChainError(ErgodynError):
    """A transition matrix or probability table is not row-stochastic."""


class ConvergenceError(ErgodynError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SpecError(ErgodynError):
    """A cellular automaton or lattice description violates its constraints."""
