"""Exception types raised across the package."""


class StochTransportError(Exception):
    """Base class for all package errors."""


class InvalidField(StochTransportError, ValueError):
    """A field evaluated to non-finite values or was declared inconsistently."""


class InvalidMollifier(StochTransportError, ValueError):
    pass


class GridMismatch(StochTransportError, ValueError):
    """Two objects that must share a time or space grid do not."""


class NonInvertibleFlow(StochTransportError):
    """The discrete flow lost monotonicity/injectivity on its lattice.

    Usually means the mollification width is too small for the lattice or the
    time step.
    """


class InsufficientSamples(StochTransportError, ValueError):
    pass


class InvalidTestFunction(StochTransportError, ValueError):
    pass


class UnstableConfig(StochTransportError, ValueError):
    """The explicit parabolic scheme would violate its stability bound."""


class UnresolvedMollifier(StochTransportError, ValueError):
    pass


class ConfigError(StochTransportError, ValueError):
    """Configuration file or override failed validation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
