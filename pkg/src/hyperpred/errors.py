"""Exception hierarchy shared across the package."""


class HyperpredError(Exception):
    """Base class for all package errors."""


class ShapeError(HyperpredError, ValueError):
    pass


class ParameterError(HyperpredError, ValueError):
    pass


class FormatError(HyperpredError, ValueError):
    pass


class ReferentialError(HyperpredError, ValueError):
    """A hyperedge references a node id outside the node set."""


class DomainError(HyperpredError, ValueError):
    pass


class StateError(HyperpredError, RuntimeError):
    pass


class SamplingExhausted(HyperpredError, RuntimeError):
    """A sampler gave up after its retry budget."""


class NumericalError(HyperpredError, ArithmeticError):
    pass


class VersionError(HyperpredError, ValueError):
    """Checkpoint is corrupted or incompatible with the running code."""
