"""Exception hierarchy shared by all modules."""


class DelaySyncError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DelaySyncError, ValueError):
    pass


class ConvergenceError(DelaySyncError):
    """An iterative numerical routine hit its iteration cap."""


class SynthesisError(DelaySyncError):
    pass


class TopologyError(DelaySyncError, ValueError):
    """The communication graph is not a valid directed spanning tree.

    ``node`` holds the 1-based label of the offending agent when one can be
    named.
    """

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ModelError(DelaySyncError, ValueError):
    """An agent, exosystem or target model violates a standing assumption."""


class HomogenizationError(DelaySyncError):
    pass


class WiringError(DelaySyncError):
    """A coupling computation received the wrong set of neighbor samples."""


class ScenarioError(DelaySyncError, ValueError):
    """A scenario file could not be parsed.

    ``where`` is a field path (``topology.edges[2].delay``) or a
    ``line N, column M`` anchor.
    """

    def __init__(self, message, where=None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class DivergenceError(DelaySyncError):
    def __init__(self, step, message=None):
        super().__init__(message or f"non-finite signal at step {step}")
        self.step = step


class CertificateError(DelaySyncError):
    pass
