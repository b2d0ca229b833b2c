"""Exception hierarchy shared by all fatgraph modules."""


class FatGraphError(Exception):
    """Base class for every error raised by this package."""


class GraphError(FatGraphError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class LoopEdge(GraphError):
    pass


class NonPositiveLength(GraphError):
    pass


class EmbeddingLengthMismatch(GraphError):
    pass


class InfiniteEdge(GraphError):
    """A numerical operation received a graph with a semi-infinite edge."""


class TooCoarse(FatGraphError, ValueError):
    pass


class GridMismatch(FatGraphError, ValueError):
    pass


class RootBracketingFailure(FatGraphError, RuntimeError):
    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class MeshError(FatGraphError, ValueError):
    pass


class PortMismatch(MeshError):
    pass


class TemplateOverlap(MeshError):
    pass


class MeshQualityFailure(MeshError):
    pass


class SelfIntersection(MeshError):
    pass


class NonSmoothBoundary(MeshError):
    pass


class DegenerateTriangle(MeshError):
    pass


class VariantMismatch(FatGraphError, ValueError):
    pass


class UnknownRegion(FatGraphError, KeyError):
    pass


class SolverError(FatGraphError, RuntimeError):
    pass


class FactorizationFailure(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class SolverFailure(SolverError):
    pass


class QuadratureUnderResolved(FatGraphError, RuntimeError):
    pass


class CollarTooShallow(FatGraphError, ValueError):
    pass


class EmptySpectrum(FatGraphError, ValueError):
    pass
