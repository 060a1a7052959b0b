"""Exception types shared across the package."""


class MeshAdaptError(Exception):
    """Base class for errors raised by this package."""


class TangledMeshError(MeshAdaptError):
    """A mesh (or mesh update) contains non-positively oriented elements."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = tuple(int(k) for k in elements)


class PointLocationError(MeshAdaptError):
    """A query point lies outside the mesh beyond the snap tolerance."""


class BarrierError(MeshAdaptError):
    """A barrier-type energy was evaluated at det(J) <= 0 (degenerate element)."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = tuple(int(k) for k in elements)


class StallError(MeshAdaptError):
    """The time integrator could not find an acceptable step size."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element
