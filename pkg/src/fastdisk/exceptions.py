"""Exception hierarchy for fastdisk."""


class FastDiskError(Exception):
    """Base class for every error raised by this package."""


class MeshError(FastDiskError):
    """Problems with the input mesh itself."""


class ParseError(MeshError):
    pass


class DegenerateFace(MeshError):
    def __init__(self, face, message=None):
        self.face = int(face)
        super().__init__(message or f"face {self.face} is degenerate (zero area)")


class TopologyError(MeshError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class MismatchedVertexCount(MeshError):
    pass


class NumericalError(FastDiskError):
    """A solve or a geometric computation broke down."""


class NotPositiveDefinite(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class KernelNotRemoved(NumericalError):
    pass


class SingularCoefficient(NumericalError):
    pass


class DivisionByZero(NumericalError):
    def __init__(self, faces, message=None):
        self.faces = [int(f) for f in faces]
        super().__init__(message or f"vanishing denominator on faces {self.faces[:10]}")


class FoldedFace(NumericalError):
    def __init__(self, faces, message=None):
        self.faces = [int(f) for f in faces]
        super().__init__(message or f"map folds on faces {self.faces[:10]}")


class Unbounded(NumericalError):
    pass


class PoleError(NumericalError):
    pass


class FaceSelectionError(NumericalError):
    pass


class OriginOnVertex(NumericalError):
    pass


class BijectivityFailure(NumericalError):
    def __init__(self, faces, report=None):
        self.faces = [int(f) for f in faces]
        self.report = report
        super().__init__(f"{len(self.faces)} flipped faces in the final map")


class NonDecreasingEnergy(UserWarning):
    """Emitted (as a warning) when a correction step fails to lower mean |mu|."""
