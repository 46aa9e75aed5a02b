"""Exception hierarchy shared by every module in the package."""


class PCDError(Exception):
    """Base class for all errors raised by pcdbound."""


class NotPositiveDefinite(PCDError, ValueError):
    pass


class NotSymmetric(PCDError, ValueError):
    pass


class SingularTransform(PCDError, ValueError):
    pass


class DegenerateShape(PCDError, ValueError):
    pass


class DegenerateInput(PCDError, ValueError):
    """Point set is coplanar or collinear and cannot span a 3D hull."""


class NonConvergence(PCDError, RuntimeError):
    pass


class EmptyMesh(PCDError, ValueError):
    pass


class OpenMesh(PCDError, ValueError):
    """Mesh has non-positive signed volume, so it cannot enclose a solid."""


class ParseError(PCDError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ConfigError(PCDError, ValueError):
    """Invalid benchmark configuration or command-line value."""
