"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument is outside the supported range or inconsistent."""


class MeshIntegrityError(RuntimeError):
    """The mesh is degenerate or not face-conforming."""


class SingularMatrixError(RuntimeError):
    """A linear system could not be factorized."""


class SizeCapError(RuntimeError):
    """A dense diagnostic was requested on a system above the size cap."""
