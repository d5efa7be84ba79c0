"""Exception hierarchy shared by all admitrec modules."""


class AdmitrecError(Exception):
    """Base class for every error raised by this package."""


class GridError(AdmitrecError, ValueError):
    """Invalid grid geometry, voxel budget, or grid mismatch between fields."""


class MaskError(AdmitrecError, ValueError):
    """A mask became empty or does not fit the requested stencil."""


class ContainerError(AdmitrecError, IOError):
    """Malformed, truncated, or unsupported container file."""


class NotDiagonalizableError(AdmitrecError, ValueError):
    """Symmetric matrix is not complex-orthogonally diagonalizable within tolerance.

    ``reason`` is either ``"near-degenerate-spectrum"`` or
    ``"isotropic-eigenvector"``.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class EllipticityError(AdmitrecError, ValueError):
    """Admittivity fails the uniform ellipticity bounds."""


class SolverError(AdmitrecError, RuntimeError):
    """Forward solve failed (singular system or problem too large)."""


class PreconditionError(AdmitrecError, ValueError):
    """Caller violated a documented precondition (e.g. fewer than six fields)."""
