"""Explicit reconstruction of complex admittivity tensors from internal magnetic fields."""
__version__ = "0.1.0"

from .container import read_container, write_container  # noqa: E402
from .diffops import FDConfig, curl, divergence, gradient  # noqa: E402
from .errors import (  # noqa: E402
    AdmitrecError,
    ContainerError,
    EllipticityError,
    GridError,
    MaskError,
    NotDiagonalizableError,
    PreconditionError,
    SolverError,
)
from .fields import Grid3, Mask, MatrixField, ScalarField, VectorField, create_grid, unit_cube_grid  # noqa: E402
from .recon_aniso import ReconConfig, ReconReport, reconstruct  # noqa: E402
from .recon_iso import IsoReconConfig, cgo_parameters, integrate_admittivity, reconstruct_isotropic  # noqa: E402
from .synthetic import NoiseSpec, add_noise, fdfd_solve, plane_wave_frame  # noqa: E402

__all__ = [
    "__version__",
    "AdmitrecError",
    "ContainerError",
    "EllipticityError",
    "FDConfig",
    "GridError",
    "Grid3",
    "IsoReconConfig",
    "Mask",
    "MaskError",
    "MatrixField",
    "NoiseSpec",
    "NotDiagonalizableError",
    "PreconditionError",
    "ReconConfig",
    "ReconReport",
    "ScalarField",
    "SolverError",
    "VectorField",
    "add_noise",
    "cgo_parameters",
    "create_grid",
    "curl",
    "divergence",
    "fdfd_solve",
    "gradient",
    "integrate_admittivity",
    "plane_wave_frame",
    "read_container",
    "reconstruct",
    "reconstruct_isotropic",
    "unit_cube_grid",
    "write_container",
]
