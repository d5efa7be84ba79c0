"""Synthetic data: closed-form plane-wave solutions and noise injection.

For a constant complex symmetric ``gamma0 = Q diag(k) Q^T`` the three
plane waves ``E_j = beta_j exp(i zeta_j . x)`` with ``zeta_1 = t_1 beta_2``,
``zeta_2 = t_2 beta_3``, ``zeta_3 = t_3 beta_1`` and ``t_j**2 = -i omega mu0 k_j``
solve the time-harmonic Maxwell system.  Three more solutions are obtained
as ``E_{3+k} = lambda_k E_k`` with linear weights whose gradients are
``beta_3, beta_1, beta_2``.  All fields, their curls and the linear
dependence coefficients are evaluated in closed form here.

The variable-coefficient forward solver lives in :mod:`admitrec.fdfd` and is
re-exported as :func:`fdfd_solve`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EllipticityError
from . import fdfd as _fdfd
from .fields import Grid3, MatrixField, ScalarField, VectorField
from .tensor_algebra import complex_orthogonal_diagonalize, ellipticity_check

# Position of the weight gradient for the additional solutions: grad(lambda_k) = beta_{_LAMBDA_BETA[k]}
_LAMBDA_BETA = (2, 0, 1)
_ZETA_BETA = (1, 2, 0)

FDFDResult = _fdfd.FDFDResult
fdfd_solve = _fdfd.fdfd_solve


@dataclass(frozen=True, eq=False)
class SolutionFrame:
    gamma0: np.ndarray
    omega: float
    mu0: float
    Q: np.ndarray
    eigvals: np.ndarray
    t: np.ndarray
    zeta: np.ndarray  # (3, 3), row j is zeta_j
    lambda_grads: np.ndarray  # (3, 3), row k is grad(lambda_k)

    @property
    def betas(self) -> np.ndarray:
        """Rows are ``beta_1, beta_2, beta_3``."""
        return self.Q.T


def plane_wave_frame(gamma0, omega: float = 1.0, mu0: float = 1.0, kappa: float = 100.0) -> SolutionFrame:
    """Build the six-solution plane-wave frame for a constant tensor.

    Raises
    ------
    EllipticityError
        If ``Re gamma0`` violates the bounds for ``kappa`` or ``Im gamma0``
        is not positive semidefinite.
    NotDiagonalizableError
        Propagated from :func:`complex_orthogonal_diagonalize`.
    """
    if omega <= 0 or mu0 <= 0:
        raise ValueError("omega and mu0 must be positive")
    gamma0 = np.asarray(gamma0, dtype=np.complex128)
    report = ellipticity_check(gamma0, kappa, omega)
    # Lossless media (eps = 0) are admitted; only sigma is held to the kappa bounds.
    failed = [f for f in report.failed if f.startswith("sigma")]
    if report.margins[2] < 0:
        failed.append("eps_min")
    if failed:
        raise EllipticityError(f"ellipticity: gamma0 fails {failed} (margins {report.margins})")
    eig = complex_orthogonal_diagonalize(gamma0)
    Q, k = eig.Q, eig.eigvals
    t = np.sqrt(-1j * omega * mu0 * k)
    betas = Q.T
    zeta = np.array([t[j] * betas[_ZETA_BETA[j]] for j in range(3)])
    grads = np.array([betas[_LAMBDA_BETA[j]] for j in range(3)])
    return SolutionFrame(gamma0, float(omega), float(mu0), Q, k, t, zeta, grads)


def _phase(frame: SolutionFrame, pts: np.ndarray, j: int) -> np.ndarray:
    return np.exp(1j * (pts @ frame.zeta[j]))


def frame_E(frame: SolutionFrame, pts: np.ndarray, index: int) -> np.ndarray:
    """Electric field of solution ``index`` (1-based) at points ``(..., 3)``."""
    j = (index - 1) % 3
    E = frame.betas[j] * _phase(frame, pts, j)[..., None]
    if index > 3:
        E = E * frame_lambda(frame, pts, j)[..., None]
    return E


def frame_lambda(frame: SolutionFrame, pts: np.ndarray, k: int) -> np.ndarray:
    """Weight ``lambda_{k+1}(x) = grad(lambda_{k+1}) . x`` (integration constant zero)."""
    return pts @ frame.lambda_grads[k]


def frame_H(frame: SolutionFrame, pts: np.ndarray, index: int) -> np.ndarray:
    """Magnetic field ``(i / (omega mu0)) curl E`` in closed form."""
    j = (index - 1) % 3
    wm = frame.omega * frame.mu0
    base = -np.cross(frame.zeta[j], frame.betas[j]) / wm
    H = base * _phase(frame, pts, j)[..., None]
    if index > 3:
        E = frame.betas[j] * _phase(frame, pts, j)[..., None]
        H = frame_lambda(frame, pts, j)[..., None] * H + (1j / wm) * np.cross(frame.lambda_grads[j], E)
    return H


def evaluate_frame(frame: SolutionFrame, grid: Grid3, which=("E", "H"), indices=range(1, 7)) -> dict:
    """Sample frame solutions on ``grid``; keys look like ``"E1"``, ``"H4"``."""
    pts = grid.points()
    out = {}
    for idx in indices:
        if not 1 <= idx <= 6:
            raise ValueError("solution indices must lie in 1..6")
        if "E" in which:
            out[f"E{idx}"] = VectorField(grid, frame_E(frame, pts, idx))
        if "H" in which:
            out[f"H{idx}"] = VectorField(grid, frame_H(frame, pts, idx))
    return out


def frame_H_list(frame: SolutionFrame, grid: Grid3, count: int = 6) -> list[VectorField]:
    fields = evaluate_frame(frame, grid, which=("H",), indices=range(1, count + 1))
    return [fields[f"H{i}"] for i in range(1, count + 1)]


@dataclass
class AnalyticDerivatives:
    """Closed-form curls and dependence data for the frame, used to bypass FD."""

    Y: MatrixField  # columns curl H_1..curl H_3
    curls_extra: list  # curl H_{3+k}
    lam: np.ndarray  # (m, n1, n2, n3, 3)
    Z: list  # MatrixField per k, Z[..., p, i] = d_p lambda^k_i


def frame_analytic_derivatives(frame: SolutionFrame, grid: Grid3, m: int = 3) -> AnalyticDerivatives:
    pts = grid.points()
    curls = [frame_E(frame, pts, i) @ frame.gamma0.T for i in range(1, 4 + m)]
    Y = MatrixField(grid, np.stack(curls[:3], axis=-1))
    lam = np.zeros((m,) + grid.dims + (3,), dtype=np.complex128)
    Zs = []
    for k in range(m):
        lam[k, ..., k] = frame_lambda(frame, pts, k)
        Z = np.zeros(grid.dims + (3, 3), dtype=np.complex128)
        Z[..., :, k] = frame.lambda_grads[k]
        Zs.append(MatrixField(grid, Z))
    return AnalyticDerivatives(Y, curls[3:], lam, Zs)


@dataclass(frozen=True)
class NoiseSpec:
    delta: float = 0.0
    smoothing_radius: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.delta < 0 or self.smoothing_radius < 0:
            raise ValueError("delta and smoothing_radius must be non-negative")


def add_noise(H: VectorField, spec: NoiseSpec, stream: int = 0) -> VectorField:
    """Perturb ``H`` by circular complex Gaussian noise.

    The per-component standard deviation is ``delta * max|H|``.  When
    ``smoothing_radius > 0`` the perturbation (not the signal) is Gaussian
    filtered with that standard deviation in voxels.  ``stream`` selects an
    independent random stream for the same seed, so several fields can be
    perturbed independently and reproducibly.
    """
    if spec.delta == 0:
        return H
    rng = np.random.default_rng([spec.seed, stream])
    scale = spec.delta * np.abs(H.values).max()
    shape = H.values.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (scale / np.sqrt(2.0))
    if spec.smoothing_radius > 0:
        r = float(spec.smoothing_radius)
        sig = (r, r, r, 0)
        noise = ndimage.gaussian_filter(noise.real, sig, mode="nearest") + 1j * ndimage.gaussian_filter(
            noise.imag, sig, mode="nearest"
        )
    return VectorField(H.grid, H.values + noise)


def add_noise_all(H_list, spec: NoiseSpec) -> list[VectorField]:
    return [add_noise(H, spec, stream=i) for i, H in enumerate(H_list)]


def scalar_gamma_field(grid: Grid3, func) -> MatrixField:
    """Isotropic tensor field ``func(x) * I`` from a callable on points."""
    g = func(grid.points())
    return MatrixField(grid, g[..., None, None] * np.eye(3), "symmetric")


def as_scalar(field: MatrixField) -> ScalarField:
    return ScalarField(field.grid, field.values[..., 0, 0])
