"""Scalar (isotropic) admittivity from transport equations.

For an isotropic ``gamma`` two solutions with ``Y_j = curl H_j = gamma E_j``
give a first-order equation ``theta . grad(gamma) + vartheta * gamma = 0``.
Three such pairs, built around three independent complex directions, give
the redundant system ``grad(gamma) + beta * gamma = 0`` with
``beta = Theta^{-1} vartheta`` where ``Theta`` has rows ``theta_1..3``.
``log(gamma)`` is then recovered by a least-squares potential solve from one
known value.

Conventions
-----------
* ``grad_{Y_a}(Y_1 . Y_2)`` differentiates only the factor ``Y_a``:
  ``(grad_{Y_1}(Y_1 . Y_2))_p = sum_q d_p(Y_1)_q (Y_2)_q``.
* ``vartheta`` is taken as ``chi (curl curl Y_2 . Y_1 - curl curl Y_1 . Y_2)``
  so that the transport equation carries a plus sign with the ``theta``
  bracket below.
* ``chi`` is applied per orientation.
"""
from __future__ import annotations

from dataclasses import dataclass


import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .diffops import FDConfig, curl_array, gradient_array, jacobian_array
from .errors import MaskError, PreconditionError
from .fields import Grid3, Mask, ScalarField, VectorField, check_same_grid, erode_flags, interior_mask

_SQRT2 = np.sqrt(2.0)

# Orientation frames: cyclic coordinate permutations of the canonical pair
# zeta0 = (0, i, 1)/sqrt(2), eta0 = e_1.  The three zeta0 are independent.
_PERMS = ((0, 1, 2), (2, 0, 1), (1, 2, 0))


def orientation_matrix(j: int) -> np.ndarray:
    """Permutation matrix ``R`` with ``R @ v`` the j-th orientation of ``v`` (j = 1, 2, 3)."""
    if j not in (1, 2, 3):
        raise ValueError("orientation index must be 1, 2 or 3")
    R = np.zeros((3, 3))
    for src, dst in enumerate(_PERMS[j - 1]):
        R[dst, src] = 1.0
    return R


@dataclass(frozen=True, eq=False)
class CgoParams:
    a: float
    c: float
    k2: complex
    orientation: int
    zeta1: np.ndarray
    zeta2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    axis_frame: np.ndarray

    @property
    def zeta0(self) -> np.ndarray:
        return self.axis_frame @ (np.array([0, 1j, 1]) / _SQRT2)

    @property
    def eta0(self) -> np.ndarray:
        return self.axis_frame @ np.array([1.0, 0, 0])

    def chi(self, pts: np.ndarray) -> np.ndarray:
        """``-exp(-i (zeta1 + zeta2) . x) / (4 sqrt(2) c)``."""
        return -np.exp(-1j * (pts @ (self.zeta1 + self.zeta2))) / (4 * _SQRT2 * self.c)

    def E(self, pts: np.ndarray, which: int) -> np.ndarray:
        """Plane wave ``eta_w exp(i zeta_w . x)``; a Maxwell solution when ``k2 = -i omega mu0 gamma``."""
        z, e = (self.zeta1, self.eta1) if which == 1 else (self.zeta2, self.eta2)
        return e * np.exp(1j * (pts @ z))[..., None]

    def H(self, pts: np.ndarray, which: int, omega: float = 1.0, mu0: float = 1.0) -> np.ndarray:
        """``(i / (omega mu0)) curl E`` in closed form."""
        z, e = (self.zeta1, self.eta1) if which == 1 else (self.zeta2, self.eta2)
        return (-np.cross(z, e) / (omega * mu0)) * np.exp(1j * (pts @ z))[..., None]

    def to_dict(self) -> dict:
        return {"a": self.a, "c": self.c, "k2": [self.k2.real, self.k2.imag], "orientation": self.orientation}


def cgo_parameters(a: float, c: float, k, j: int = 1, k2: complex | None = None) -> CgoParams:
    """Complex directions of one CGO pair.

    Parameters
    ----------
    a, c : float
        Shift and large parameter.
    k : float
        Real wavenumber; ``k**2`` is used unless ``k2`` is given.
    j : int
        Orientation index 1, 2 or 3.
    k2 : complex, optional
        Complex squared wavenumber (e.g. ``-i omega mu0 gamma`` for a
        lossy medium).  The square root is then the principal one and the
        root domain requires ``Re(c^2 + a^2/4 - k2) > 0``.

    Raises
    ------
    PreconditionError
        Root-domain violation.
    """
    k2 = complex(k) ** 2 if k2 is None else complex(k2)
    if c == 0:
        raise PreconditionError("root-domain: c must be nonzero")
    rad = c * c + a * a / 4.0 - k2
    if rad.real <= 0:
        raise PreconditionError(f"root-domain: c^2 + a^2/4 - k^2 = {rad} must be positive")
    r = np.sqrt(rad) if rad.imag else np.sqrt(rad.real)
    z1 = np.array([a / 2.0, 1j * r, c], dtype=np.complex128)
    z2 = np.array([a / 2.0, -1j * r, -c], dtype=np.complex128)
    norm = np.sqrt(c * c + a * a)
    e1 = np.array([c, 0.0, -a / 2.0]) / norm
    e2 = np.array([c, 0.0, a / 2.0]) / norm
    R = orientation_matrix(j)
    return CgoParams(float(a), float(c), k2, j, R @ z1, R @ z2, (R @ e1).astype(complex), (R @ e2).astype(complex), R)


def _chi_values(chi, grid: Grid3) -> np.ndarray:
    if isinstance(chi, CgoParams):
        return chi.chi(grid.points())
    if isinstance(chi, ScalarField):
        return chi.values
    if callable(chi):
        return np.asarray(chi(grid.points()), dtype=np.complex128)
    return np.broadcast_to(np.asarray(chi, dtype=np.complex128), grid.dims)


@dataclass(frozen=True)
class IsoReconConfig:
    fd: FDConfig = FDConfig()
    anchor_index: tuple | None = None
    anchor_value: complex = 1.0 + 1.0j
    theta_cond_threshold: float = 1e6

    def __post_init__(self):
        v = complex(self.anchor_value)
        if not (v.real > 0 and v.imag > 0):
            raise PreconditionError(f"first-quadrant: anchor value {v} must have positive real and imaginary parts")
        if self.theta_cond_threshold <= 1:
            raise ValueError("theta_cond_threshold must exceed 1")

    def to_dict(self) -> dict:
        v = complex(self.anchor_value)
        return {
            "fd_order": self.fd.order,
            "anchor_index": None if self.anchor_index is None else list(self.anchor_index),
            "anchor_value": [v.real, v.imag],
            "theta_cond_threshold": self.theta_cond_threshold,
        }


def theta_vartheta_arrays(Y1: np.ndarray, Y2: np.ndarray, chi: np.ndarray, grid: Grid3, order: int = 2):
    J1 = jacobian_array(Y1, grid, order)
    J2 = jacobian_array(Y2, grid, order)
    div1 = np.trace(J1, axis1=-2, axis2=-1)[..., None]
    div2 = np.trace(J2, axis1=-2, axis2=-1)[..., None]
    adv = lambda J, v: np.einsum("...pq,...p->...q", J, v)  # noqa: E731  (v . grad) u
    fgrad = lambda J, v: np.einsum("...pq,...q->...p", J, v)  # noqa: E731  grad on one factor
    # paired so that the bracket vanishes exactly when Y1 == Y2
    bracket = (adv(J1, Y2) - adv(J2, Y1)) + (div1 * Y2 - div2 * Y1) + 2 * (fgrad(J2, Y1) - fgrad(J1, Y2))
    cc1 = curl_array(curl_array(Y1, grid, order), grid, order)
    cc2 = curl_array(curl_array(Y2, grid, order), grid, order)
    theta = chi[..., None] * bracket
    vartheta = chi * (np.einsum("...i,...i->...", cc2, Y1) - np.einsum("...i,...i->...", cc1, Y2))
    return theta, vartheta


def theta_vartheta(Y1: VectorField, Y2: VectorField, chi, cfg: IsoReconConfig = IsoReconConfig(), mask: Mask | None = None):
    """Transport coefficients for one pair.

    ``chi`` may be a :class:`CgoParams`, a :class:`ScalarField`, a callable
    on points or a constant.  The returned mask is ``mask`` (default: the
    whole grid) eroded by two stencil reaches for the double curl.
    """
    grid = check_same_grid(Y1, Y2)
    m = cfg.fd.margin
    if min(grid.dims) <= 4 * m:
        raise MaskError(f"grid-too-small for double stencil: dims {grid.dims}, order {cfg.fd.order}")
    theta, vt = theta_vartheta_arrays(Y1.values, Y2.values, _chi_values(chi, grid), grid, cfg.fd.order)
    base = interior_mask(grid, 2 * m) if mask is None else (mask & interior_mask(grid, m)).erode(2 * m, "double curl stencil")
    return VectorField(grid, theta), ScalarField(grid, vt), base


def assemble_beta(pairs, mask: Mask, cfg: IsoReconConfig = IsoReconConfig()):
    """``beta = Theta^{-1} vartheta`` with ``Theta`` rows ``theta_1..3``.

    Returns ``(beta, mask, cond)`` where voxels whose ``Theta`` condition
    number exceeds ``cfg.theta_cond_threshold`` are removed from the mask.
    """
    if len(pairs) != 3:
        raise PreconditionError("three (theta, vartheta) pairs are required")
    grid = mask.grid
    Theta = np.stack([p[0].values for p in pairs], axis=-2)
    vt = np.stack([p[1].values for p in pairs], axis=-1)
    cond = np.full(grid.dims, np.inf)
    f = mask.flags
    if f.any():
        cond[f] = np.linalg.cond(Theta[f])
    good = cond <= cfg.theta_cond_threshold
    out = mask.restrict(good, "Theta condition")
    if out.count == 0:
        raise MaskError("all-masked: Theta is ill-conditioned everywhere")
    beta = np.zeros(grid.dims + (3,), dtype=np.complex128)
    g = out.flags
    beta[g] = np.linalg.solve(Theta[g], vt[g][..., None])[..., 0]
    return VectorField(grid, beta), out, cond


@dataclass
class IntegrationResult:
    gamma: ScalarField  # NaN outside the reconstructed component
    mask: Mask
    unreconstructed: int  # masked voxels outside the anchor's component
    anchor_index: tuple
    residual: float  # relative least-squares residual of the edge equations


def _edge_system(mask: np.ndarray, beta: np.ndarray, spacing):
    """Incidence matrix ``D`` and edge data ``g`` for ``D u ~ g``."""
    idx = -np.ones(mask.shape, dtype=np.int64)
    idx[mask] = np.arange(mask.sum())
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        both = mask[tuple(lo)] & mask[tuple(hi)]
        i0 = idx[tuple(lo)][both]
        i1 = idx[tuple(hi)][both]
        n = len(i0)
        if n == 0:
            continue
        h = spacing[ax]
        e = np.arange(r, r + n)
        rows += [e, e]
        cols += [i0, i1]
        vals += [np.full(n, -1.0 / h), np.full(n, 1.0 / h)]
        rhs.append(-0.5 * (beta[tuple(lo)][both][:, ax] + beta[tuple(hi)][both][:, ax]))
        r += n
    if r == 0:
        return None, None, idx
    D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r, int(mask.sum())))
    return D, np.concatenate(rhs), idx


def integrate_admittivity(beta: VectorField, mask: Mask, cfg: IsoReconConfig = IsoReconConfig()) -> IntegrationResult:
    """Recover ``gamma`` from ``grad(gamma) + beta gamma = 0`` and one anchor value.

    ``u = log(gamma)`` minimizes the squared mismatch between forward
    differences of ``u`` across mask edges and the edge-averaged ``-beta``;
    ``u`` is pinned at the anchor.  Only the 6-connected component of the
    mask containing the anchor is reconstructed.

    Raises
    ------
    MaskError
        Empty mask or anchor outside the mask.
    """
    grid = check_same_grid(beta, mask)
    if mask.count == 0:
        raise MaskError("all-masked: nothing to integrate")
    anchor = cfg.anchor_index
    if anchor is None:
        anchor = tuple(int(i) for i in np.argwhere(mask.flags)[0])
    anchor = tuple(int(i) for i in anchor)
    if any(not 0 <= a < n for a, n in zip(anchor, grid.dims)) or not mask.flags[anchor]:
        raise MaskError(f"anchor {anchor} is not inside the valid mask")
    labels, _ = ndimage.label(mask.flags)
    comp = labels == labels[anchor]
    u0 = np.log(complex(cfg.anchor_value))
    D, g, idx = _edge_system(comp, beta.values, grid.spacing)
    u = np.full(grid.dims, np.nan, dtype=np.complex128)
    residual = 0.0
    if D is None:
        u[anchor] = u0
    else:
        a = idx[anchor]
        keep = np.ones(D.shape[1], dtype=bool)
        keep[a] = False
        Dk = D[:, keep].tocsc()
        rhs = g - D[:, a].toarray().ravel() * u0
        sol = spla.spsolve((Dk.T @ Dk).tocsc(), Dk.T @ rhs)
        full = np.empty(D.shape[1], dtype=np.complex128)
        full[keep] = sol
        full[a] = u0
        u[comp] = full[idx[comp]]
        gn = np.linalg.norm(g)
        residual = float(np.linalg.norm(D @ full - g) / gn) if gn > 0 else float(np.linalg.norm(D @ full - g))
    out_mask = mask.restrict(comp, "anchor component")
    return IntegrationResult(ScalarField(grid, np.exp(u)), out_mask, int(mask.count - comp.sum()), anchor, residual)


def transport_residual(theta: VectorField, vartheta: ScalarField, gamma: ScalarField, mask: Mask, cfg: IsoReconConfig = IsoReconConfig()) -> float:
    """``max |theta . grad(gamma) + vartheta gamma|`` on ``mask``.

    Voxels whose gradient stencil touches a non-finite ``gamma`` value or
    the grid boundary are skipped.
    """
    grid = gamma.grid
    finite = np.isfinite(gamma.values)
    g = np.where(finite, gamma.values, 0.0)
    grad = gradient_array(g, grid, cfg.fd.order)
    r = np.einsum("...i,...i->...", theta.values, grad) + vartheta.values * g
    region = mask.flags & erode_flags(finite, cfg.fd.margin)
    if not region.any():
        raise MaskError("mask-too-small for the transport residual")
    return float(np.abs(r[region]).max())


@dataclass
class IsoResult:
    gamma: ScalarField
    beta: VectorField
    mask: Mask
    thetas: list
    varthetas: list
    theta_cond: np.ndarray
    integration: IntegrationResult

    def report(self) -> dict:
        c = self.theta_cond[self.mask.flags]
        return {
            "valid_voxels": self.mask.count,
            "valid_voxel_fraction": self.mask.fraction,
            "valid_mask_provenance": self.mask.provenance,
            "unreconstructed_voxels": self.integration.unreconstructed,
            "anchor_index": list(self.integration.anchor_index),
            "worst_theta_cond": float(c.max()) if c.size else float("inf"),
            "edge_lsq_residual": self.integration.residual,
        }


def reconstruct_isotropic(
    H_pairs,
    chis,
    cfg: IsoReconConfig = IsoReconConfig(),
    Y_pairs=None,
    data_mask: Mask | None = None,
) -> IsoResult:
    """Full isotropic pipeline from three pairs of magnetic fields.

    Parameters
    ----------
    H_pairs : sequence of three (VectorField, VectorField)
        Magnetic fields of each orientation pair.  Ignored when ``Y_pairs``
        is given.
    chis : sequence of three chi descriptors
        One weight per pair, see :func:`theta_vartheta`.
    Y_pairs : sequence of three (VectorField, VectorField), optional
        Precomputed ``curl H`` (e.g. closed form).
    data_mask : Mask, optional
        Voxels where the input fields are trusted (e.g.
        :attr:`FDFDResult.data_mask`).
    """
    if len(chis) != 3:
        raise PreconditionError("three chi weights are required")
    order = cfg.fd.order
    if Y_pairs is None:
        if len(H_pairs) != 3:
            raise PreconditionError("three pairs of magnetic fields are required")
        grid = check_same_grid(*[h for p in H_pairs for h in p])
        Y_pairs = [tuple(VectorField(grid, curl_array(h.values, grid, order)) for h in p) for p in H_pairs]
        ymask = interior_mask(grid, cfg.fd.margin)
        if data_mask is not None:
            ymask = (data_mask & ymask).erode(cfg.fd.margin, "curl of H")
    else:
        grid = check_same_grid(*[y for p in Y_pairs for y in p])
        ymask = data_mask
    thetas, vts, mask = [], [], None
    for (Y1, Y2), chi in zip(Y_pairs, chis):
        th, vt, m = theta_vartheta(Y1, Y2, chi, cfg, ymask)
        thetas.append(th)
        vts.append(vt)
        mask = m if mask is None else mask & m
    beta, bmask, cond = assemble_beta(list(zip(thetas, vts)), mask, cfg)
    integ = integrate_admittivity(beta, bmask, cfg)
    return IsoResult(integ.gamma, beta, integ.mask, thetas, vts, cond, integ)
