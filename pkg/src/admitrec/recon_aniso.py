"""Explicit algebraic reconstruction of an anisotropic admittivity tensor.

Pipeline per voxel, given magnetic fields ``H_1 .. H_{3+m}`` (m >= 3 is the
usual case, at least six fields are required):

1. ``Y = [curl H_1, curl H_2, curl H_3]``; voxels with small ``|det Y|`` are
   dropped.
2. ``lambda^k`` solves ``Y lambda^k = curl H_{3+k}`` and ``Z_k`` has the
   gradients of ``lambda^k_i`` as columns.
3. ``M_k = (i/2) omega mu0 * star(H_{3+k} - lambda^k_i H_i)`` where the star
   of a vector is the antisymmetric matrix ``A[p, q] = (*V)(e_p, e_q)``.
4. For each antisymmetric basis matrix ``Omega_j`` and each ``k``::

       tr(gamma^{-1} sym(Omega_j Z_k Y^T)) = tr(Omega_j M_k^T)

   which is linear in the six coordinates of ``gamma^{-1}``.  The ``3m x 6``
   system is solved by least squares (default) or, as a cross-check, by
   Cramer's rule on six Gram-Schmidt-selected rows.
5. ``gamma = inverse(gamma^{-1})``, symmetrized.

With the layout of step 3 the identity in step 4 holds with a plus sign and
without transposition; this is fixed by the constant-tensor round trip.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffops import FDConfig, curl_array, d_axis, jacobian_array
from .errors import MaskError, PreconditionError
from .fields import Grid3, Mask, MatrixField, ScalarField, VectorField, check_same_grid, full_mask, interior_mask
from .tensor_algebra import ANTISYM_BASIS, SYM_BASIS, gram_schmidt_batched, hodge_star_vector, symmetrize

MAX_SOBOLEV_ORDER = 3


@dataclass(frozen=True)
class ReconConfig:
    fd: FDConfig = FDConfig()
    detY_rel_threshold: float = 1e-6
    w_cond_threshold: float = 1e8
    solver_mode: str = "least_squares"
    omega: float = 1.0
    mu0: float = 1.0
    rank_tol: float = 1e-8

    def __post_init__(self):
        if self.solver_mode not in ("least_squares", "cramer6"):
            raise ValueError(f"unknown solver_mode {self.solver_mode!r}")
        if self.detY_rel_threshold <= 0 or self.w_cond_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.omega <= 0 or self.mu0 <= 0:
            raise ValueError("omega and mu0 must be positive")

    def to_dict(self) -> dict:
        return {
            "fd_order": self.fd.order,
            "detY_rel_threshold": self.detY_rel_threshold,
            "w_cond_threshold": self.w_cond_threshold,
            "solver_mode": self.solver_mode,
            "omega": self.omega,
            "mu0": self.mu0,
            "rank_tol": self.rank_tol,
        }


@dataclass
class ReconReport:
    valid_mask: Mask
    min_abs_detY: float
    worst_cond_W: float
    cond_field: ScalarField
    rank_field: np.ndarray
    rejected: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "valid_voxels": self.valid_mask.count,
            "valid_voxel_fraction": self.valid_mask.fraction,
            "valid_mask_provenance": self.valid_mask.provenance,
            "min_abs_detY": self.min_abs_detY,
            "worst_cond_W": self.worst_cond_W,
            "rank6_fraction_of_valid": (
                float((self.rank_field[self.valid_mask.flags] == 6).mean()) if self.valid_mask.count else 0.0
            ),
            "rejected": dict(self.rejected),
        }


def _det3(A: np.ndarray) -> np.ndarray:
    return np.linalg.det(A) if A.size else np.zeros(A.shape[:-2], dtype=A.dtype)


def compute_Y(H1: VectorField, H2: VectorField, H3: VectorField, cfg: ReconConfig = ReconConfig(), mask=None):
    """Curl matrix ``Y``, its determinant and the Hypothesis-1 mask."""
    grid = check_same_grid(H1, H2, H3)
    Y = np.stack([curl_array(H.values, grid, cfg.fd.order) for H in (H1, H2, H3)], axis=-1)
    detY = np.linalg.det(Y)
    base = interior_mask(grid, cfg.fd.margin)
    if mask is not None:
        base = (mask & base).erode(cfg.fd.margin)
    scale = np.abs(detY[base.flags]).max() if base.count else 0.0
    keep = np.abs(detY) > cfg.detY_rel_threshold * scale if scale > 0 else np.zeros(grid.dims, bool)
    out = base.restrict(keep, "detY below threshold")
    return MatrixField(grid, Y), ScalarField(grid, detY), out


def solve_lambda(Y: np.ndarray, curls_extra, mask: np.ndarray) -> np.ndarray:
    """``lambda^k`` with ``Y lambda^k = curl H_{3+k}`` on masked voxels, zero elsewhere."""
    m = len(curls_extra)
    lam = np.zeros((m,) + Y.shape[:-2] + (3,), dtype=np.complex128)
    if not mask.any():
        return lam
    Ym = Y[mask]
    for k, c in enumerate(curls_extra):
        lam[k][mask] = np.linalg.solve(Ym, c[mask][..., None])[..., 0]
    return lam


def compute_lambda(H_list, Y: MatrixField, mask: Mask, cfg: ReconConfig = ReconConfig()):
    """Linear-dependence coefficients and their gradients.

    Returns
    -------
    lam : list of VectorField
        ``lam[k].values[..., i] = lambda^{k+1}_{i+1}``.
    Z : list of MatrixField
        ``Z[k].values[..., p, i] = d_p lambda^{k+1}_{i+1}``.
    mask : Mask
        ``mask`` eroded by the gradient stencil.
    """
    grid = Y.grid
    extra = H_list[3:]
    curls = [curl_array(H.values, grid, cfg.fd.order) for H in extra]
    lam = solve_lambda(Y.values, curls, mask.flags)
    out = mask.erode(cfg.fd.margin, "gradient of lambda")
    if out.count == 0:
        raise MaskError("all-voxels-masked after computing lambda")
    Zs = [MatrixField(grid, jacobian_array(lam[k], grid, cfg.fd.order)) for k in range(len(extra))]
    return [VectorField(grid, lam[k]) for k in range(len(extra))], Zs, out


def compute_M(H_list, lam, cfg: ReconConfig = ReconConfig()) -> list[MatrixField]:
    """``M_k = (i/2) omega mu0 star(H_{3+k} - sum_i lambda^k_i H_i)``."""
    H = [h.values for h in H_list]
    out = []
    for k, lk in enumerate(lam):
        lv = lk.values if isinstance(lk, VectorField) else lk
        V = H[3 + k] - sum(lv[..., i, None] * H[i] for i in range(3))
        M = 0.5j * cfg.omega * cfg.mu0 * hodge_star_vector(V)
        out.append(MatrixField(H_list[0].grid, M, "antisymmetric"))
    return out


def system_generators(Y: np.ndarray, Zs) -> np.ndarray:
    """``sym(Omega_j Z_k Y^T)`` for all (k, j); shape ``(..., 3m, 3, 3)``, k-major."""
    gens = []
    for Z in Zs:
        ZYt = Z @ np.swapaxes(Y, -1, -2)
        for Om in ANTISYM_BASIS:
            gens.append(symmetrize(Om @ ZYt))
    return np.stack(gens, axis=-3)


def system_rhs(Ms) -> np.ndarray:
    """``tr(Omega_j M_k^T)``; shape ``(..., 3m)``, k-major."""
    rhs = []
    for M in Ms:
        for Om in ANTISYM_BASIS:
            rhs.append(np.einsum("pq,...pq->...", Om, M))
    return np.stack(rhs, axis=-1)


def system_matrix(gens: np.ndarray) -> np.ndarray:
    """Coefficients ``tr(w_a W)`` of each generator against the symmetric basis."""
    return np.einsum("...rpq,apq->...ra", gens, SYM_BASIS)


def _svd_solve(A: np.ndarray, b: np.ndarray):
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.einsum("nri,nr->ni", np.conj(U), b) / s
    coef = np.where(s > 0, coef, 0)
    x = np.einsum("nij,ni->nj", np.conj(Vh), coef)
    return x, s


def _cramer6(gens: np.ndarray, b: np.ndarray, tol: float):
    """Cramer solve on six orthonormalized generators; returns (x, rank, cond of the selected raw rows)."""
    N, g = gens.shape[:2]
    flat = gens.reshape(N, g, 9)
    ortho, coeffs, rank, selected = gram_schmidt_batched(flat, tol=tol, max_rank=6, pivot=True)
    x = np.zeros((N, 6), dtype=np.complex128)
    sel_cond = np.full(N, np.inf)
    ok = rank == 6
    if not ok.any():
        return x, rank, sel_cond
    W = ortho[ok].reshape(-1, 6, 3, 3)
    bp = np.einsum("npg,ng->np", coeffs[ok], b[ok])
    A6 = system_matrix(W)
    detA = np.linalg.det(A6)
    xs = np.empty((A6.shape[0], 6), dtype=np.complex128)
    for a in range(6):
        Aa = A6.copy()
        Aa[:, :, a] = bp
        xs[:, a] = np.linalg.det(Aa) / detA
    x[ok] = xs
    raw = system_matrix(gens[ok])
    picked = np.take_along_axis(raw, selected[ok][:, :, None], axis=1)
    sel_cond[ok] = np.linalg.cond(picked)
    return x, rank, sel_cond


@dataclass
class SolveResult:
    gamma: MatrixField
    gamma_inv_coords: np.ndarray  # (n1, n2, n3, 6)
    report: ReconReport
    selected_cond: np.ndarray | None = None


def diagnostics(Y: MatrixField, Zs, mask: Mask, cfg: ReconConfig = ReconConfig(), detY: ScalarField | None = None):
    """Singular values of the per-voxel system and the resulting valid mask."""
    grid = Y.grid
    flags = mask.flags
    cond = np.full(grid.dims, np.inf)
    rank = np.zeros(grid.dims, dtype=int)
    if flags.any():
        gens = system_generators(Y.values[flags], [Z.values[flags] for Z in Zs])
        s = np.linalg.svd(system_matrix(gens), compute_uv=False)
        rk = (s > cfg.rank_tol * s[:, :1]).sum(axis=1)
        with np.errstate(divide="ignore"):
            c = np.where(rk >= 6, s[:, 0] / s[:, -1], np.inf) if s.shape[1] >= 6 else np.full(len(s), np.inf)
        cond[flags] = c
        rank[flags] = rk
    good = (rank == 6) & (cond <= cfg.w_cond_threshold)
    valid = mask.restrict(good, "W rank/condition")
    min_det = float(np.abs(detY.values[mask.flags]).min()) if detY is not None and mask.count else float("nan")
    worst = float(cond[valid.flags].max()) if valid.count else float("inf")
    report = ReconReport(
        valid_mask=valid,
        min_abs_detY=min_det,
        worst_cond_W=worst,
        cond_field=ScalarField(grid, np.where(np.isfinite(cond), cond, 0.0)),
        rank_field=rank,
        rejected={"rank_condition": int(mask.count - valid.count)},
    )
    return report


def assemble_and_solve(Y: MatrixField, Zs, Ms, mask: Mask, cfg: ReconConfig = ReconConfig(), detY=None) -> SolveResult:
    """Solve for ``gamma^{-1}`` voxel by voxel and invert.

    Voxels failing the rank/condition test or with a singular ``gamma^{-1}``
    are masked; ``gamma`` is NaN there.
    """
    if len(Zs) != len(Ms):
        raise PreconditionError("Z and M lists differ in length")
    if len(Zs) < 2:
        raise PreconditionError("at least two additional fields (six equations) are required")
    grid = Y.grid
    report = diagnostics(Y, Zs, mask, cfg, detY)
    flags = report.valid_mask.flags
    coords = np.full(grid.dims + (6,), np.nan, dtype=np.complex128)
    gamma = np.full(grid.dims + (3, 3), np.nan, dtype=np.complex128)
    sel_cond = None
    if flags.any():
        gens = system_generators(Y.values[flags], [Z.values[flags] for Z in Zs])
        b = system_rhs([M.values[flags] for M in Ms])
        if cfg.solver_mode == "least_squares":
            x, _ = _svd_solve(system_matrix(gens), b)
        else:
            x, rank, sc = _cramer6(gens, b, cfg.rank_tol)
            sel_cond = np.full(grid.dims, np.inf)
            sel_cond[flags] = sc
            x[rank < 6] = np.nan
        coords[flags] = x
        P = np.einsum("na,apq->npq", x, SYM_BASIS)
        finite = np.all(np.isfinite(P), axis=(-1, -2))
        pc = np.full(len(P), np.inf)
        if finite.any():
            pc[finite] = np.linalg.cond(P[finite])
        invertible = pc < 1e14
        g = np.full(P.shape, np.nan, dtype=np.complex128)
        g[invertible] = symmetrize(np.linalg.inv(P[invertible]))
        gamma[flags] = g
        bad = np.zeros(grid.dims, dtype=bool)
        bad[flags] = ~invertible
        if bad.any():
            report.valid_mask = report.valid_mask.restrict(~bad, "singular gamma^-1")
        report.rejected["singular_inversion"] = int(bad.sum())
    else:
        report.rejected.setdefault("singular_inversion", 0)
    return SolveResult(MatrixField(grid, gamma, "symmetric"), coords, report, sel_cond)


def error_norms(gamma_hat: MatrixField, gamma_ref: MatrixField, mask: Mask, s: int = 0, cfg: ReconConfig = ReconConfig()) -> float:
    """Discrete ``W^{s,inf}`` norm of ``gamma_hat - gamma_ref`` on ``mask``.

    The maximum runs over all entries and all FD derivatives of order up to
    ``s``, on the mask eroded by ``s`` stencil reaches.
    """
    if not 0 <= s <= MAX_SOBOLEV_ORDER:
        raise ValueError(f"s must lie in 0..{MAX_SOBOLEV_ORDER}")
    grid = check_same_grid(gamma_hat, gamma_ref, mask)
    region = mask.erode(s * cfg.fd.margin) if s else mask
    if region.count == 0:
        raise MaskError(f"mask-too-small for s={s}")
    D = np.where(mask.flags[..., None, None], gamma_hat.values - gamma_ref.values, 0.0)
    best = 0.0
    current = {(): D}
    for order in range(s + 1):
        for arr in current.values():
            best = max(best, float(np.abs(arr[region.flags]).max()))
        if order == s:
            break
        nxt = {}
        for key, arr in current.items():
            for ax in range(3):
                new_key = tuple(sorted(key + (ax,)))
                if new_key not in nxt:
                    nxt[new_key] = d_axis(arr, ax, grid.spacing[ax], cfg.fd.order)
        current = nxt
    return best


@dataclass
class ReconResult:
    gamma: MatrixField
    report: ReconReport
    errors: dict
    Y: MatrixField
    Z: list
    M: list
    lam: list
    mask: Mask
    selected_cond: np.ndarray | None = None


def reconstruct(
    H_list,
    cfg: ReconConfig = ReconConfig(),
    gamma_ref: MatrixField | None = None,
    s_values=(0,),
    analytic=None,
    data_mask: Mask | None = None,
) -> ReconResult:
    """Full anisotropic pipeline.

    ``analytic`` may carry closed-form ``Y``, ``lambda`` and ``Z`` (see
    :func:`admitrec.synthetic.frame_analytic_derivatives`); the finite
    differences are then skipped and every voxel is eligible.
    ``data_mask`` restricts the voxels whose input fields are trusted.
    """
    if len(H_list) < 6:
        raise PreconditionError(f"at least 6 magnetic fields are required, got {len(H_list)}")
    grid = check_same_grid(*H_list)
    if analytic is None:
        Y, detY, mY = compute_Y(*H_list[:3], cfg=cfg, mask=data_mask)
        lam, Zs, mask = compute_lambda(H_list, Y, mY, cfg)
        pre = interior_mask(grid, cfg.fd.margin)
        if data_mask is not None:
            pre = (data_mask & pre).erode(cfg.fd.margin)
        rejected_pre = {"boundary_margin": grid.size - pre.count}
        rejected_pre["detY"] = pre.count - mY.count
        rejected_pre["lambda_gradient_margin"] = mY.count - mask.count
    else:
        Y = analytic.Y
        detY = ScalarField(grid, np.linalg.det(Y.values))
        mask = full_mask(grid)
        if analytic.lam.shape[0] != len(H_list) - 3:
            raise PreconditionError("analytic data does not match the number of fields")
        lam = [VectorField(grid, l) for l in analytic.lam]
        Zs = analytic.Z
        rejected_pre = {}
    Ms = compute_M(H_list, lam, cfg)
    res = assemble_and_solve(Y, Zs, Ms, mask, cfg, detY)
    report = res.report
    report.rejected = {**rejected_pre, **report.rejected}
    errors = {}
    if gamma_ref is not None:
        for s in s_values:
            errors[s] = error_norms(res.gamma, gamma_ref, report.valid_mask, s, cfg)
    return ReconResult(res.gamma, report, errors, Y, Zs, Ms, lam, mask, res.selected_cond)


def constant_tensor_field(grid: Grid3, gamma0) -> MatrixField:
    return MatrixField(grid, np.broadcast_to(np.asarray(gamma0, dtype=np.complex128), grid.dims + (3, 3)), "symmetric")
