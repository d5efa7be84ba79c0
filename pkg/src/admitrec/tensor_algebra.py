"""Small complex linear algebra on 3x3 matrices and 1-/2-forms in R^3.

Conventions
-----------
* ``frobenius_inner(A, B) = tr(A^* B)``, conjugate-linear in the first slot.
* A vector ``V`` is identified with the 1-form ``V1 dx1 + V2 dx2 + V3 dx3``;
  its Hodge dual is a 2-form, stored as the antisymmetric matrix of its
  values on basis pairs, ``A[p, q] = (*V)(e_p, e_q)``.  With this layout
  ``hodge_star_vector(a x b) == outer(a, b) - outer(b, a)``.
* ``SYM_BASIS`` orders the natural basis of complex symmetric matrices as
  ``e11, e22, e33, e12+e21, e13+e31, e23+e32``.
* ``ANTISYM_BASIS[j] = hodge_star_vector(e_j)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotDiagonalizableError

_SYM_INDEX = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]


def _sym_unit(p: int, q: int) -> np.ndarray:
    w = np.zeros((3, 3), dtype=np.complex128)
    w[p, q] = 1.0
    w[q, p] = 1.0
    return w


SYM_BASIS = np.array([_sym_unit(p, q) for p, q in _SYM_INDEX])
SYM_BASIS.flags.writeable = False


def frobenius_inner(A, B):
    """``tr(A^* B)``; broadcasts over leading axes."""
    return np.einsum("...ij,...ij->...", np.conj(A), B)


def hodge_star_vector(V):
    """Antisymmetric matrix of the 2-form dual to the 1-form ``V``.

    Broadcasts over leading axes: ``V[..., 3] -> A[..., 3, 3]``.
    """
    V = np.asarray(V)
    A = np.zeros(V.shape[:-1] + (3, 3), dtype=np.result_type(V, np.complex128))
    A[..., 0, 1] = V[..., 2]
    A[..., 1, 0] = -V[..., 2]
    A[..., 1, 2] = V[..., 0]
    A[..., 2, 1] = -V[..., 0]
    A[..., 0, 2] = -V[..., 1]
    A[..., 2, 0] = V[..., 1]
    return A


def hodge_star_2form(A):
    """Inverse direction: the 1-form dual to the 2-form stored in ``A``."""
    A = np.asarray(A)
    return np.stack([A[..., 1, 2], A[..., 2, 0], A[..., 0, 1]], axis=-1)


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def hodge_star_form(form: dict, n: int = 3) -> dict:
    """Hodge star of an ``l``-form given as ``{sorted index tuple: coefficient}``.

    Each basis element ``e^a1 ^ ... ^ e^al`` maps to the complementary basis
    element, signed so the concatenated frame is positively oriented.
    """
    out = {}
    for alpha, coeff in form.items():
        beta = tuple(i for i in range(n) if i not in alpha)
        out[beta] = out.get(beta, 0) + _perm_sign(alpha + beta) * coeff
    return out


def hodge_involution_check(l: int, coeffs=None, n: int = 3, atol: float = 1e-14) -> None:
    """Assert ``** eta == (-1)**(l*(n-l)) eta`` on ``l``-forms.

    ``coeffs`` lists coefficient vectors over the sorted basis of ``l``-forms;
    by default every basis form is checked.
    """
    from itertools import combinations

    basis = list(combinations(range(n), l))
    sign = (-1) ** (l * (n - l))
    samples = np.eye(len(basis)) if coeffs is None else np.atleast_2d(coeffs)
    for c in samples:
        eta = dict(zip(basis, c))
        twice = hodge_star_form(hodge_star_form(eta, n), n)
        for key in basis:
            assert abs(twice.get(key, 0) - sign * eta[key]) <= atol, "Hodge star is not an involution"


ANTISYM_BASIS = hodge_star_vector(np.eye(3)).real.copy()
ANTISYM_BASIS.flags.writeable = False


def symmetrize(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def sym_from_coords(x):
    """Symmetric matrix from its six ``SYM_BASIS`` coordinates."""
    return np.einsum("...a,aij->...ij", x, SYM_BASIS)


@dataclass
class GramSchmidtResult:
    ortho: list
    rank: int
    coeffs: np.ndarray  # ortho[j] == sum_g coeffs[j, g] * generators[g]
    selected: list  # generator indices that contributed a new direction


def gram_schmidt(generators, tol: float = 1e-8) -> GramSchmidtResult:
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Generators whose residual after projection is at most ``tol`` times their
    own norm are dropped.  ``coeffs`` expresses each orthonormal element in
    terms of the inputs so right-hand-side data can be carried along.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gens = [np.asarray(g, dtype=np.complex128) for g in generators]
    if not gens:
        raise ValueError("generators must be non-empty")
    n = len(gens)
    ortho, coeffs, selected = [], [], []
    for g_idx, g in enumerate(gens):
        norm_g = np.sqrt(frobenius_inner(g, g).real)
        if norm_g == 0.0:
            continue
        r = g.copy()
        c = np.zeros(n, dtype=np.complex128)
        c[g_idx] = 1.0
        for _ in range(2):
            for o, oc in zip(ortho, coeffs):
                proj = frobenius_inner(o, r)
                r = r - proj * o
                c = c - proj * oc
        norm_r = np.sqrt(frobenius_inner(r, r).real)
        if norm_r <= tol * norm_g:
            continue
        ortho.append(r / norm_r)
        coeffs.append(c / norm_r)
        selected.append(g_idx)
    coeff_arr = np.array(coeffs).reshape(len(ortho), n)
    return GramSchmidtResult(ortho, len(ortho), coeff_arr, selected)


def gram_schmidt_batched(G: np.ndarray, tol: float = 1e-8, max_rank: int | None = None, pivot: bool = False):
    """Vectorized :func:`gram_schmidt` over a batch of generator sets.

    Parameters
    ----------
    G : ndarray, shape (N, g, d)
        ``N`` independent sets of ``g`` generators flattened to length ``d``.
    tol : float
        Relative drop tolerance, as in :func:`gram_schmidt`.
    max_rank : int, optional
        Stop accepting generators once this many directions are found.
    pivot : bool
        If True, each step takes the remaining generator with the largest
        residual norm instead of the next one in order, and the drop
        tolerance is taken relative to the largest generator of the set, so
        generators that are zero up to roundoff are never selected.

    Returns
    -------
    ortho : ndarray (N, r, d)
        Orthonormal elements, zero-padded where fewer than ``r`` were found.
    coeffs : ndarray (N, r, g)
        ``ortho[n, j] = sum_i coeffs[n, j, i] * G[n, i]``.
    rank : ndarray (N,) of int
    selected : ndarray (N, r) of int, -1 where unused
    """
    N, g, d = G.shape
    r_max = g if max_rank is None else min(g, max_rank)
    ortho = np.zeros((N, r_max, d), dtype=np.complex128)
    coeffs = np.zeros((N, r_max, g), dtype=np.complex128)
    selected = np.full((N, r_max), -1, dtype=int)
    rank = np.zeros(N, dtype=int)
    rows = np.arange(N)
    G = G.astype(np.complex128)
    norm_g = np.linalg.norm(G, axis=2)
    if pivot:
        R = G.copy()
        C = np.broadcast_to(np.eye(g, dtype=np.complex128), (N, g, g)).copy()
        used = np.zeros((N, g), dtype=bool)
    for step in range(g):
        if pivot:
            rel = np.linalg.norm(R, axis=2)
            rel[used] = -1.0
            gi = np.argmax(rel, axis=1)
            r = R[rows, gi]
            c = C[rows, gi]
            ng = norm_g[rows, gi]
        else:
            gi = np.full(N, step)
            r = G[:, step].copy()
            c = np.zeros((N, g), dtype=np.complex128)
            c[:, step] = 1.0
            ng = norm_g[:, step]
        for _ in range(2):
            for j in range(r_max):
                proj = np.einsum("nd,nd->n", np.conj(ortho[:, j]), r)
                r = r - proj[:, None] * ortho[:, j]
                c = c - proj[:, None] * coeffs[:, j]
        norm_r = np.linalg.norm(r, axis=1)
        if pivot:
            ng = norm_g.max(axis=1)
        accept = (norm_r > tol * ng) & (ng > 0) & (rank < r_max)
        idx = rows[accept]
        slot = rank[accept]
        ortho[idx, slot] = r[accept] / norm_r[accept, None]
        coeffs[idx, slot] = c[accept] / norm_r[accept, None]
        selected[idx, slot] = gi[accept]
        rank[accept] += 1
        if pivot:
            used[rows, gi] = True
            q = np.where(accept[:, None], r / np.where(norm_r > 0, norm_r, 1.0)[:, None], 0.0)
            qc = np.where(accept[:, None], c / np.where(norm_r > 0, norm_r, 1.0)[:, None], 0.0)
            proj = np.einsum("nd,ngd->ng", np.conj(q), R)
            R = R - proj[:, :, None] * q[:, None, :]
            C = C - proj[:, :, None] * qc[:, None, :]
    return ortho, coeffs, rank, selected


@dataclass
class EigDecomposition:
    Q: np.ndarray
    eigvals: np.ndarray

    @property
    def betas(self) -> list[np.ndarray]:
        return [self.Q[:, j] for j in range(3)]


def complex_orthogonal_diagonalize(S, tol: float = 1e-6) -> EigDecomposition:
    """Factor a complex symmetric ``S`` as ``Q diag(k) Q^T`` with ``Q^T Q = I``.

    Eigenvectors come from a general eigensolver and are rescaled so that the
    bilinear form ``beta . beta`` equals one.  Eigenvalues are ordered by
    descending modulus (ties by descending real, then imaginary part).  An
    exact scalar matrix returns ``Q = I``.

    Raises
    ------
    NotDiagonalizableError
        ``isotropic-eigenvector`` if some eigenvector has ``|v . v| <= tol``
        (unit Hermitian norm), ``near-degenerate-spectrum`` if two
        eigenvalues are within ``tol * max(1, ||S||)``.
    """
    S = np.asarray(S, dtype=np.complex128)
    if S.shape != (3, 3):
        raise ValueError("S must be 3x3")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > 1e-12 * scale:
        raise ValueError("S is not symmetric")
    if np.array_equal(S, S[0, 0] * np.eye(3)):
        return EigDecomposition(np.eye(3, dtype=np.complex128), np.full(3, S[0, 0]))
    k, V = np.linalg.eig(S)
    V = V / np.linalg.norm(V, axis=0)
    vv = np.einsum("ij,ij->j", V, V)
    if np.any(np.abs(vv) <= tol):
        raise NotDiagonalizableError("isotropic-eigenvector", f"|v.v| = {np.abs(vv).min():.3e}")
    gaps = np.abs(k[:, None] - k[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() <= tol * scale:
        raise NotDiagonalizableError("near-degenerate-spectrum", f"min gap {gaps.min():.3e}")
    Q = V / np.sqrt(vv)
    # keys are rounded so roundoff cannot reorder ties
    key = lambda v: -np.round(v / scale, 10)  # noqa: E731
    order = np.lexsort((key(k.imag), key(k.real), key(np.abs(k))))
    Q, k = Q[:, order], k[order]
    if np.abs(Q.T @ Q - np.eye(3)).max() > 1e-10:
        raise NotDiagonalizableError("isotropic-eigenvector", "Q^T Q deviates from identity")
    return EigDecomposition(Q, k)


@dataclass
class EllipticityReport:
    ok: bool
    margins: tuple[float, float, float, float]  # min/max eig of sigma, min/max eig of epsilon
    failed: list


def ellipticity_check(gamma, kappa: float, omega: float | None = None) -> EllipticityReport:
    """Check ``kappa^-1 <= eig(sigma), eig(eps) <= kappa`` for ``gamma = sigma + i omega eps``.

    Without ``omega`` the imaginary part itself is tested.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    gamma = np.asarray(gamma, dtype=np.complex128)
    sigma = symmetrize(gamma.real)
    eps = symmetrize(gamma.imag) / (omega if omega else 1.0)
    s = np.linalg.eigvalsh(sigma)
    e = np.linalg.eigvalsh(eps)
    margins = (float(s[0]), float(s[-1]), float(e[0]), float(e[-1]))
    names = ("sigma_min", "sigma_max", "eps_min", "eps_max")
    failed = []
    for name, value in zip(names, margins):
        if name.endswith("min") and value < 1.0 / kappa:
            failed.append(name)
        if name.endswith("max") and value > kappa:
            failed.append(name)
    return EllipticityReport(not failed, margins, failed)
