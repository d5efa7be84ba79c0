"""Frequency-domain curl-curl forward solver on a staggered (Yee) grid.

Voxel points are the primal nodes.  ``E`` lives on primal edges and
``H = (i / (omega mu0)) curl E`` on primal faces.  The discrete system

    C^T C e + i omega mu0 M(gamma) e = 0

is enforced on interior edges, with tangential ``E`` prescribed on every edge
lying in a boundary face.  Off-diagonal tensor entries couple edge
components through node averaging.  Results are averaged back to the nodes so
they can be consumed by the collocated reconstruction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .fields import Grid3, Mask, MatrixField, VectorField, interior_mask

MAX_VOXELS = 24**3


def _diff(n: int, h: float) -> sp.csr_matrix:
    """(n-1) x n forward difference."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


def _mid(n: int) -> sp.csr_matrix:
    """(n-1) x n average of neighbouring nodes."""
    return sp.diags([np.full(n - 1, 0.5), np.full(n - 1, 0.5)], [0, 1], shape=(n - 1, n), format="csr")


def _to_nodes(n: int) -> sp.csr_matrix:
    """n x (n-1) interpolation of staggered values to nodes.

    Interior nodes average their two neighbours; the end nodes use linear
    extrapolation so the whole map is second-order accurate.
    """
    A = _mid(n).T.tocsr().tolil()
    A[0, 0], A[0, 1] = 1.5, -0.5
    A[n - 1, n - 2], A[n - 1, n - 3] = 1.5, -0.5
    return A.tocsr()


def _kron3(a, b, c) -> sp.csr_matrix:
    return sp.kron(sp.kron(a, b), c, format="csr")


class YeeOperators:
    """Sparse curl and interpolation operators for one grid."""

    def __init__(self, grid: Grid3):
        n1, n2, n3 = grid.dims
        h1, h2, h3 = grid.spacing
        I = lambda n: sp.identity(n, format="csr")  # noqa: E731
        self.grid = grid
        self.edge_shapes = [(n1 - 1, n2, n3), (n1, n2 - 1, n3), (n1, n2, n3 - 1)]
        self.face_shapes = [(n1, n2 - 1, n3 - 1), (n1 - 1, n2, n3 - 1), (n1 - 1, n2 - 1, n3)]
        sizes = [int(np.prod(s)) for s in self.edge_shapes]
        self.edge_offsets = np.concatenate([[0], np.cumsum(sizes)])
        Z = lambda r, c: sp.csr_matrix((r, c))  # noqa: E731
        fs = [int(np.prod(s)) for s in self.face_shapes]

        # Face-x: dEz/dy - dEy/dz ; face-y: dEx/dz - dEz/dx ; face-z: dEy/dx - dEx/dy
        dEz_dy = _kron3(I(n1), _diff(n2, h2), I(n3 - 1))
        dEy_dz = _kron3(I(n1), I(n2 - 1), _diff(n3, h3))
        dEx_dz = _kron3(I(n1 - 1), I(n2), _diff(n3, h3))
        dEz_dx = _kron3(_diff(n1, h1), I(n2), I(n3 - 1))
        dEy_dx = _kron3(_diff(n1, h1), I(n2 - 1), I(n3))
        dEx_dy = _kron3(I(n1 - 1), _diff(n2, h2), I(n3))
        self.curl = sp.bmat(
            [
                [Z(fs[0], sizes[0]), -dEy_dz, dEz_dy],
                [dEx_dz, Z(fs[1], sizes[1]), -dEz_dx],
                [-dEx_dy, dEy_dx, Z(fs[2], sizes[2])],
            ],
            format="csr",
        )

        # node -> edge averages
        self.node_to_edge = [
            _kron3(_mid(n1), I(n2), I(n3)),
            _kron3(I(n1), _mid(n2), I(n3)),
            _kron3(I(n1), I(n2), _mid(n3)),
        ]
        # edge -> node averages
        self.edge_to_node = [
            _kron3(_to_nodes(n1), I(n2), I(n3)),
            _kron3(I(n1), _to_nodes(n2), I(n3)),
            _kron3(I(n1), I(n2), _to_nodes(n3)),
        ]
        # face -> node averages (two staggered axes each)
        self.face_to_node = [
            _kron3(I(n1), _to_nodes(n2), _to_nodes(n3)),
            _kron3(_to_nodes(n1), I(n2), _to_nodes(n3)),
            _kron3(_to_nodes(n1), _to_nodes(n2), I(n3)),
        ]

    def edge_points(self, comp: int) -> np.ndarray:
        g = self.grid
        axes = g.axes()
        axes[comp] = axes[comp][:-1] + 0.5 * g.spacing[comp]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def boundary_edges(self) -> np.ndarray:
        """Boolean over all edges: True where the edge lies in a boundary face."""
        flags = []
        for comp, shape in enumerate(self.edge_shapes):
            idx = np.indices(shape)
            on = np.zeros(shape, dtype=bool)
            for ax in range(3):
                if ax == comp:
                    continue
                on |= (idx[ax] == 0) | (idx[ax] == shape[ax] - 1)
            flags.append(on.ravel())
        return np.concatenate(flags)

    def mass(self, gamma: np.ndarray) -> sp.csr_matrix:
        """Edge mass operator ``e -> (gamma E)`` sampled on edges."""
        blocks = [[None] * 3 for _ in range(3)]
        for a in range(3):
            for b in range(3):
                g_nodes = gamma[..., a, b].ravel()
                if not np.any(g_nodes):
                    continue
                g_edge = self.node_to_edge[a] @ g_nodes
                if a == b:
                    blocks[a][b] = sp.diags(g_edge)
                else:
                    blocks[a][b] = sp.diags(g_edge) @ self.node_to_edge[a] @ self.edge_to_node[b]
        for a in range(3):
            if blocks[a][a] is None:
                n = self.edge_offsets[a + 1] - self.edge_offsets[a]
                blocks[a][a] = sp.csr_matrix((n, n))
        return sp.bmat(blocks, format="csr")


@dataclass
class FDFDResult:
    E: VectorField
    H: VectorField
    residual: float
    edge_E: np.ndarray  # all edge unknowns, x-edges then y-edges then z-edges
    operators: YeeOperators

    @property
    def data_mask(self) -> Mask:
        """Nodes whose interpolated fields are interior averages.

        Boundary nodes rely on one-sided extrapolation; their error is not
        smooth and is strongly amplified by repeated differentiation.
        """
        grid = self.E.grid
        return Mask(grid, interior_mask(grid, 1).flags, "fdfd interior nodes")


def _boundary_values(ops: YeeOperators, boundary_E) -> np.ndarray:
    vals = []
    for comp in range(3):
        if callable(boundary_E):
            pts = ops.edge_points(comp)
            vals.append(np.asarray(boundary_E(pts))[..., comp].ravel())
        else:
            node_vals = boundary_E.values[..., comp].ravel()
            vals.append(ops.node_to_edge[comp] @ node_vals)
    return np.concatenate(vals)


def fdfd_solve(
    gamma: MatrixField,
    omega: float,
    mu0: float,
    boundary_E: VectorField | Callable[[np.ndarray], np.ndarray],
    max_voxels: int = MAX_VOXELS,
) -> FDFDResult:
    """Solve the anisotropic curl-curl equation with prescribed tangential ``E``.

    Parameters
    ----------
    gamma : MatrixField
        Symmetric admittivity sampled at the voxel nodes.
    boundary_E : VectorField or callable
        Either node samples of an electric field (only the tangential parts on
        boundary edges are used, interpolated to edge midpoints) or a function
        mapping points ``(..., 3)`` to field values ``(..., 3)``.

    Raises
    ------
    SolverError
        ``budget exceeded`` above ``max_voxels`` voxels, ``singular-system``
        when the factorization fails (e.g. near a discrete resonance).
    """
    grid = gamma.grid
    if grid.size > max_voxels:
        raise SolverError(f"budget exceeded: {grid.size} voxels > {max_voxels}")
    if not callable(boundary_E) and boundary_E.grid != grid:
        raise SolverError("boundary data and gamma live on different grids")
    ops = YeeOperators(grid)
    K = (ops.curl.T @ ops.curl).tocsr()
    A = (K + 1j * omega * mu0 * ops.mass(gamma.values)).tocsr()
    bnd = ops.boundary_edges()
    interior = ~bnd
    e = np.zeros(A.shape[0], dtype=np.complex128)
    e[bnd] = _boundary_values(ops, boundary_E)[bnd]
    A_II = A[interior][:, interior].tocsc()
    b = -(A[interior][:, bnd] @ e[bnd])
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros(A_II.shape[0], dtype=np.complex128)
        residual = 0.0
    else:
        try:
            x = spla.splu(A_II).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"singular-system: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverError("singular-system: non-finite solution")
        residual = float(np.linalg.norm(A_II @ x - b) / bnorm)
    e[interior] = x

    wm = omega * mu0
    h_faces = (1j / wm) * (ops.curl @ e)
    off_e, off_f = ops.edge_offsets, np.concatenate([[0], np.cumsum([np.prod(s) for s in ops.face_shapes])])
    E_nodes = np.stack(
        [ops.edge_to_node[c] @ e[off_e[c] : off_e[c + 1]] for c in range(3)], axis=-1
    ).reshape(grid.dims + (3,))
    H_nodes = np.stack(
        [ops.face_to_node[c] @ h_faces[off_f[c] : off_f[c + 1]] for c in range(3)], axis=-1
    ).reshape(grid.dims + (3,))
    return FDFDResult(VectorField(grid, E_nodes), VectorField(grid, H_nodes), residual, e, ops)


def edge_component(result: FDFDResult, comp: int) -> np.ndarray:
    """Edge values of one component reshaped to its staggered grid."""
    ops = result.operators
    o = ops.edge_offsets
    return result.edge_E[o[comp] : o[comp + 1]].reshape(ops.edge_shapes[comp])
