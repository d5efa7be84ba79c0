import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from admitrec.diffops import FDConfig
from admitrec.errors import MaskError, PreconditionError
from admitrec.fields import Mask, MatrixField, VectorField, create_grid, full_mask, interior_mask, unit_cube_grid
from admitrec.recon_aniso import (
    ReconConfig,
    assemble_and_solve,
    compute_lambda,
    compute_M,
    compute_Y,
    constant_tensor_field,
    diagnostics,
    error_norms,
    reconstruct,
    system_generators,
    system_matrix,
    system_rhs,
)
from admitrec.synthetic import frame_analytic_derivatives, frame_E, frame_H_list, plane_wave_frame
from admitrec.tensor_algebra import SYM_BASIS, hodge_star_vector

from conftest import GAMMA_ANISO


def analytic_recon(frame, grid, cfg=ReconConfig()):
    H = frame_H_list(frame, grid)
    ad = frame_analytic_derivatives(frame, grid)
    return reconstruct(H, cfg, gamma_ref=constant_tensor_field(grid, frame.gamma0), analytic=ad)


class TestComputeY:
    def test_constant_fields(self, grid16):
        H = VectorField(grid16, np.ones(grid16.dims + (3,)))
        Y, detY, mask = compute_Y(H, H, H)
        assert not Y.values.any() and mask.count == 0

    def test_frame_determinant(self, grid16, frame_aniso):
        H = frame_H_list(frame_aniso, grid16, 3)
        Y, detY, mask = compute_Y(*H)
        pts = grid16.points()
        E = np.stack([frame_E(frame_aniso, pts, i) for i in (1, 2, 3)], axis=-1)
        analytic = np.linalg.det(frame_aniso.gamma0) * np.linalg.det(E)
        m = mask.flags
        assert mask.count == interior_mask(grid16, 1).count
        rel = np.abs(detY.values[m] - analytic[m]) / np.abs(analytic[m])
        assert rel.max() < 0.05 and np.abs(analytic).min() > 0

    def test_fd_vs_analytic_second_order(self, frame_aniso):
        errs = []
        for n in (16, 31):
            g = unit_cube_grid(n)
            Y, _, m = compute_Y(*frame_H_list(frame_aniso, g, 3))
            ad = frame_analytic_derivatives(frame_aniso, g)
            errs.append(np.abs(Y.values - ad.Y.values)[m.flags].max())
        assert abs(errs[0] / errs[1] / 4 - 1) <= 0.2

    def test_grid_mismatch(self, frame_aniso):
        from admitrec.errors import GridError

        a = frame_H_list(frame_aniso, unit_cube_grid(8), 1)[0]
        b = frame_H_list(frame_aniso, unit_cube_grid(9), 1)[0]
        with pytest.raises(GridError):
            compute_Y(a, a, b)


class TestComputeLambda:
    def test_duplicate_field(self, grid16, frame_aniso):
        H = frame_H_list(frame_aniso, grid16, 3)
        H4 = H + [H[0]]
        Y, _, m = compute_Y(*H)
        lam, Z, m2 = compute_lambda(H4, Y, m)
        f = m.flags
        np.testing.assert_allclose(lam[0].values[f], np.broadcast_to([1, 0, 0], (f.sum(), 3)), atol=1e-12)
        assert np.abs(Z[0].values[m2.flags]).max() < 1e-10
        Ms = compute_M(H4, lam)
        assert np.abs(Ms[0].values[f]).max() < 1e-12

    def test_frame_lambda(self, frame_aniso):
        errs = []
        for n in (16, 31):
            g = unit_cube_grid(n)
            H = frame_H_list(frame_aniso, g, 4)
            Y, _, m = compute_Y(*H[:3])
            lam, Z, m2 = compute_lambda(H, Y, m)
            ad = frame_analytic_derivatives(frame_aniso, g, 1)
            f, f2 = m.flags, m2.flags
            errs.append(
                (np.abs(lam[0].values - ad.lam[0])[f].max(), np.abs(Z[0].values - ad.Z[0].values)[f2].max())
            )
            # the other components vanish and Z has the gradient in column 0 only
            assert np.abs(lam[0].values[f][:, 1:]).max() < 0.05
        for coarse, fine in zip(*errs):
            assert coarse < 0.1
            assert abs(coarse / fine / 4 - 1) <= 0.3

    def test_permutation(self, grid16, frame_aniso):
        H = frame_H_list(frame_aniso, grid16, 5)
        perm = [2, 0, 1]
        Y, _, m = compute_Y(*H[:3])
        lam, _, _ = compute_lambda(H, Y, m)
        Hp = [H[i] for i in perm] + H[3:]
        Yp, _, mp = compute_Y(*Hp[:3])
        lamp, _, _ = compute_lambda(Hp, Yp, mp)
        f = m.flags & mp.flags
        for k in range(2):
            np.testing.assert_allclose(lamp[k].values[f], lam[k].values[f][:, perm], atol=1e-10)
            recomb = np.einsum("nij,nj->ni", Yp.values[f], lamp[k].values[f])
            direct = np.einsum("nij,nj->ni", Y.values[f], lam[k].values[f])
            np.testing.assert_allclose(recomb, direct, atol=1e-10)

    def test_all_masked(self, grid16, frame_aniso):
        H = frame_H_list(frame_aniso, grid16, 4)
        Y, _, _ = compute_Y(*H[:3])
        empty = Mask(grid16, np.zeros(grid16.dims, bool))
        with pytest.raises(MaskError, match="all-voxels-masked"):
            compute_lambda(H, Y, empty)


class TestComputeM:
    def test_basis_vector(self):
        g = create_grid((5, 5, 5), (1,) * 3)
        zero = VectorField(g, np.zeros(g.dims + (3,)))
        V = VectorField(g, np.broadcast_to([1.0, 0, 0], g.dims + (3,)))
        lam = [np.zeros(g.dims + (3,))]
        (M,) = compute_M([zero, zero, zero, V], lam, ReconConfig(omega=2.0, mu0=1.0))
        expected = np.zeros((3, 3), complex)
        expected[1, 2], expected[2, 1] = 1j, -1j
        np.testing.assert_allclose(M.values[2, 2, 2], expected)
        assert M.symmetry == "antisymmetric"

    @given(st.integers(0, 2**32 - 1))
    def test_antisymmetric_random(self, seed):
        r = np.random.default_rng(seed)
        g = create_grid((5, 5, 5), (1,) * 3)
        H = [VectorField(g, r.standard_normal(g.dims + (3,)) + 1j * r.standard_normal(g.dims + (3,))) for _ in range(5)]
        lam = [r.standard_normal(g.dims + (3,)) for _ in range(2)]
        for M in compute_M(H, lam, ReconConfig(omega=r.uniform(0.1, 3))):
            assert not (M.values + np.swapaxes(M.values, -1, -2)).any()


class TestSystem:
    def test_rows_match_identity(self, rng):
        # the per-voxel identity holds for a random gamma when M is built from it
        P = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        P = P + P.T
        Y = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        Z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        gens = system_generators(Y[None], [Z[None]])[0]
        A = system_matrix(gens[None])[0]
        x = np.array([P[0, 0], P[1, 1], P[2, 2], P[0, 1], P[0, 2], P[1, 2]])
        np.testing.assert_allclose(np.einsum("a,aij->ij", x, SYM_BASIS), P)
        lhs = np.array([np.trace(P @ W) for W in gens])
        np.testing.assert_allclose(A @ x, lhs, atol=1e-12)
        M = hodge_star_vector(rng.standard_normal(3))
        assert system_rhs([M[None]]).shape == (1, 3)


class TestDiagnostics:
    def _setup(self, frame, grid, m):
        ad = frame_analytic_derivatives(frame, grid, m)
        return ad.Y, ad.Z

    def test_full_rank(self, grid16, frame_aniso):
        Y, Zs = self._setup(frame_aniso, grid16, 3)
        rep = diagnostics(Y, Zs, full_mask(grid16))
        assert (rep.rank_field == 6).all() and rep.valid_mask.count == grid16.size
        assert np.isfinite(rep.worst_cond_W) and rep.worst_cond_W < 1e4

    def test_condition_grid_independent(self, frame_aniso):
        worst = [diagnostics(*self._setup(frame_aniso, unit_cube_grid(n), 3), full_mask(unit_cube_grid(n))).worst_cond_W for n in (9, 17)]
        assert abs(worst[0] / worst[1] - 1) < 0.2

    def test_m1_rejected(self, grid16, frame_aniso):
        Y, Zs = self._setup(frame_aniso, grid16, 1)
        rep = diagnostics(Y, Zs, full_mask(grid16))
        assert (rep.rank_field <= 3).all() and rep.valid_mask.count == 0

    def test_duplicate_Z(self, grid16, frame_aniso):
        Y, Zs = self._setup(frame_aniso, grid16, 1)
        a = diagnostics(Y, Zs, full_mask(grid16))
        b = diagnostics(Y, [Zs[0], Zs[0]], full_mask(grid16))
        np.testing.assert_array_equal(a.rank_field, b.rank_field)

    def test_report_dict(self, grid16, frame_aniso):
        Y, Zs = self._setup(frame_aniso, grid16, 3)
        d = diagnostics(Y, Zs, full_mask(grid16)).to_dict()
        assert d["valid_voxel_fraction"] == 1.0 and d["rank6_fraction_of_valid"] == 1.0


class TestAssembleAndSolve:
    @pytest.mark.parametrize("gamma0", [np.eye(3, dtype=complex), GAMMA_ANISO])
    @pytest.mark.parametrize("mode", ["least_squares", "cramer6"])
    def test_round_trip(self, grid16, gamma0, mode):
        res = analytic_recon(plane_wave_frame(gamma0), grid16, ReconConfig(solver_mode=mode))
        v = res.report.valid_mask
        assert v.count == grid16.size
        rel = np.abs(res.gamma.values[v.flags] - gamma0) / np.abs(gamma0).max()
        assert rel.max() <= 1e-10

    def test_needs_two_extra(self, grid16, frame_aniso):
        ad = frame_analytic_derivatives(frame_aniso, grid16, 1)
        with pytest.raises(PreconditionError):
            assemble_and_solve(ad.Y, ad.Z, ad.Z, full_mask(grid16))

    def test_modes_agree(self, grid16, frame_aniso):
        ls = analytic_recon(frame_aniso, grid16)
        c6 = analytic_recon(frame_aniso, grid16, ReconConfig(solver_mode="cramer6"))
        good = c6.report.valid_mask.flags & (c6.selected_cond < 1e3)
        assert good.sum() > 0.5 * grid16.size
        assert np.abs(ls.gamma.values - c6.gamma.values)[good].max() <= 1e-8

    def test_singular_inverse_masked(self, grid16):
        # forcing M = 0 gives gamma^-1 = 0, which is not invertible
        frame = plane_wave_frame(np.eye(3))
        ad = frame_analytic_derivatives(frame, grid16)
        zeros = [MatrixField(grid16, np.zeros(grid16.dims + (3, 3)), "antisymmetric")] * 3
        res = assemble_and_solve(ad.Y, ad.Z, zeros, full_mask(grid16))
        assert res.report.valid_mask.count == 0
        assert res.report.rejected["singular_inversion"] == grid16.size
        assert np.isnan(res.gamma.values).all()


class TestErrorNorms:
    def test_zero_and_max(self, grid16):
        A = constant_tensor_field(grid16, GAMMA_ANISO)
        m = interior_mask(grid16, 1)
        assert error_norms(A, A, m, 2) == 0.0
        B = MatrixField(grid16, A.values + 0.5 * np.eye(3), "symmetric")
        assert error_norms(B, A, m, 0) == pytest.approx(0.5)

    def test_linear_perturbation(self):
        g = create_grid((12, 12, 12), (0.2,) * 3, (-0.5, 0, 0))
        eps = 1e-3
        x1 = g.points()[..., 0]
        D = eps * x1[..., None, None] * SYM_BASIS[0]
        A = constant_tensor_field(g, np.eye(3))
        B = MatrixField(g, A.values + D, "symmetric")
        m = interior_mask(g, 1)
        region = m.erode(1).flags
        expect = max(eps * np.abs(x1[region]).max(), eps)
        assert error_norms(B, A, m, 1) == pytest.approx(expect, rel=1e-12)
        assert expect > eps  # the position term dominates here

    def test_s_cap_and_mask(self, grid16):
        A = constant_tensor_field(grid16, np.eye(3))
        with pytest.raises(ValueError):
            error_norms(A, A, full_mask(grid16), 4)
        tiny = Mask(grid16, np.zeros(grid16.dims, bool) | (np.indices(grid16.dims).sum(0) == 24))
        with pytest.raises(MaskError, match="mask-too-small"):
            error_norms(A, A, tiny, 1)


class TestReconstruct:
    def test_five_fields(self, grid16, frame_aniso):
        with pytest.raises(PreconditionError):
            reconstruct(frame_H_list(frame_aniso, grid16, 5))

    def test_fd_order_convergence(self, frame_aniso):
        errs = []
        for n in (16, 32):
            g = unit_cube_grid(n)
            res = reconstruct(frame_H_list(frame_aniso, g), gamma_ref=constant_tensor_field(g, GAMMA_ANISO))
            errs.append(res.errors[0])
        assert abs(errs[0] / errs[1] / 4 - 1) <= 0.2

    def test_symmetric_and_deterministic(self, grid16, frame_aniso):
        H = frame_H_list(frame_aniso, grid16)
        a = reconstruct(H)
        b = reconstruct(H)
        assert a.gamma.values.tobytes() == b.gamma.values.tobytes()
        G = a.gamma.values[a.report.valid_mask.flags]
        np.testing.assert_array_equal(G, np.swapaxes(G, -1, -2))
        assert a.report.valid_mask.count > 0
        # valid mask stays inside the interior
        assert not (a.report.valid_mask.flags & ~interior_mask(grid16, 1).flags).any()

    @given(st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False))
    def test_scaling_invariance(self, c):
        g = unit_cube_grid(10)
        frame = plane_wave_frame(GAMMA_ANISO)
        H = frame_H_list(frame, g)
        base = reconstruct(H)
        scaled = reconstruct([VectorField(g, c * h.values) for h in H])
        f = base.report.valid_mask.flags & scaled.report.valid_mask.flags
        assert f.sum() > 0
        np.testing.assert_allclose(scaled.gamma.values[f], base.gamma.values[f], rtol=1e-8, atol=1e-10)
        for z0, z1 in zip(base.Z, scaled.Z):
            np.testing.assert_allclose(z1.values[f], z0.values[f], rtol=1e-8, atol=1e-10)
        for m0, m1 in zip(base.M, scaled.M):
            np.testing.assert_allclose(m1.values[f], c * m0.values[f], rtol=1e-8, atol=1e-10)

    def test_rejection_counts(self, grid16, frame_aniso):
        res = reconstruct(frame_H_list(frame_aniso, grid16), ReconConfig(fd=FDConfig(4)))
        rej = res.report.rejected
        assert rej["boundary_margin"] == grid16.size - interior_mask(grid16, 2).count
        assert rej["lambda_gradient_margin"] > 0
        assert res.report.valid_mask.count == interior_mask(grid16, 4).count
