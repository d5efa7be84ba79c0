"""End-to-end acceptance checks.

Each check prints a single ``CRITERION <n> PASS|FAIL`` line with its wall
time; the lines are also repeated in the pytest terminal summary.
"""

import copy
import time
from contextlib import contextmanager

import numpy as np
import pytest

from admitrec import cli
from admitrec.diffops import curl_array, divergence_array, gradient_array
from admitrec.fields import MatrixField, VectorField, create_grid, full_mask, interior_mask, unit_cube_grid
from admitrec.recon_aniso import ReconConfig, compute_lambda, compute_Y, constant_tensor_field, diagnostics, reconstruct
from admitrec.recon_iso import IsoReconConfig, cgo_parameters, integrate_admittivity, reconstruct_isotropic
from admitrec.synthetic import fdfd_solve, frame_analytic_derivatives, frame_H_list, plane_wave_frame
from admitrec.tensor_algebra import (
    complex_orthogonal_diagonalize,
    gram_schmidt,
    hodge_star_2form,
    hodge_star_form,
    hodge_star_vector,
)

from conftest import GAMMA_ANISO

RESULTS: list[str] = []

ZETA0 = np.array([0, 1j, 1]) / np.sqrt(2)
ETA0 = np.array([1.0, 0, 0])


@contextmanager
def criterion(number: int, title: str, budget: float):
    t0 = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        dt = time.perf_counter() - t0
        status = "PASS" if ok and dt <= budget else "FAIL"
        line = f"CRITERION {number} {status} {title} ({dt:.1f}s, budget {budget:.0f}s)"
        RESULTS.append(line)
        print(line)
    assert dt <= budget, f"runtime {dt:.1f}s over budget {budget}s"


def analytic_recon(gamma0, grid, mode="least_squares"):
    frame = plane_wave_frame(gamma0)
    ad = frame_analytic_derivatives(frame, grid)
    return reconstruct(
        frame_H_list(frame, grid), ReconConfig(solver_mode=mode), constant_tensor_field(grid, gamma0), analytic=ad
    )


def test_criterion_1_constant_round_trip():
    with criterion(1, "analytic constant-tensor round trip", 5):
        g = unit_cube_grid(16)
        for gamma0 in (np.eye(3, dtype=complex), GAMMA_ANISO):
            res = analytic_recon(gamma0, g)
            v = res.report.valid_mask.flags
            assert v.all()
            rel = np.abs(res.gamma.values[v] - gamma0) / np.abs(gamma0).max()
            assert rel.max() <= 1e-10


def test_criterion_2_fd_order():
    with criterion(2, "numerical-derivative convergence order", 60):
        frame = plane_wave_frame(GAMMA_ANISO)
        errs = []
        for n in (16, 32):
            g = unit_cube_grid(n)
            res = reconstruct(frame_H_list(frame, g), gamma_ref=constant_tensor_field(g, GAMMA_ANISO))
            errs.append(res.errors[0])
        ratio = errs[0] / errs[1]
        assert abs(ratio / 2**2 - 1) <= 0.2, ratio


def test_criterion_3_full_rank():
    with criterion(3, "frame and full-rank hypotheses", 10):
        frame = plane_wave_frame(GAMMA_ANISO)
        g = unit_cube_grid(16)
        H = frame_H_list(frame, g)
        cfg = ReconConfig()
        Y, detY, mY = compute_Y(*H[:3], cfg=cfg)
        _, Zs, mask = compute_lambda(H, Y, mY, cfg)
        assert np.array_equal(mask.flags, interior_mask(g, 2 * cfg.fd.margin).flags)
        rep = diagnostics(Y, Zs, mask, cfg, detY)
        assert (rep.rank_field[mask.flags] == 6).all() and np.array_equal(rep.valid_mask.flags, mask.flags)
        assert rep.min_abs_detY > 0
        _, Z1, m1 = compute_lambda(H[:4], Y, mY, cfg)
        rep1 = diagnostics(Y, Z1, m1, cfg, detY)
        assert rep1.valid_mask.count == 0 and not (rep1.rank_field == 6).any()


def test_criterion_4_stability_scaling():
    with criterion(4, "two-derivative stability scaling", 180):
        cfg = copy.deepcopy(cli.DEFAULTS)
        deltas = [1e-4, 1e-3, 1e-2]
        cfg["sweep"].update(
            deltas=deltas, grids=[16, 32], smoothing_radius=3, repeats=8, error_reference="noise_free"
        )
        rows = cli.run_sweep(cfg)
        err = {(r["delta"], round(r["h"], 8)): r["w_s_inf_error"] for r in rows}
        h16, h32 = round(1 / 15, 8), round(1 / 31, 8)
        slope = np.polyfit(np.log(deltas), np.log([err[d, h16] for d in deltas]), 1)[0]
        assert abs(slope - 1) <= 0.15, slope
        ratio = err[1e-3, h32] / err[1e-3, h16]
        expected = (31 / 15) ** 2
        assert abs(ratio / expected - 1) <= 0.3, ratio


def test_criterion_5_cgo_invariants():
    with criterion(5, "CGO parameter invariants", 1):
        r = np.random.default_rng(5)
        drawn = 0
        while drawn < 100:
            a, c, k = r.uniform(-5, 5), r.uniform(0.5, 50), r.uniform(0, 5)
            if c * c + a * a / 4 - k * k <= 1e-3:
                continue
            drawn += 1
            p = cgo_parameters(a, c, k, int(r.integers(1, 4)))
            for z, e in ((p.zeta1, p.eta1), (p.zeta2, p.eta2)):
                assert abs(z @ z - k * k) <= 1e-10 * max(1.0, c * c)
                assert abs(z @ e) <= 1e-10 * max(1.0, c)
        cs = np.array([1e1, 1e2, 1e3, 1e4])
        for a, k in ((1.0, 1.0), (-2.5, 0.3), (0.7, 3.0)):
            dz, de = [], []
            for c in cs:
                p = cgo_parameters(a, c, k)
                dz.append(np.linalg.norm(p.zeta1 / np.linalg.norm(p.zeta1) - ZETA0))
                de.append(np.linalg.norm(p.eta1 - ETA0))
            for d in (dz, de):
                assert abs(np.polyfit(np.log(cs), np.log(d), 1)[0] + 1) <= 0.2


def _manufactured(p):
    x, y = p[..., 0], p[..., 1]
    gam = 2 + 0.5 * np.sin(2 * np.pi * x) + 1j * (1 + 0.3 * np.cos(2 * np.pi * y))
    grad = np.stack([np.pi * np.cos(2 * np.pi * x), -0.6j * np.pi * np.sin(2 * np.pi * y), 0 * x], -1)
    return gam, grad


def test_criterion_6_isotropic_pipeline():
    with criterion(6, "isotropic transport pipeline", 180):
        errs = []
        for n in (16, 32):
            g = unit_cube_grid(n)
            gam, grad = _manufactured(g.points())
            beta = VectorField(g, -grad / gam[..., None])
            cfg = IsoReconConfig(anchor_index=(0, 0, 0), anchor_value=gam[0, 0, 0])
            errs.append(np.abs(integrate_admittivity(beta, full_mask(g), cfg).gamma.values - gam).max())
        assert abs(errs[0] / errs[1] / (31 / 15) ** 2 - 1) <= 0.3, errs

        g = unit_cube_grid(16)
        gam0 = 1.5 + 0.8j
        G = MatrixField(g, np.broadcast_to(gam0 * np.eye(3), g.dims + (3, 3)), "symmetric")
        params = [cgo_parameters(0.5, 2.0, 0.0, j, k2=-1j * gam0) for j in (1, 2, 3)]
        pairs, dmask = [], None
        for p in params:
            rs = [fdfd_solve(G, 1.0, 1.0, lambda pts, p=p, w=w: p.E(pts, w)) for w in (1, 2)]
            assert max(r.residual for r in rs) <= 1e-8
            pairs.append(tuple(r.H for r in rs))
            dmask = rs[0].data_mask
        res = reconstruct_isotropic(pairs, params, IsoReconConfig(anchor_value=gam0), data_mask=dmask)
        f = res.mask.flags
        h = g.spacing[0]
        assert res.mask.count > 0
        assert max(np.abs(v.values[f]).max() for v in res.varthetas) <= h * h
        assert np.abs(res.gamma.values[f] - gam0).max() / abs(gam0) <= 0.01


def test_criterion_7_exact_identities():
    with criterion(7, "exact discrete identities", 1):
        r = np.random.default_rng(7)
        for _ in range(20):
            u = r.standard_normal(3) + 1j * r.standard_normal(3)
            assert np.array_equal(hodge_star_2form(hodge_star_vector(u)), u)
            A = hodge_star_vector(r.standard_normal(3))
            assert np.array_equal(hodge_star_vector(hodge_star_2form(A)), A)
        assert hodge_star_form(hodge_star_form({(2,): 1.0})) == {(2,): 1.0}
        assert hodge_star_form(hodge_star_form({(0, 2): 1.0})) == {(0, 2): 1.0}

        g = create_grid((10, 11, 12), (0.07, 0.11, 0.09))
        f = r.standard_normal(g.dims) + 1j * r.standard_normal(g.dims)
        W = r.standard_normal(g.dims + (3,)) + 1j * r.standard_normal(g.dims + (3,))
        inner = interior_mask(g, 2).flags
        for order in (2, 4):
            gf = gradient_array(f, g, order)
            cg = curl_array(gf, g, order)
            assert np.abs(cg[inner & interior_mask(g, order).flags]).max() <= 1e-12 * np.abs(gf).max() / min(g.spacing)
            cw = curl_array(W, g, order)
            dc = divergence_array(cw, g, order)
            assert np.abs(dc[interior_mask(g, order).flags]).max() <= 1e-12 * np.abs(cw).max() / min(g.spacing)

        gens = [x + x.T for x in r.standard_normal((6, 3, 3)) + 1j * r.standard_normal((6, 3, 3))]
        gs = gram_schmidt(gens)
        B = np.array([b.ravel() for b in gs.ortho])
        assert gs.rank == 6
        assert np.abs(B.conj() @ B.T - np.eye(6)).max() <= 1e-12

        for _ in range(20):
            Ar, Ai = r.standard_normal((3, 3)), r.standard_normal((3, 3))
            S = np.diag([1.0, 2.0, 3.0]) + 0.1 * (Ar + Ar.T) + 1j * (1.5 * np.eye(3) + 0.1 * (Ai + Ai.T))
            d = complex_orthogonal_diagonalize(S)
            assert np.abs(d.Q @ np.diag(d.eigvals) @ d.Q.T - S).max() <= 1e-10
            assert np.abs(d.Q.T @ d.Q - np.eye(3)).max() <= 1e-10


def test_criterion_8_solver_cross_check():
    with criterion(8, "least_squares vs cramer6", 10):
        g = unit_cube_grid(16)
        for gamma0 in (np.eye(3, dtype=complex), GAMMA_ANISO):
            ls = analytic_recon(gamma0, g)
            c6 = analytic_recon(gamma0, g, "cramer6")
            good = c6.report.valid_mask.flags & ls.report.valid_mask.flags & (c6.selected_cond < 1e3)
            assert good.sum() > 0.5 * g.size
            assert np.abs(ls.gamma.values - c6.gamma.values)[good].max() <= 1e-8


@pytest.fixture(scope="module", autouse=True)
def _summary(request):
    yield
    request.config._admitrec_acceptance = list(RESULTS)
