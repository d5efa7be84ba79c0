"""Noise amplification of the reconstruction.

Perturbs the fields with smoothed Gaussian noise of relative size delta
and measures the error against the noise-free reconstruction.  The error
should grow linearly in delta and like 1/h^2 under refinement, since two
derivatives of the data enter the formula.
"""
import copy

import numpy as np

from admitrec import cli


def main():
    cfg = copy.deepcopy(cli.DEFAULTS)
    deltas = [1e-4, 1e-3, 1e-2]
    cfg["sweep"].update(deltas=deltas, grids=[16, 32], smoothing_radius=3, repeats=4, error_reference="noise_free")
    rows = cli.run_sweep(cfg)
    print(f"{'delta':>8} {'h':>8} {'error':>10} {'valid':>6}")
    for r in rows:
        print(f"{r['delta']:8.0e} {r['h']:8.4f} {r['w_s_inf_error']:10.3e} {r['valid_voxel_fraction']:6.2f}")
    for h in sorted({r["h"] for r in rows}, reverse=True):
        e = [r["w_s_inf_error"] for r in rows if r["h"] == h]
        print(f"h = {h:.4f}: log-log slope in delta = {np.polyfit(np.log(deltas), np.log(e), 1)[0]:.3f}")
    e = {(r["delta"], r["h"]): r["w_s_inf_error"] for r in rows}
    hs = sorted({r["h"] for r in rows}, reverse=True)
    ratio = e[1e-3, hs[1]] / e[1e-3, hs[0]]
    print(f"refinement ratio at delta=1e-3: {ratio:.2f} vs (h1/h2)^2 = {(hs[0] / hs[1]) ** 2:.2f}")


if __name__ == "__main__":
    main()
