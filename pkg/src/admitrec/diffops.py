"""Collocated central-difference gradient, curl and divergence.

Derivatives are only formed where the full stencil fits; the boundary ring
of width ``cfg.margin`` is zero-filled and excluded from the returned mask.
When an input mask is given the output mask is that mask eroded by the
stencil reach, so composing operators shrinks the valid region accordingly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError
from .fields import Grid3, Mask, ScalarField, VectorField, interior_mask

_STENCILS = {
    2: (np.array([-1.0, 1.0]) / 2.0, (-1, 1)),
    4: (np.array([1.0, -8.0, 8.0, -1.0]) / 12.0, (-2, -1, 1, 2)),
}


@dataclass(frozen=True)
class FDConfig:
    order: int = 2

    def __post_init__(self):
        if self.order not in _STENCILS:
            raise ValueError(f"FD order must be 2 or 4, got {self.order}")

    @property
    def margin(self) -> int:
        return self.order // 2


def d_axis(values: np.ndarray, axis: int, h: float, order: int = 2) -> np.ndarray:
    """Central difference of ``values`` along grid ``axis`` (0, 1 or 2).

    Trailing axes beyond the first three are carried along untouched.
    """
    weights, offsets = _STENCILS[order]
    m = order // 2
    n = values.shape[axis]
    if n <= 2 * m:
        raise GridError(f"grid-too-small: {n} voxels along axis {axis} for order {order}")
    out = np.zeros_like(values, dtype=np.result_type(values, np.float64))
    dst = [slice(None)] * values.ndim
    dst[axis] = slice(m, n - m)
    acc = 0
    for w, off in zip(weights, offsets):
        src = [slice(None)] * values.ndim
        src[axis] = slice(m + off, n - m + off)
        acc = acc + w * values[tuple(src)]
    out[tuple(dst)] = acc / h
    return out


def jacobian_array(values: np.ndarray, grid: Grid3, order: int = 2) -> np.ndarray:
    """``J[..., p, q] = d_p values[..., q]`` for a vector array ``(n1, n2, n3, 3)``."""
    return np.stack([d_axis(values, p, grid.spacing[p], order) for p in range(3)], axis=-2)


def curl_array(values: np.ndarray, grid: Grid3, order: int = 2) -> np.ndarray:
    d = lambda comp, ax: d_axis(values[..., comp], ax, grid.spacing[ax], order)  # noqa: E731
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)], axis=-1)


def divergence_array(values: np.ndarray, grid: Grid3, order: int = 2) -> np.ndarray:
    return sum(d_axis(values[..., p], p, grid.spacing[p], order) for p in range(3))


def gradient_array(values: np.ndarray, grid: Grid3, order: int = 2) -> np.ndarray:
    """Gradient of a scalar array; extra trailing axes are allowed and the
    derivative index is appended last."""
    return np.stack([d_axis(values, p, grid.spacing[p], order) for p in range(3)], axis=-1)


def output_mask(grid: Grid3, cfg: FDConfig, mask: Mask | None = None) -> Mask:
    base = interior_mask(grid, cfg.margin)
    if mask is None:
        return base
    return (mask & base).erode(cfg.margin, f"FD order {cfg.order} stencil")


def gradient(f: ScalarField, cfg: FDConfig = FDConfig(), mask: Mask | None = None):
    """Gradient of a scalar field; returns ``(VectorField, Mask)``."""
    vals = gradient_array(f.values, f.grid, cfg.order)
    return VectorField(f.grid, vals), output_mask(f.grid, cfg, mask)


def curl(V: VectorField, cfg: FDConfig = FDConfig(), mask: Mask | None = None):
    """Curl of a vector field; returns ``(VectorField, Mask)``."""
    return VectorField(V.grid, curl_array(V.values, V.grid, cfg.order)), output_mask(V.grid, cfg, mask)


def divergence(V: VectorField, cfg: FDConfig = FDConfig(), mask: Mask | None = None):
    """Divergence of a vector field; returns ``(ScalarField, Mask)``."""
    vals = divergence_array(V.values, V.grid, cfg.order)
    return ScalarField(V.grid, vals), output_mask(V.grid, cfg, mask)
