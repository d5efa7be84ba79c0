"""Voxel grids, complex field containers and validity masks.

All fields store voxel data first and components last, e.g. a vector field
has ``values.shape == (n1, n2, n3, 3)`` and a matrix field
``(n1, n2, n3, 3, 3)``.  Containers are immutable: the arrays are copied on
construction and flagged read-only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import GridError, MaskError

MIN_DIM = 5
DEFAULT_VOXEL_BUDGET = 2**24
SYMMETRY_TAGS = ("general", "symmetric", "antisymmetric")


@dataclass(frozen=True)
class Grid3:
    """Uniform rectilinear voxel grid; voxel ``(i, j, k)`` sits at ``origin + (i, j, k) * spacing``."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for n, h, o in zip(self.dims, self.spacing, self.origin)]

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> np.ndarray:
        """Voxel positions, shape ``(n1, n2, n3, 3)``."""
        return np.stack(self.coords(), axis=-1)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing), "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid3":
        return create_grid(d["dims"], d["spacing"], d.get("origin", (0.0, 0.0, 0.0)))


def create_grid(
    dims: Sequence[int],
    spacing: Sequence[float],
    origin: Sequence[float] = (0.0, 0.0, 0.0),
    voxel_budget: int = DEFAULT_VOXEL_BUDGET,
) -> Grid3:
    """Validate and build a :class:`Grid3`.

    Raises
    ------
    GridError
        If any axis has fewer than 5 voxels, a spacing is not positive, or the
        voxel count exceeds ``voxel_budget``.
    """
    dims = tuple(int(n) for n in dims)
    spacing = tuple(float(h) for h in spacing)
    origin = tuple(float(o) for o in origin)
    if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
        raise GridError("dims, spacing and origin must each have 3 entries")
    if min(dims) < MIN_DIM:
        raise GridError(f"dimension-too-small: dims={dims}, need >= {MIN_DIM} per axis")
    if min(spacing) <= 0 or not all(np.isfinite(spacing)):
        raise GridError(f"spacing must be positive, got {spacing}")
    if int(np.prod(dims)) > voxel_budget:
        raise GridError(f"voxel-budget exceeded: {int(np.prod(dims))} > {voxel_budget}")
    return Grid3(dims, spacing, origin)


def unit_cube_grid(n: int) -> Grid3:
    """``n`` voxels per axis spanning ``[0, 1]^3``."""
    h = 1.0 / (n - 1)
    return create_grid((n, n, n), (h, h, h))


def _frozen(values, shape, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.shape != shape:
        raise GridError(f"value array has shape {arr.shape}, expected {shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid3
    values: np.ndarray

    kind = "scalar"

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.dims, np.complex128))


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid3
    values: np.ndarray

    kind = "vector"

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.dims + (3,), np.complex128))


@dataclass(frozen=True, eq=False)
class MatrixField:
    grid: Grid3
    values: np.ndarray
    symmetry: str = "general"

    kind = "matrix"

    def __post_init__(self):
        if self.symmetry not in SYMMETRY_TAGS:
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        arr = _frozen(self.values, self.grid.dims + (3, 3), np.complex128)
        if self.symmetry != "general":
            sign = 1.0 if self.symmetry == "symmetric" else -1.0
            defect = np.abs(arr - sign * np.swapaxes(arr, -1, -2)).max(axis=(-1, -2))
            scale = np.abs(arr).max(axis=(-1, -2))
            if np.any(defect > 1e-12 * scale):
                raise ValueError(f"matrix field is not {self.symmetry} within 1e-12")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True, eq=False)
class Mask:
    grid: Grid3
    flags: np.ndarray
    provenance: str = ""

    kind = "mask"

    def __post_init__(self):
        object.__setattr__(self, "flags", _frozen(self.flags, self.grid.dims, bool))

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    @property
    def fraction(self) -> float:
        return self.count / self.grid.size

    def __and__(self, other: "Mask") -> "Mask":
        check_same_grid(self, other)
        reasons = [p for p in (self.provenance, other.provenance) if p]
        return Mask(self.grid, self.flags & other.flags, "; ".join(dict.fromkeys(reasons)))

    def restrict(self, flags: np.ndarray, reason: str) -> "Mask":
        """Intersect with raw boolean flags, appending ``reason`` to the provenance."""
        prov = f"{self.provenance}; {reason}" if self.provenance else reason
        return Mask(self.grid, self.flags & flags, prov)

    def erode(self, margin: int, reason: str = "") -> "Mask":
        """Drop voxels within ``margin`` axis steps of an excluded voxel or the boundary."""
        out = erode_flags(self.flags, margin)
        return self.restrict(out, reason or f"stencil margin {margin}")


def erode_flags(flags: np.ndarray, margin: int) -> np.ndarray:
    if margin <= 0:
        return flags.copy()
    # Axis-aligned stencils only reach along a cross, so erode with a cross.
    struct = np.zeros((2 * margin + 1,) * 3, dtype=bool)
    struct[:, margin, margin] = True
    struct[margin, :, margin] = True
    struct[margin, margin, :] = True
    return ndimage.binary_erosion(flags, structure=struct, border_value=0)


def interior_mask(grid: Grid3, margin: int) -> Mask:
    """Voxels at index distance ``>= margin`` from every face.

    Raises
    ------
    MaskError
        If the margin leaves no voxel.
    """
    if margin < 0:
        raise MaskError("margin must be non-negative")
    if any(n - 2 * margin <= 0 for n in grid.dims):
        raise MaskError(f"empty-interior: margin {margin} consumes grid {grid.dims}")
    flags = np.zeros(grid.dims, dtype=bool)
    flags[margin:-margin or None, margin:-margin or None, margin:-margin or None] = True
    return Mask(grid, flags, f"interior margin {margin}")


def full_mask(grid: Grid3) -> Mask:
    return Mask(grid, np.ones(grid.dims, dtype=bool), "")


def check_same_grid(*items) -> Grid3:
    grids = [it.grid for it in items]
    for g in grids[1:]:
        if g != grids[0]:
            raise GridError("grid mismatch between fields")
    return grids[0]
