"""Single-file binary container for grids, fields and masks.

Layout::

    16 bytes   magic b"ADMITREC-CONT-01"
    8 bytes    uint64 little-endian header length N
    N bytes    UTF-8 JSON header
    ...        raw blobs, offsets relative to the first blob byte

Complex data is written as little-endian float64 ``(re, im)`` pairs in
component-major order with the last grid axis varying fastest.  Masks are
one ``uint8`` per voxel.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContainerError
from .fields import Grid3, Mask, MatrixField, ScalarField, VectorField, check_same_grid

MAGIC = b"ADMITREC-CONT-01"
FORMAT_VERSION = 1


@dataclass
class Container:
    grid: Grid3
    fields: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.fields[name]


def _encode(item) -> tuple[dict, bytes]:
    if isinstance(item, Mask):
        blob = np.ascontiguousarray(item.flags, dtype=np.uint8).tobytes()
        return {"kind": "mask", "provenance": item.provenance}, blob
    v = item.values
    if isinstance(item, ScalarField):
        arr, entry = v, {"kind": "scalar"}
    elif isinstance(item, VectorField):
        arr, entry = np.moveaxis(v, -1, 0), {"kind": "vector"}
    elif isinstance(item, MatrixField):
        arr = np.moveaxis(v, (-2, -1), (0, 1))
        entry = {"kind": "matrix", "symmetry": item.symmetry}
    else:
        raise TypeError(f"cannot store {type(item).__name__} in a container")
    blob = np.ascontiguousarray(arr, dtype="<c16").tobytes()
    return entry, blob


def _decode(entry: dict, blob: bytes, grid: Grid3):
    kind = entry["kind"]
    dims = grid.dims
    if kind == "mask":
        flags = np.frombuffer(blob, dtype=np.uint8).reshape(dims).astype(bool)
        return Mask(grid, flags, entry.get("provenance", ""))
    data = np.frombuffer(blob, dtype="<c16")
    if kind == "scalar":
        return ScalarField(grid, data.reshape(dims))
    if kind == "vector":
        return VectorField(grid, np.moveaxis(data.reshape((3,) + dims), 0, -1))
    if kind == "matrix":
        vals = np.moveaxis(data.reshape((3, 3) + dims), (0, 1), (-2, -1))
        return MatrixField(grid, vals, entry.get("symmetry", "general"))
    raise ContainerError(f"unknown field kind {kind!r}")


def _expected_nbytes(kind: str, grid: Grid3) -> int:
    per_voxel = {"mask": 1, "scalar": 16, "vector": 48, "matrix": 144}[kind]
    return per_voxel * grid.size


def write_container(path, fields: dict, metadata: dict | None = None, grid: Grid3 | None = None) -> None:
    """Write named fields and masks sharing one grid to ``path`` atomically."""
    items = list(fields.values())
    if items:
        grid = check_same_grid(*items)
    if grid is None:
        raise ContainerError("a grid is required when no fields are given")
    entries, blobs, offset = [], [], 0
    for name, item in fields.items():
        entry, blob = _encode(item)
        entry.update(name=name, offset=offset, nbytes=len(blob), sha256=hashlib.sha256(blob).hexdigest())
        entries.append(entry)
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "grid": grid.to_dict(),
        "fields": entries,
        "metadata": metadata or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(hbytes)))
            fh.write(hbytes)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path, verify: bool = True) -> Container:
    """Read a container written by :func:`write_container`.

    Raises
    ------
    ContainerError
        On bad magic, unknown format version, or blob/header length mismatch.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 24 or raw[:16] != MAGIC:
        raise ContainerError("not an admitrec container (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[16:24])
    if 24 + hlen > len(raw):
        raise ContainerError("length mismatch: header extends past end of file")
    try:
        header = json.loads(raw[24 : 24 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"unknown format version {header.get('format_version')!r}")
    grid = Grid3.from_dict(header["grid"])
    body = raw[24 + hlen :]
    total = sum(e["nbytes"] for e in header["fields"])
    if total != len(body):
        raise ContainerError(f"length mismatch: header declares {total} blob bytes, file has {len(body)}")
    out = {}
    for entry in header["fields"]:
        if entry["nbytes"] != _expected_nbytes(entry["kind"], grid):
            raise ContainerError(f"length mismatch for field {entry['name']!r}")
        blob = body[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if verify and hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise ContainerError(f"checksum mismatch for field {entry['name']!r}")
        out[entry["name"]] = _decode(entry, blob, grid)
    return Container(grid, out, header.get("metadata", {}))


def field_checksums(path) -> dict[str, str]:
    """Per-field SHA-256 digests recorded in a container header."""
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack("<Q", raw[16:24])
    header = json.loads(raw[24 : 24 + hlen].decode("utf-8"))
    return {e["name"]: e["sha256"] for e in header["fields"]}
