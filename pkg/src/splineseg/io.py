"""File formats: ISPL1 coefficient grids, SDF1 field dumps, PGM masks, volume manifests.

ISPL1 layout::

    ISPL1\\n
    O=<int> p=<int>\\n
    O*O little-endian float64 values, row-major (first index = image row)

SDF1 layout::

    SDF1 I=<int>\\n
    I*I little-endian float64 values, row-major
"""
from __future__ import annotations

import io
import json
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .spline import CoefficientGrid, SplineSpace

__all__ = [
    "FormatError",
    "atomic_write",
    "write_ispl",
    "read_ispl",
    "write_sdf",
    "read_sdf",
    "read_mask",
    "write_mask",
    "VolumeManifest",
    "read_manifest",
]

ISPL_MAGIC = b"ISPL1"
_ISPL_HEADER = re.compile(rb"O=(\d+) p=(\d+)")
_SDF_HEADER = re.compile(rb"SDF1 I=(\d+)")
_LE_F64 = np.dtype("<f8")


class FormatError(ValueError):
    """Malformed or unreadable input file."""


def atomic_write(path, data: bytes) -> None:
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def ispl_bytes(grid: CoefficientGrid) -> bytes:
    O, p = grid.space.basis_count, grid.space.degree
    header = ISPL_MAGIC + b"\n" + f"O={O} p={p}\n".encode("ascii")
    return header + np.ascontiguousarray(grid.values, dtype=_LE_F64).tobytes()


def write_ispl(path, grid: CoefficientGrid) -> None:
    atomic_write(path, ispl_bytes(grid))


def parse_ispl(data: bytes) -> CoefficientGrid:
    if not data.startswith(ISPL_MAGIC + b"\n"):
        raise FormatError("bad magic: not an ISPL1 coefficient file")
    rest = data[len(ISPL_MAGIC) + 1:]
    line, sep, payload = rest.partition(b"\n")
    m = _ISPL_HEADER.fullmatch(line)
    if not sep or not m:
        raise FormatError("malformed ISPL1 header; expected 'O=<int> p=<int>'")
    O, p = int(m.group(1)), int(m.group(2))
    if len(payload) != 8 * O * O:
        raise FormatError(f"ISPL1 payload has {len(payload)} bytes, expected {8 * O * O}")
    try:
        space = SplineSpace(p, O)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    values = np.frombuffer(payload, dtype=_LE_F64).reshape(O, O).astype(np.float64)
    try:
        return CoefficientGrid(values, space)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def read_ispl(path) -> CoefficientGrid:
    return parse_ispl(Path(path).read_bytes())


def sdf_bytes(field) -> bytes:
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2 or field.shape[0] != field.shape[1]:
        raise ValueError(f"SDF1 stores square fields, got shape {field.shape}")
    header = f"SDF1 I={field.shape[0]}\n".encode("ascii")
    return header + np.ascontiguousarray(field, dtype=_LE_F64).tobytes()


def write_sdf(path, field) -> None:
    atomic_write(path, sdf_bytes(field))


def read_sdf(path) -> np.ndarray:
    data = Path(path).read_bytes()
    line, sep, payload = data.partition(b"\n")
    m = _SDF_HEADER.fullmatch(line)
    if not sep or not m:
        raise FormatError("bad magic: not an SDF1 dump")
    I = int(m.group(1))
    if len(payload) != 8 * I * I:
        raise FormatError(f"SDF1 payload has {len(payload)} bytes, expected {8 * I * I}")
    return np.frombuffer(payload, dtype=_LE_F64).reshape(I, I).astype(np.float64)


def read_mask(path, raw=None) -> np.ndarray:
    """Read a mask as a boolean array; nonzero pixels are inside.

    ``raw=(width, height)`` reads headerless unsigned 8-bit data instead of PGM.
    """
    path = Path(path)
    try:
        if raw is not None:
            w, h = raw
            data = np.fromfile(path, dtype=np.uint8)
            if data.size != w * h:
                raise FormatError(f"{path}: raw data has {data.size} bytes, expected {w * h}")
            return data.reshape(h, w) != 0
        with Image.open(path) as img:
            if img.format != "PPM" or img.mode not in ("1", "L", "I", "I;16", "I;16B"):
                raise FormatError(f"{path}: not a greyscale PGM image")
            return np.asarray(img) != 0
    except FormatError:
        raise
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def mask_bytes(mask) -> bytes:
    img = Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PPM")
    return buf.getvalue()


def write_mask(path, mask) -> None:
    """Binary PGM (P5), inside = 255."""
    atomic_write(path, mask_bytes(mask))


@dataclass(frozen=True)
class VolumeManifest:
    """Slices of one volume stored as 2D mask files.

    JSON on disk: ``{"slices": [...], "I": 512, "spacing": [sx, sy, sz]}``;
    relative slice paths are resolved against the manifest's directory.
    """

    slices: tuple
    I: int
    spacing: tuple = (1.0, 1.0, 1.0)
    name: str = "volume"


def read_manifest(path, check_files: bool = True) -> VolumeManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        slices = doc["slices"]
        I = int(doc["I"])
        spacing = tuple(float(v) for v in doc.get("spacing", (1.0, 1.0, 1.0)))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: invalid manifest ({exc})") from exc
    if not slices:
        raise FormatError(f"{path}: manifest lists no slices")
    if len(spacing) != 3 or min(spacing) <= 0:
        raise FormatError(f"{path}: spacing must be three positive numbers")
    resolved = tuple(str((path.parent / s) if not os.path.isabs(s) else Path(s)) for s in slices)
    if check_files:
        missing = [s for s in resolved if not os.path.exists(s)]
        if missing:
            raise FormatError(f"{path}: missing slice files: {', '.join(missing)}")
    return VolumeManifest(resolved, I, spacing, path.stem)
