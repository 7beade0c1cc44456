"""Binary vector containers and precomputed-embedding ingestion.

Shared container layout (little-endian throughout):

    magic (4 bytes) | version u16 | dim u32 | dtype u8 (0 = float32) |
    reserved u8 | payload dim x f32 | meta_len u32 | metadata UTF-8 JSON

"AESE" files carry an aesthetic embedding (payload unit-norm, metadata
{name, K, created_at, source_digest}); "AESC" files carry scorer weights
(payload w, metadata {name, expected_dim, bias}).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .aesthetics import AestheticEmbedding
from .errors import FormatError, InputError, UnknownMagicError

AESE_MAGIC = b"AESE"
AESC_MAGIC = b"AESC"
CONTAINER_VERSION = 1
DTYPE_F32 = 0

UNIT_NORM_LOAD_TOLERANCE = 1e-5


class _Reader:
    def __init__(self, raw: bytes, what: str):
        self.raw = raw
        self.offset = 0
        self.what = what

    def take(self, n: int, label: str) -> bytes:
        if self.offset + n > len(self.raw):
            raise FormatError(
                f"truncated {self.what}: needed {n} bytes for {label} at offset "
                f"{self.offset}, file has {len(self.raw)}")
        piece = self.raw[self.offset:self.offset + n]
        self.offset += n
        return piece

    def done(self) -> None:
        if self.offset != len(self.raw):
            raise FormatError(
                f"{len(self.raw) - self.offset} unexpected trailing bytes in {self.what}")


def write_container(path: str | Path, magic: bytes, payload: np.ndarray,
                    metadata: dict) -> None:
    vec = np.ascontiguousarray(payload, dtype="<f4")
    if vec.ndim != 1:
        raise InputError(f"container payload must be a vector, got shape {vec.shape}")
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += magic
    blob += struct.pack("<H", CONTAINER_VERSION)
    blob += struct.pack("<I", vec.shape[0])
    blob += struct.pack("<BB", DTYPE_F32, 0)
    blob += vec.tobytes()
    blob += struct.pack("<I", len(meta))
    blob += meta
    Path(path).write_bytes(bytes(blob))


def read_container(path: str | Path, magic: bytes) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    reader = _Reader(raw, f"{magic.decode()} file")
    found = reader.take(4, "magic")
    if found != magic:
        if found in (AESE_MAGIC, AESC_MAGIC):
            raise FormatError(f"bad magic {found!r}, expected {magic!r}")
        raise UnknownMagicError(f"unknown magic {found!r}, expected {magic!r}")
    (version,) = struct.unpack("<H", reader.take(2, "version"))
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    (dim,) = struct.unpack("<I", reader.take(4, "dim"))
    dtype_code, _reserved = struct.unpack("<BB", reader.take(2, "dtype"))
    if dtype_code != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype_code}")
    payload = np.frombuffer(reader.take(4 * dim, "payload"), dtype="<f4").copy()
    (meta_len,) = struct.unpack("<I", reader.take(4, "metadata length"))
    meta_raw = reader.take(meta_len, "metadata")
    reader.done()
    try:
        metadata = json.loads(meta_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable metadata JSON: {exc}") from exc
    if not isinstance(metadata, dict):
        raise FormatError("metadata must be a JSON object")
    return payload, metadata


def save_aesthetic(e: AestheticEmbedding, path: str | Path) -> None:
    write_container(path, AESE_MAGIC, e.vector, e.metadata())


def load_aesthetic(path: str | Path, check_norm: bool = True) -> AestheticEmbedding:
    payload, metadata = read_container(path, AESE_MAGIC)
    norm = float(np.linalg.norm(np.asarray(payload, dtype=np.float64)))
    if check_norm and abs(norm - 1.0) > UNIT_NORM_LOAD_TOLERANCE:
        raise FormatError(
            f"aesthetic payload norm {norm:.8f} deviates from 1 by more than "
            f"{UNIT_NORM_LOAD_TOLERANCE:g}")
    for key in ("name", "K", "created_at", "source_digest"):
        if key not in metadata:
            raise FormatError(f"aesthetic metadata is missing {key!r}")
    return AestheticEmbedding(
        vector=payload, dim=payload.shape[0], name=str(metadata["name"]),
        source_count=int(metadata["K"]), created_at=str(metadata["created_at"]),
        source_digest=str(metadata["source_digest"]))


# --- precomputed-embedding ingestion ---------------------------------------

def _parse_csv_rows(path: Path) -> np.ndarray:
    rows = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError as exc:
            raise InputError(f"{path}:{line_no}: unparseable CSV row: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InputError(f"{path}: ragged CSV rows (first row has {width} columns)")
    return np.asarray(rows, dtype=np.float32)


def load_embedding_matrix(path: str | Path, dim: int | None) -> np.ndarray:
    """N x dim matrix from a CSV (one embedding per row) or raw f32 file."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such input file: {path}")
    if path.suffix.lower() == ".csv":
        matrix = _parse_csv_rows(path)
        if dim is not None and matrix.shape[1] != dim:
            raise InputError(
                f"{path}: CSV rows have {matrix.shape[1]} columns, expected dim {dim}")
        return matrix
    if dim is None:
        raise InputError(f"{path}: raw float input requires an explicit dim")
    raw = path.read_bytes()
    if len(raw) == 0 or len(raw) % (4 * dim) != 0:
        raise FormatError(
            f"{path}: raw size {len(raw)} bytes is not a positive multiple of "
            f"dim*4 = {4 * dim}")
    return np.frombuffer(raw, dtype="<f4").reshape(-1, dim).copy()


def load_image_grid(path: str | Path, side: int) -> np.ndarray:
    """side x side grayscale image from a CSV grid or raw f32 file."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such image file: {path}")
    if path.suffix.lower() == ".csv":
        grid = _parse_csv_rows(path)
        if grid.shape != (side, side):
            raise InputError(f"{path}: CSV grid is {grid.shape}, expected ({side}, {side})")
        return grid
    raw = path.read_bytes()
    expected = 4 * side * side
    if len(raw) != expected:
        raise FormatError(
            f"{path}: raw image is {len(raw)} bytes, expected exactly {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(side, side).copy()


def save_vector(path: str | Path, vector: np.ndarray) -> None:
    """Headerless little-endian float32 dump."""
    Path(path).write_bytes(np.ascontiguousarray(vector, dtype="<f4").tobytes())
