"""Embedding matrices on disk.

Binary layout (little-endian)::

    offset  size  field
    0       4     magic  b"VEMB"
    4       4     version (u32, = 1)
    8       8     n (u64)
    16      4     d (u32)
    20      1     dtype code (1 = float32)
    21      1     modality (0 vision, 1 language)
    22      1     normalized (0/1)
    23      9     reserved, zero
    32      n*d*4 row-major float32 payload

Sample ids live in a sidecar ``<path>.ids`` holding one unsigned 64-bit
decimal integer per line. Small matrices may also be read from CSV.
"""

from __future__ import annotations

import enum
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    BadMagic,
    DimensionOverflow,
    IdMismatch,
    InvalidShape,
    IoFailure,
    LengthMismatch,
    TruncatedPayload,
    ValidationError,
    VersionMismatch,
    ZeroNormRow,
)

MAGIC = b"VEMB"
VERSION = 1
HEADER = struct.Struct("<4sIQIBBB9x")
DTYPE_F32 = 1
CSV_MAX_ENTRIES = 10**7
DEFAULT_MAX_BYTES = 16 * 2**30
NORM_TOL = 1e-3
ZERO_NORM = 1e-12
# rows already unit-norm to float32 storage precision are left untouched
_UNIT_SLACK = 4 * float(np.finfo(np.float32).eps)

assert HEADER.size == 32


class Modality(str, enum.Enum):
    VISION = "vision"
    LANGUAGE = "language"

    @property
    def code(self) -> int:
        return 0 if self is Modality.VISION else 1

    @classmethod
    def from_code(cls, code: int) -> "Modality":
        if code not in (0, 1):
            raise ValidationError(f"unknown modality code {code}")
        return cls.VISION if code == 0 else cls.LANGUAGE


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """An ``n x d`` float32 matrix of per-sample embeddings for one modality.

    The array is made read-only on construction so instances can be shared
    between threads.
    """

    data: np.ndarray
    ids: np.ndarray | None = None
    modality: Modality = Modality.VISION
    normalized: bool = False

    def __post_init__(self):
        data = self.data
        if not isinstance(data, np.ndarray) or data.dtype != np.float32:
            data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise InvalidShape(f"expected a 2-d array, got ndim={data.ndim}")
        if not data.flags.c_contiguous:
            data = np.ascontiguousarray(data)
        if data.flags.writeable:
            data = data.view()
            data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "modality", Modality(self.modality))
        if self.ids is not None:
            ids = np.asarray(self.ids, dtype=np.uint64)
            if ids.flags.writeable:
                ids = ids.copy()
                ids.flags.writeable = False
            object.__setattr__(self, "ids", ids)
        self.validate()

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def validate(self) -> None:
        n, d = self.data.shape
        if n < 1 or d < 1:
            raise InvalidShape(f"matrix must have n >= 1 and d >= 1, got {n}x{d}")
        if self.ids is not None:
            if self.ids.ndim != 1 or self.ids.shape[0] != n:
                raise LengthMismatch(f"{len(self.ids)} ids for {n} rows")
            if np.unique(self.ids).shape[0] != n:
                raise ValidationError("duplicate sample ids")
        if self.normalized:
            norms = row_norms(self.data)
            bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
            if bad.size:
                raise ValidationError(
                    f"row {bad[0]} has norm {norms[bad[0]]:.6g} but matrix is flagged normalized"
                )

    def with_data(self, data: np.ndarray, normalized: bool | None = None) -> "EmbeddingMatrix":
        return EmbeddingMatrix(
            data,
            ids=self.ids,
            modality=self.modality,
            normalized=self.normalized if normalized is None else normalized,
        )

    def take(self, rows) -> "EmbeddingMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return EmbeddingMatrix(
            self.data[rows],
            ids=None if self.ids is None else self.ids[rows],
            modality=self.modality,
            normalized=self.normalized,
        )

    def equals(self, other: "EmbeddingMatrix") -> bool:
        """Bit-for-bit equality of payload and ids, plus matching flags."""
        if self.data.shape != other.data.shape:
            return False
        if self.modality != other.modality or self.normalized != other.normalized:
            return False
        if self.data.tobytes() != other.data.tobytes():
            return False
        if (self.ids is None) != (other.ids is None):
            return False
        return self.ids is None or np.array_equal(self.ids, other.ids)


@dataclass(frozen=True)
class PairedView:
    """Row ``i`` of ``vision`` and row ``i`` of ``language`` form pair ``i``."""

    vision: EmbeddingMatrix
    language: EmbeddingMatrix
    ids: np.ndarray | None = field(default=None)

    def __len__(self) -> int:
        return self.vision.n

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.vision.data[i], self.language.data[i]

    @property
    def d(self) -> int:
        return self.vision.d


def row_norms(data: np.ndarray, chunk_rows: int = 65536) -> np.ndarray:
    """Euclidean row norms accumulated in float64."""
    out = np.empty(data.shape[0], dtype=np.float64)
    for start in range(0, data.shape[0], chunk_rows):
        block = np.asarray(data[start:start + chunk_rows], dtype=np.float64)
        out[start:start + chunk_rows] = np.sqrt(np.einsum("ij,ij->i", block, block))
    return out


def renormalize_rows(data: np.ndarray, chunk_rows: int = 65536) -> np.ndarray:
    """Return a float32 copy of ``data`` with unit-norm rows.

    Norms are computed in a first pass and applied in a second, both in
    float64. Rows that are unit-norm to float32 precision are copied as-is,
    which makes the operation idempotent.
    """
    norms = row_norms(data, chunk_rows)
    small = np.flatnonzero(norms < ZERO_NORM)
    if small.size:
        raise ZeroNormRow(int(small[0]))
    out = np.empty(data.shape, dtype=np.float32)
    for start in range(0, data.shape[0], chunk_rows):
        stop = start + chunk_rows
        block = np.asarray(data[start:stop], dtype=np.float64)
        nb = norms[start:stop]
        scale = np.where(np.abs(nb - 1.0) <= _UNIT_SLACK, 1.0, 1.0 / nb)
        out[start:stop] = block * scale[:, None]
    return out


def ids_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".ids")


def read_ids(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read ids file {path}: {exc}") from exc
    tokens = text.split()
    try:
        values = [int(tok) for tok in tokens]
    except ValueError as exc:
        raise ValidationError(f"malformed id in {path}: {exc}") from exc
    if any(v < 0 or v >= 2**64 for v in values):
        raise ValidationError(f"id out of u64 range in {path}")
    return np.array(values, dtype=np.uint64)


def _ids_text(ids: np.ndarray) -> str:
    return "".join(f"{int(v)}\n" for v in ids)


def atomic_write(path, payload: bytes | str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    if isinstance(payload, str):
        payload = payload.encode()
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _check_budget(n: int, d: int, max_bytes: int | None) -> None:
    budget = DEFAULT_MAX_BYTES if max_bytes is None else max_bytes
    if n * d * 4 > budget:
        raise DimensionOverflow(f"{n}x{d} float32 payload exceeds memory budget of {budget} bytes")


def read_header(path) -> tuple[int, int, Modality, bool]:
    """Parse and validate the 32-byte header; returns ``(n, d, modality, normalized)``."""
    path = Path(path)
    try:
        size = path.stat().st_size
        with open(path, "rb") as fh:
            raw = fh.read(HEADER.size)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"{path} does not start with {MAGIC!r}")
    if len(raw) < HEADER.size:
        raise TruncatedPayload(f"{path}: header shorter than {HEADER.size} bytes")
    _, version, n, d, dtype, modality, normalized = HEADER.unpack(raw)
    if version != VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {VERSION}")
    if dtype != DTYPE_F32:
        raise ValidationError(f"{path}: unsupported dtype code {dtype}")
    if normalized not in (0, 1):
        raise ValidationError(f"{path}: normalized flag must be 0 or 1")
    expected = n * d * 4
    if size - HEADER.size != expected:
        raise TruncatedPayload(
            f"{path}: header declares {expected} payload bytes, file holds {size - HEADER.size}"
        )
    return int(n), int(d), Modality.from_code(modality), bool(normalized)


def _load_csv(path: Path, modality: Modality) -> tuple[np.ndarray, Modality, bool]:
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise InvalidShape(f"{path}: empty CSV")
    d = len(lines[0].split(","))
    if len(lines) * d > CSV_MAX_ENTRIES:
        raise DimensionOverflow(f"{path}: CSV input limited to {CSV_MAX_ENTRIES} entries")
    rows = []
    for i, ln in enumerate(lines):
        parts = ln.split(",")
        if len(parts) != d:
            raise InvalidShape(f"{path}: line {i + 1} has {len(parts)} fields, expected {d}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValidationError(f"{path}: line {i + 1}: {exc}") from exc
    data = np.array(rows, dtype=np.float64).astype(np.float32)
    return data, modality, False


def load_embeddings(
    path,
    expect_normalized: bool = False,
    *,
    modality: Modality | str | None = None,
    ids_path=None,
    max_bytes: int | None = None,
    mmap: bool = False,
) -> EmbeddingMatrix:
    """Load an embedding matrix from a VEMB binary file or a ``.csv`` file.

    With ``expect_normalized`` set, a matrix whose header says it is not
    normalized gets its rows renormalized (which materializes it even when
    ``mmap`` is requested). ``modality`` overrides the header value and is
    the only source of the tag for CSV input.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        data, mod, normalized = _load_csv(path, Modality(modality or Modality.VISION))
        _check_budget(*data.shape, max_bytes)
    else:
        n, d, mod, normalized = read_header(path)
        _check_budget(n, d, max_bytes)
        try:
            if mmap:
                data = np.memmap(path, dtype="<f4", mode="r", offset=HEADER.size, shape=(n, d))
            else:
                data = np.fromfile(path, dtype="<f4", offset=HEADER.size, count=n * d)
                data = data.reshape(n, d).astype(np.float32, copy=False)
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        if modality is not None:
            mod = Modality(modality)

    ids = None
    sidecar = Path(ids_path) if ids_path is not None else ids_path_for(path)
    if ids_path is not None or sidecar.exists():
        ids = read_ids(sidecar)

    if expect_normalized and not normalized:
        data = renormalize_rows(data)
        normalized = True
    return EmbeddingMatrix(data, ids=ids, modality=mod, normalized=normalized)


def save_embeddings(m: EmbeddingMatrix, path) -> None:
    """Write ``m`` in the VEMB binary format (plus an ids sidecar when present)."""
    m.validate()
    path = Path(path)
    header = HEADER.pack(MAGIC, VERSION, m.n, m.d, DTYPE_F32, m.modality.code, int(m.normalized))
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    sidecar = ids_path_for(path)
    atomic_write(path, header + payload)
    if m.ids is not None:
        atomic_write(sidecar, _ids_text(m.ids))
    elif sidecar.exists():
        try:
            sidecar.unlink()
        except OSError as exc:
            raise IoFailure(f"cannot remove stale {sidecar}: {exc}") from exc


def save_csv(m: EmbeddingMatrix, path) -> None:
    """Write the payload as CSV with shortest round-trip float32 formatting."""
    lines = [",".join(repr(float(v)) for v in row) for row in m.data]
    atomic_write(path, "\n".join(lines) + "\n")


def iter_chunks(path, chunk_rows: int = 65536) -> Iterator[tuple[int, np.ndarray]]:
    """Stream ``(start_row, block)`` pairs from a VEMB file without loading it whole."""
    n, d, _, _ = read_header(path)
    mm = np.memmap(path, dtype="<f4", mode="r", offset=HEADER.size, shape=(n, d))
    for start in range(0, n, chunk_rows):
        yield start, np.asarray(mm[start:start + chunk_rows])


def align_pairs(v: EmbeddingMatrix, l: EmbeddingMatrix) -> PairedView:
    if v.n != l.n:
        raise LengthMismatch(f"vision has {v.n} rows, language has {l.n}")
    if v.ids is not None and l.ids is not None:
        diff = np.flatnonzero(v.ids != l.ids)
        if diff.size:
            raise IdMismatch(int(diff[0]))
        ids = v.ids
    else:
        ids = v.ids if v.ids is not None else l.ids
    return PairedView(v, l, ids)


__all__ = [
    "EmbeddingMatrix",
    "Modality",
    "PairedView",
    "align_pairs",
    "atomic_write",
    "iter_chunks",
    "load_embeddings",
    "read_header",
    "read_ids",
    "renormalize_rows",
    "row_norms",
    "save_csv",
    "save_embeddings",
]
