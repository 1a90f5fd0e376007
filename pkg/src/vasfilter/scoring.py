"""CLIP scores, second moments and Variance Alignment Scores.

All reductions run over fixed-size row chunks whose boundaries do not depend
on the number of workers, so results are identical for any ``workers``.
"""

from __future__ import annotations

import enum
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .embstore import EmbeddingMatrix, Modality, PairedView, atomic_write
from .errors import (
    DimMismatch,
    IoFailure,
    LengthMismatch,
    NotNormalized,
    TruncatedPayload,
    BadMagic,
    ValidationError,
    VersionMismatch,
)

CHUNK_ROWS = 8192

MOMENT_MAGIC = b"VMOM"
MOMENT_VERSION = 1
MOMENT_HEADER = struct.Struct("<4sII")


class ScoreKind(str, enum.Enum):
    CLIP_SCORE = "clip_score"
    VAS = "vas"
    A_OPT_LEVERAGE = "a_opt_leverage"
    V_OPT_LEVERAGE = "v_opt_leverage"


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """A ``d x d`` (cross-)second-moment matrix, ``(1/n) sum_i a_i b_i^T``."""

    entries: np.ndarray
    count: int = 1
    modality_left: Modality = Modality.VISION
    modality_right: Modality = Modality.VISION
    label: str = ""

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError(f"moment matrix must be square, got shape {entries.shape}")
        if self.count < 1:
            raise ValidationError("moment count must be >= 1")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "modality_left", Modality(self.modality_left))
        object.__setattr__(self, "modality_right", Modality(self.modality_right))

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, d: int, label: str = "identity") -> "MomentMatrix":
        return cls(np.eye(d), count=1, label=label)

    def scaled(self, c: float) -> "MomentMatrix":
        return MomentMatrix(
            self.entries * c, self.count, self.modality_left, self.modality_right, self.label
        )


@dataclass(frozen=True, eq=False)
class ScoreVector:
    scores: np.ndarray
    kind: ScoreKind
    source_n: int = -1

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1:
            raise ValidationError("scores must be 1-d")
        source_n = scores.shape[0] if self.source_n < 0 else self.source_n
        if scores.shape[0] != source_n:
            raise LengthMismatch(f"{scores.shape[0]} scores for source of {source_n} rows")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("scores must be finite")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "kind", ScoreKind(self.kind))
        object.__setattr__(self, "source_n", source_n)

    def __len__(self) -> int:
        return self.source_n


def _rows(x) -> np.ndarray:
    return x.data if isinstance(x, EmbeddingMatrix) else np.asarray(x)


def _chunk_starts(n: int, chunk_rows: int) -> list[int]:
    return list(range(0, n, chunk_rows))


def map_chunks(fn: Callable[[int, int], object], n: int, workers: int = 1,
               chunk_rows: int = CHUNK_ROWS) -> list:
    """Apply ``fn(start, stop)`` to every chunk; results come back in chunk order."""
    spans = [(s, min(s + chunk_rows, n)) for s in _chunk_starts(n, chunk_rows)]
    if workers <= 1 or len(spans) <= 1:
        return [fn(s, e) for s, e in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda span: fn(*span), spans))


def _require_normalized(m: EmbeddingMatrix, name: str) -> None:
    if isinstance(m, EmbeddingMatrix) and not m.normalized:
        raise NotNormalized(f"{name} embeddings are not flagged normalized")


def clip_scores(pairs: PairedView, *, workers: int = 1) -> ScoreVector:
    """Per-pair cosine similarity ``<v_i, l_i>`` of unit-norm embeddings."""
    _require_normalized(pairs.vision, "vision")
    _require_normalized(pairs.language, "language")
    v, l = pairs.vision.data, pairs.language.data
    if v.shape[1] != l.shape[1]:
        raise DimMismatch(f"vision d={v.shape[1]} vs language d={l.shape[1]}")
    out = np.empty(v.shape[0], dtype=np.float64)

    def work(s, e):
        out[s:e] = np.einsum(
            "ij,ij->i", np.asarray(v[s:e], dtype=np.float64), np.asarray(l[s:e], dtype=np.float64)
        )

    map_chunks(work, v.shape[0], workers)
    return ScoreVector(out, ScoreKind.CLIP_SCORE, v.shape[0])


def second_moment(a, b=None, *, label: str = "", workers: int = 1) -> MomentMatrix:
    """Uncentered moment ``(1/n) sum_i a_i b_i^T`` accumulated in float64.

    With ``b`` omitted (or the same object as ``a``) the result is
    symmetrized as ``(M + M^T) / 2``; cross-modal moments are left as they are.
    """
    same = b is None or b is a
    A = _rows(a)
    B = A if same else _rows(b)
    if A.shape[0] != B.shape[0]:
        raise LengthMismatch(f"{A.shape[0]} rows vs {B.shape[0]} rows")
    if A.shape[1] != B.shape[1]:
        raise DimMismatch(f"d={A.shape[1]} vs d={B.shape[1]}")
    n = A.shape[0]
    if n < 1:
        raise ValidationError("cannot form a moment from zero rows")

    def work(s, e):
        blk_a = np.asarray(A[s:e], dtype=np.float64)
        blk_b = blk_a if same else np.asarray(B[s:e], dtype=np.float64)
        return blk_a.T @ blk_b

    total = np.zeros((A.shape[1], A.shape[1]))
    for part in map_chunks(work, n, workers):
        total += part
    total /= n
    if same:
        total = 0.5 * (total + total.T)
    left = a.modality if isinstance(a, EmbeddingMatrix) else Modality.VISION
    right = left if same else (b.modality if isinstance(b, EmbeddingMatrix) else Modality.VISION)
    return MomentMatrix(total, n, left, right, label)


def vas_scores(a, b=None, sigma: MomentMatrix | np.ndarray | None = None, *,
               workers: int = 1) -> ScoreVector:
    """Variance Alignment Score ``a_i^T sigma b_i`` for every row.

    One matrix product per chunk, O(n d^2) overall. ``b=None`` scores a
    single modality against itself.
    """
    if sigma is None:
        raise ValidationError("vas_scores needs a moment matrix")
    S = sigma.entries if isinstance(sigma, MomentMatrix) else np.asarray(sigma, dtype=np.float64)
    A = _rows(a)
    same = b is None or b is a
    B = A if same else _rows(b)
    if A.shape[0] != B.shape[0]:
        raise LengthMismatch(f"{A.shape[0]} rows vs {B.shape[0]} rows")
    if not (A.shape[1] == B.shape[1] == S.shape[0] == S.shape[1]):
        raise DimMismatch(f"rows d={A.shape[1]}/{B.shape[1]} vs sigma {S.shape}")
    out = np.empty(A.shape[0], dtype=np.float64)

    def work(s, e):
        blk_a = np.asarray(A[s:e], dtype=np.float64)
        blk_b = blk_a if same else np.asarray(B[s:e], dtype=np.float64)
        out[s:e] = np.einsum("ij,ij->i", blk_a @ S, blk_b)

    map_chunks(work, A.shape[0], workers)
    return ScoreVector(out, ScoreKind.VAS, A.shape[0])


# -- score statistics ---------------------------------------------------------

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class AxisStats:
    min: float
    max: float
    mean: float
    quantiles: dict[float, float]


@dataclass(frozen=True, eq=False)
class JointHistogram:
    counts: np.ndarray
    x_edges: np.ndarray
    y_edges: np.ndarray
    x_stats: AxisStats
    y_stats: AxisStats
    labels: tuple[str, str] = ("x", "y")

    def to_csv(self) -> str:
        lines = ["bin_x,bin_y,count"]
        bins_x, bins_y = self.counts.shape
        for i in range(bins_x):
            for j in range(bins_y):
                lines.append(f"{i},{j},{int(self.counts[i, j])}")
        return "\n".join(lines) + "\n"

    def axes_csv(self) -> str:
        header = ["axis", "min", "max", "mean"] + [f"q{q:g}" for q in QUANTILES]
        lines = [",".join(header)]
        for name, st in zip(self.labels, (self.x_stats, self.y_stats)):
            vals = [st.min, st.max, st.mean] + [st.quantiles[q] for q in QUANTILES]
            lines.append(",".join([name] + [repr(float(v)) for v in vals]))
        return "\n".join(lines) + "\n"


def _edges(values: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, bins + 1)


def _axis_stats(values: np.ndarray) -> AxisStats:
    qs = np.quantile(values, QUANTILES)
    return AxisStats(
        float(values.min()), float(values.max()), float(values.mean()),
        {q: float(v) for q, v in zip(QUANTILES, qs)},
    )


def score_stats(s: ScoreVector, s2: ScoreVector, bins: int) -> JointHistogram:
    """Joint ``bins x bins`` histogram of two score vectors plus per-axis summaries.

    Bin edges span each axis' own min..max, so identical inputs land on the
    diagonal.
    """
    if bins < 1:
        raise ValidationError("bins must be >= 1")
    x, y = np.asarray(s.scores), np.asarray(s2.scores)
    if x.shape != y.shape:
        raise LengthMismatch(f"{x.shape[0]} vs {y.shape[0]} scores")
    if x.size == 0:
        raise ValidationError("cannot summarize empty score vectors")
    xe, ye = _edges(x, bins), _edges(y, bins)
    ix = np.clip(np.searchsorted(xe, x, side="right") - 1, 0, bins - 1)
    iy = np.clip(np.searchsorted(ye, y, side="right") - 1, 0, bins - 1)
    counts = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(counts, (ix, iy), 1)
    labels = (getattr(s.kind, "value", "x"), getattr(s2.kind, "value", "y"))
    if labels[0] == labels[1]:
        labels = (labels[0] + "_a", labels[1] + "_b")
    return JointHistogram(counts, xe, ye, _axis_stats(x), _axis_stats(y), labels)


# -- file formats -------------------------------------------------------------

def format_scores_csv(scores: ScoreVector, ids: Sequence[int] | None = None) -> str:
    lines = ["index,id,score"]
    vals = scores.scores
    for i in range(vals.shape[0]):
        ident = "" if ids is None else str(int(ids[i]))
        lines.append(f"{i},{ident},{float(vals[i])!r}")
    return "\n".join(lines) + "\n"


def write_scores_csv(scores: ScoreVector, path, ids=None) -> None:
    atomic_write(path, format_scores_csv(scores, ids))


def read_scores_csv(path, kind: ScoreKind | str = ScoreKind.VAS) -> tuple[ScoreVector, np.ndarray | None]:
    """Parse a score CSV; returns the scores and the id column (None when blank)."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0].strip() != "index,id,score":
        raise ValidationError(f"{path}: missing 'index,id,score' header")
    vals, ids = [], []
    for k, ln in enumerate(lines[1:]):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != 3 or int(parts[0]) != k:
            raise ValidationError(f"{path}: malformed row {k + 1}")
        ids.append(parts[1])
        vals.append(float(parts[2]))
    id_arr = None
    if ids and all(ids):
        id_arr = np.array([int(i) for i in ids], dtype=np.uint64)
    return ScoreVector(np.array(vals), kind), id_arr


def format_moment(m: MomentMatrix) -> bytes:
    """``VMOM`` bytes: magic, u32 version, u32 d, float64 little-endian row-major payload."""
    header = MOMENT_HEADER.pack(MOMENT_MAGIC, MOMENT_VERSION, m.d)
    return header + np.ascontiguousarray(m.entries, dtype="<f8").tobytes()


def save_moment(m: MomentMatrix, path) -> None:
    atomic_write(path, format_moment(m))


def load_moment(path, label: str | None = None) -> MomentMatrix:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:4] != MOMENT_MAGIC:
        raise BadMagic(f"{path} does not start with {MOMENT_MAGIC!r}")
    if len(raw) < MOMENT_HEADER.size:
        raise TruncatedPayload(f"{path}: short header")
    _, version, d = MOMENT_HEADER.unpack_from(raw)
    if version != MOMENT_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {MOMENT_VERSION}")
    payload = raw[MOMENT_HEADER.size:]
    if len(payload) != d * d * 8:
        raise TruncatedPayload(f"{path}: expected {d * d * 8} payload bytes, got {len(payload)}")
    entries = np.frombuffer(payload, dtype="<f8").reshape(d, d)
    return MomentMatrix(entries, 1, label=label if label is not None else path.name)


def moment_trace(m: MomentMatrix) -> float:
    return float(np.trace(m.entries))


def is_psd(m: MomentMatrix, tol: float = 1e-8) -> bool:
    sym = 0.5 * (m.entries + m.entries.T)
    return bool(np.linalg.eigvalsh(sym).min() >= -tol) if m.d else True


__all__ = [
    "AxisStats",
    "JointHistogram",
    "MomentMatrix",
    "ScoreKind",
    "ScoreVector",
    "clip_scores",
    "format_moment",
    "format_scores_csv",
    "is_psd",
    "load_moment",
    "map_chunks",
    "moment_trace",
    "read_scores_csv",
    "save_moment",
    "score_stats",
    "second_moment",
    "vas_scores",
    "write_scores_csv",
]

