"""Subset selection: top-k, thresholding, CLIP-then-VAS filtering and VAS-D.

Every ranking breaks ties toward the smaller original index, so results do
not depend on worker counts or platform sort stability.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .embstore import EmbeddingMatrix, PairedView, atomic_write
from .errors import (
    DimMismatch,
    EmptySelection,
    IoFailure,
    KOutOfRange,
    MissingIds,
    TargetExceedsInput,
    TargetExceedsStage1,
    TauZero,
    ValidationError,
)
from .scoring import MomentMatrix, ScoreVector, clip_scores, map_chunks, vas_scores

DEFAULT_CLIP_KEEP = 0.5
DEFAULT_VAS_KEEP = 0.3
DEFAULT_TAU = 168
RECOMPUTE_EVERY = 16


@dataclass(frozen=True)
class StageRecord:
    name: str
    input_n: int
    output_n: int
    threshold_used: float | None = None
    objective_value: float | None = None

    def __post_init__(self):
        if self.output_n > self.input_n:
            raise ValidationError(f"stage {self.name}: output {self.output_n} > input {self.input_n}")


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Kept row indices (strictly increasing) plus how each stage got there.

    ``target_n == 0`` marks threshold mode, where the size is not fixed.
    ``meta`` carries method-specific settings such as the ridge used by the
    optimal-design selectors.
    """

    kept: np.ndarray
    stages: list[StageRecord]
    target_n: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        kept = np.asarray(self.kept, dtype=np.int64).reshape(-1)
        if kept.size > 1 and not np.all(np.diff(kept) > 0):
            raise ValidationError("kept indices must be strictly increasing")
        if kept.size and kept[0] < 0:
            raise ValidationError("kept indices must be non-negative")
        if not self.stages:
            raise ValidationError("a selection needs at least one stage record")
        if self.target_n > 0 and kept.size != self.target_n:
            raise ValidationError(f"kept {kept.size} rows, target was {self.target_n}")
        kept.flags.writeable = False
        object.__setattr__(self, "kept", kept)

    def __len__(self) -> int:
        return int(self.kept.size)

    @classmethod
    def full(cls, n: int, name: str = "input") -> "SelectionResult":
        return cls(np.arange(n), [StageRecord(name, n, n)], target_n=n)

    def with_stages(self, before: list[StageRecord]) -> "SelectionResult":
        return SelectionResult(self.kept, before + self.stages, self.target_n, self.meta)


@dataclass(frozen=True)
class VasDStep:
    t: int
    n_t: int
    removed: int
    tr_sigma_sq: float


@dataclass(eq=False)
class VasDTrace:
    steps: list[VasDStep]
    tau: int
    moment: np.ndarray | None = None

    def to_csv(self) -> str:
        lines = ["t,N_t,removed,tr_sigma_sq"]
        lines += [f"{s.t},{s.n_t},{s.removed},{s.tr_sigma_sq!r}" for s in self.steps]
        return "\n".join(lines) + "\n"


def _top_k_positions(scores: np.ndarray, k: int) -> np.ndarray:
    """Positions of the ``k`` largest values, smaller position first on ties, sorted."""
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])


def select_top_k(scores: ScoreVector, k: int) -> SelectionResult:
    n = len(scores)
    if not 1 <= k <= n:
        raise KOutOfRange(f"k={k} outside [1, {n}]")
    kept = _top_k_positions(scores.scores, k)
    obj = float(scores.scores[kept].sum())
    stage = StageRecord(f"top_k_{scores.kind.value}", n, k, objective_value=obj)
    return SelectionResult(kept, [stage], target_n=k)


def select_by_threshold(scores: ScoreVector, min_score: float) -> SelectionResult:
    if not math.isfinite(min_score):
        raise ValidationError("threshold must be finite")
    kept = np.flatnonzero(scores.scores >= min_score)
    obj = float(scores.scores[kept].sum())
    stage = StageRecord(
        f"threshold_{scores.kind.value}", len(scores), int(kept.size), float(min_score), obj
    )
    return SelectionResult(kept, [stage], target_n=0)


def resolve_count(value: float | int, n: int) -> int:
    """Turn a fraction in (0, 1] (float) or an absolute count (int) into a count."""
    if isinstance(value, (bool, np.bool_)):
        raise ValidationError("expected a fraction or a count")
    if isinstance(value, (int, np.integer)):
        count = int(value)
    else:
        frac = float(value)
        if not 0.0 < frac <= 1.0:
            raise ValidationError(f"fraction {frac} outside (0, 1]")
        count = int(math.floor(frac * n + 0.5))
    if count < 1:
        raise EmptySelection(f"{value!r} of {n} rows selects nothing")
    return count


def two_stage_filter(
    pairs: PairedView,
    prior: MomentMatrix,
    vas_target: int,
    clip_keep: float | int = DEFAULT_CLIP_KEEP,
    *,
    clip_threshold: float | None = None,
    workers: int = 1,
) -> SelectionResult:
    """CLIP-score filter, then keep the ``vas_target`` highest vision VAS survivors.

    Stage 1 keeps the top ``clip_keep`` (a fraction or a count) by CLIP
    score, or everything at or above ``clip_threshold`` when given. Indices
    in the result refer to the original rows.
    """
    n = len(pairs)
    if prior.d != pairs.vision.d:
        raise DimMismatch(f"prior d={prior.d} vs embedding d={pairs.vision.d}")
    cs = clip_scores(pairs, workers=workers)
    if clip_threshold is not None:
        stage1 = select_by_threshold(cs, clip_threshold)
    else:
        stage1 = select_top_k(cs, resolve_count(clip_keep, n))
    survivors = stage1.kept
    if survivors.size == 0:
        raise EmptySelection("CLIP stage kept no rows")
    if not 1 <= vas_target <= survivors.size:
        raise TargetExceedsStage1(f"vas_target={vas_target} but stage 1 kept {survivors.size}")
    sub = pairs.vision.data[survivors]
    vs = vas_scores(sub, None, prior, workers=workers)
    local = _top_k_positions(vs.scores, vas_target)
    kept = survivors[local]
    stage2 = StageRecord(
        "vas_top_k", int(survivors.size), vas_target, objective_value=float(vs.scores[local].sum())
    )
    return SelectionResult(kept, stage1.stages + [stage2], target_n=vas_target)


def greedy_schedule(n0: int, target: int, tau: int) -> list[int]:
    """Round sizes ``N_1..N_tau`` for ``N_t = N_0 - (t/tau)(N_0 - N)``.

    Values are rounded half-up, forced strictly decreasing when the gap
    allows it, and the last one is pinned to ``target``.
    """
    if tau < 1:
        raise TauZero("tau must be >= 1")
    if target > n0:
        raise TargetExceedsInput(f"target {target} > input {n0}")
    gap = n0 - target
    strict = gap >= tau and gap > 0
    sizes, prev = [], n0
    for t in range(1, tau + 1):
        # N_0 - ceil(t*gap/tau - 1/2), in exact integer arithmetic
        num = 2 * t * gap - tau
        size = n0 - (-(-num // (2 * tau)))
        if strict and size >= prev:
            size = prev - 1
        size = max(size, target)
        sizes.append(size)
        prev = size
    sizes[-1] = target
    return sizes


def _rows_of(vision) -> np.ndarray:
    return vision.data if isinstance(vision, EmbeddingMatrix) else np.asarray(vision)


def _outer_sum(F: np.ndarray, workers: int = 1) -> np.ndarray:
    d = F.shape[1]
    total = np.zeros((d, d))
    for part in map_chunks(lambda s, e: F[s:e].T @ F[s:e], F.shape[0], workers):
        total += part
    return total


def _quad_scores(F: np.ndarray, M: np.ndarray, workers: int = 1) -> np.ndarray:
    out = np.empty(F.shape[0])

    def work(s, e):
        out[s:e] = np.einsum("ij,ij->i", F[s:e] @ M, F[s:e])

    map_chunks(work, F.shape[0], workers)
    return out


def vas_d(
    vision,
    input_set: SelectionResult,
    target_n: int,
    tau: int = DEFAULT_TAU,
    *,
    recompute_every: int = RECOMPUTE_EVERY,
    workers: int = 1,
) -> tuple[SelectionResult, VasDTrace]:
    """Dynamic VAS by greedy removal over ``tau`` rounds.

    Each round scores the current set against the unnormalized sum of its
    own outer products, keeps the ``N_t`` best, and downdates the sum by the
    removed rows. The sum is rebuilt from scratch every ``recompute_every``
    rounds (0 disables the rebuild).
    """
    if tau < 1:
        raise TauZero("tau must be >= 1")
    current = np.asarray(input_set.kept, dtype=np.int64)
    n0 = int(current.size)
    if n0 == 0:
        raise EmptySelection("VAS-D input set is empty")
    if not 1 <= target_n <= n0:
        raise TargetExceedsInput(f"target {target_n} vs input size {n0}")
    X = _rows_of(vision)
    F = np.asarray(X[current], dtype=np.float64)
    M = _outer_sum(F, workers)
    steps = []
    for t, n_t in enumerate(greedy_schedule(n0, target_n, tau), start=1):
        scores = _quad_scores(F, M, workers)
        keep_pos = _top_k_positions(scores, n_t)
        drop = np.ones(F.shape[0], dtype=bool)
        drop[keep_pos] = False
        removed = F[drop]
        F = F[keep_pos]
        current = current[keep_pos]
        if recompute_every and t % recompute_every == 0:
            M = _outer_sum(F, workers)
        elif removed.shape[0]:
            M -= removed.T @ removed
            M = 0.5 * (M + M.T)
        steps.append(VasDStep(t, n_t, int(removed.shape[0]), float(np.sum(M * M))))
    obj = float(np.sum(M * M))
    stage = StageRecord("vas_d", n0, target_n, objective_value=obj)
    result = SelectionResult(current, input_set.stages + [stage], target_n=target_n,
                             meta={"tau": tau, "scale": "sum"})
    return result, VasDTrace(steps, tau, M)


def remap_to_ids(result: SelectionResult, m: EmbeddingMatrix) -> list[int]:
    if m.ids is None:
        raise MissingIds("matrix carries no sample ids")
    return [int(m.ids[i]) for i in result.kept]


# -- file formats -------------------------------------------------------------

def format_selection(result: SelectionResult, ids: list[int] | None = None) -> str:
    values = ids if ids is not None else [int(i) for i in result.kept]
    return "".join(f"{v}\n" for v in values)


def format_stages(result: SelectionResult) -> str:
    return "".join(json.dumps(asdict(s), sort_keys=False) + "\n" for s in result.stages)


def write_selection(result: SelectionResult, path, ids: list[int] | None = None,
                    stages_path=None) -> None:
    """Write kept indices (or ids) one per line and the JSON-lines stage sidecar."""
    atomic_write(path, format_selection(result, ids))
    sidecar = Path(stages_path) if stages_path else Path(str(path) + ".stages.jsonl")
    atomic_write(sidecar, format_stages(result))


def read_index_list(path, n: int | None = None) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        idx = np.array([int(t) for t in text.split()], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed index: {exc}") from exc
    if idx.size and (idx.min() < 0 or (n is not None and idx.max() >= n)):
        raise ValidationError(f"{path}: index out of range")
    if np.unique(idx).size != idx.size:
        raise ValidationError(f"{path}: duplicate indices")
    return np.sort(idx)


__all__ = [
    "DEFAULT_CLIP_KEEP",
    "DEFAULT_TAU",
    "DEFAULT_VAS_KEEP",
    "SelectionResult",
    "StageRecord",
    "VasDStep",
    "VasDTrace",
    "format_selection",
    "format_stages",
    "greedy_schedule",
    "read_index_list",
    "remap_to_ids",
    "resolve_count",
    "select_by_threshold",
    "select_top_k",
    "two_stage_filter",
    "vas_d",
    "write_selection",
]
