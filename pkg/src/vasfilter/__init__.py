"""Embedding-based data selection for contrastive pretraining.

Scores image-text pairs by how well their embeddings align with the
second moment of a target distribution, and compares that selection rule
with CLIP-score filtering, classic optimal design and random sampling.
"""

from .embstore import (
    EmbeddingMatrix,
    Modality,
    PairedView,
    align_pairs,
    load_embeddings,
    save_embeddings,
)
from .errors import IoFailure, NumericalError, ValidationError, VasError
from .optdesign import a_optimal_select, random_select, v_optimal_select
from .scoring import (
    MomentMatrix,
    ScoreKind,
    ScoreVector,
    clip_scores,
    load_moment,
    save_moment,
    score_stats,
    second_moment,
    vas_scores,
)
from .selection import (
    SelectionResult,
    StageRecord,
    greedy_schedule,
    select_by_threshold,
    select_top_k,
    two_stage_filter,
    vas_d,
)

__version__ = "0.1.0"

__all__ = [
    "EmbeddingMatrix",
    "IoFailure",
    "Modality",
    "MomentMatrix",
    "NumericalError",
    "PairedView",
    "ScoreKind",
    "ScoreVector",
    "SelectionResult",
    "StageRecord",
    "ValidationError",
    "VasError",
    "a_optimal_select",
    "align_pairs",
    "clip_scores",
    "greedy_schedule",
    "load_embeddings",
    "load_moment",
    "random_select",
    "save_embeddings",
    "save_moment",
    "score_stats",
    "second_moment",
    "select_by_threshold",
    "select_top_k",
    "two_stage_filter",
    "v_optimal_select",
    "vas_d",
    "vas_scores",
]
