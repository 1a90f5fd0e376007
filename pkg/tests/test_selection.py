import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_top_k, schedule_exact
from vasfilter.embstore import EmbeddingMatrix, align_pairs
from vasfilter.errors import (
    DimMismatch,
    EmptySelection,
    KOutOfRange,
    MissingIds,
    TargetExceedsInput,
    TargetExceedsStage1,
    TauZero,
    ValidationError,
)
from vasfilter.scoring import MomentMatrix, ScoreVector, clip_scores, second_moment, vas_scores
from vasfilter.selection import (
    SelectionResult,
    format_stages,
    greedy_schedule,
    read_index_list,
    remap_to_ids,
    resolve_count,
    select_by_threshold,
    select_top_k,
    two_stage_filter,
    vas_d,
    write_selection,
)


def sv(values):
    return ScoreVector(np.asarray(values, dtype=float), "vas")


def test_top_k_examples():
    assert select_top_k(sv([0.1, 0.9, 0.5]), 2).kept.tolist() == [1, 2]
    assert select_top_k(sv([0.3] * 4), 2).kept.tolist() == [0, 1]


def test_top_k_matches_enumeration(rng):
    s = rng.standard_normal(12)
    assert select_top_k(sv(s), 5).kept.tolist() == brute_top_k(s, 5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=10), st.data())
def test_top_k_optimal_with_ties(values, data):
    k = data.draw(st.integers(1, len(values)))
    got = select_top_k(sv(values), k).kept.tolist()
    assert got == brute_top_k(values, k)


def test_top_k_range():
    with pytest.raises(KOutOfRange):
        select_top_k(sv([1.0, 2.0]), 3)
    with pytest.raises(KOutOfRange):
        select_top_k(sv([1.0, 2.0]), 0)


def test_threshold_examples():
    assert select_by_threshold(sv([0.1, 0.3, 0.25]), 0.214).kept.tolist() == [1, 2]
    assert select_by_threshold(sv([0.1, 0.3, 0.25]), -1e30).kept.tolist() == [0, 1, 2]
    r = select_by_threshold(sv([0.1, 0.3]), 5.0)
    assert len(r) == 0 and r.stages[0].output_n == 0 and r.stages[0].threshold_used == 5.0


def test_resolve_count():
    assert resolve_count(0.3, 100) == 30
    assert resolve_count(0.5, 5) == 3
    assert resolve_count(7, 100) == 7
    with pytest.raises(EmptySelection):
        resolve_count(0.001, 10)
    with pytest.raises(ValidationError):
        resolve_count(1.5, 10)


def paired(rng, n, d):
    v = rng.standard_normal((n, d))
    l = v + 0.7 * rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    l /= np.linalg.norm(l, axis=1, keepdims=True)
    return align_pairs(EmbeddingMatrix(v, normalized=True),
                       EmbeddingMatrix(l, modality="language", normalized=True))


def test_two_stage_sizes(rng):
    pairs = paired(rng, 100, 8)
    prior = second_moment(rng.standard_normal((50, 8)))
    r = two_stage_filter(pairs, prior, 30, 0.5)
    assert [s.output_n for s in r.stages] == [50, 30]
    assert len(r) == 30


def test_two_stage_full_clip_keep_is_plain_vas(rng):
    pairs = paired(rng, 60, 6)
    prior = second_moment(rng.standard_normal((40, 6)))
    r = two_stage_filter(pairs, prior, 20, 1.0)
    direct = select_top_k(vas_scores(pairs.vision, None, prior), 20)
    assert r.kept.tolist() == direct.kept.tolist()


def test_two_stage_composition_by_hand(rng):
    pairs = paired(rng, 10, 4)
    prior = second_moment(rng.standard_normal((30, 4)))
    r = two_stage_filter(pairs, prior, 3, 6)
    clip = clip_scores(pairs).scores
    stage1 = sorted(brute_top_k(list(clip), 6))
    vas = [float(pairs.vision.data[i].astype(float) @ prior.entries @ pairs.vision.data[i].astype(float))
           for i in stage1]
    final = sorted(stage1[j] for j in brute_top_k(vas, 3))
    assert r.kept.tolist() == final
    assert set(r.kept) <= set(stage1)


def test_two_stage_threshold_and_errors(rng):
    pairs = paired(rng, 40, 4)
    prior = second_moment(rng.standard_normal((30, 4)))
    r = two_stage_filter(pairs, prior, 5, clip_threshold=0.5)
    assert r.stages[0].threshold_used == 0.5
    assert np.all(clip_scores(pairs).scores[r.kept] >= 0.5)
    with pytest.raises(TargetExceedsStage1):
        two_stage_filter(pairs, prior, 25, 0.5)
    with pytest.raises(DimMismatch):
        two_stage_filter(pairs, MomentMatrix.identity(3), 5)
    with pytest.raises(EmptySelection):
        two_stage_filter(pairs, prior, 5, clip_threshold=2.0)


def test_schedule_example():
    assert greedy_schedule(100, 40, 3) == [80, 60, 40]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 400), st.data())
def test_schedule_properties(n0, data):
    target = data.draw(st.integers(1, n0))
    tau = data.draw(st.integers(1, 60))
    sched = greedy_schedule(n0, target, tau)
    assert len(sched) == tau and sched[-1] == target
    steps = [n0] + sched
    assert all(a >= b for a, b in zip(steps, steps[1:]))
    if n0 > target and tau <= n0 - target:
        assert all(a > b for a, b in zip(steps, steps[1:]))
        assert sched == schedule_exact(n0, target, tau)


def test_schedule_errors():
    with pytest.raises(TauZero):
        greedy_schedule(10, 5, 0)
    with pytest.raises(TargetExceedsInput):
        greedy_schedule(10, 11, 3)


def test_vas_d_tau_one_is_plain_vas(rng):
    for _ in range(20):
        n, d = int(rng.integers(5, 60)), int(rng.integers(2, 10))
        x = rng.standard_normal((n, d))
        target = int(rng.integers(1, n + 1))
        r, _ = vas_d(x, SelectionResult.full(n), target, tau=1)
        plain = select_top_k(vas_scores(x, None, second_moment(x)), target)
        assert r.kept.tolist() == plain.kept.tolist()


def test_vas_d_beats_random_subsets(rng):
    x = rng.standard_normal((12, 4))
    r, _ = vas_d(x, SelectionResult.full(12), 6, tau=6)

    def tr_sq(idx):
        s = x[idx].T @ x[idx] / len(idx)
        return np.trace(s @ s)

    rand = np.mean([tr_sq(rng.choice(12, 6, replace=False)) for _ in range(100)])
    assert tr_sq(r.kept) >= rand


def test_vas_d_trace_and_rounds(rng):
    x = rng.standard_normal((300, 8))
    start = SelectionResult.full(300)
    r, trace = vas_d(x, start, 90, tau=12)
    sched = greedy_schedule(300, 90, 12)
    assert [s.n_t for s in trace.steps] == sched
    prev = [300] + sched
    assert [s.removed for s in trace.steps] == [a - b for a, b in zip(prev, sched)]
    final = x[r.kept]
    np.testing.assert_allclose(trace.moment, final.T @ final, rtol=1e-9)
    assert r.stages[-1].objective_value == pytest.approx(np.sum((final.T @ final) ** 2))
    csv = trace.to_csv().splitlines()
    assert csv[0] == "t,N_t,removed,tr_sigma_sq" and len(csv) == 13


def test_vas_d_removes_lowest_each_round(rng):
    # replay the rounds by hand: every removed row scores <= every kept row
    x = rng.standard_normal((120, 5))
    r, trace = vas_d(x, SelectionResult.full(120), 30, tau=5)
    current = np.arange(120)
    for step in trace.steps:
        F = x[current]
        scores = np.einsum("ij,jk,ik->i", F, F.T @ F, F)
        keep = np.sort(np.argsort(-scores, kind="stable")[:step.n_t])
        removed = np.setdiff1d(np.arange(len(current)), keep)
        assert scores[removed].max() <= scores[keep].min()
        current = current[keep]
    assert current.tolist() == r.kept.tolist()


def test_vas_d_sum_and_mean_moments_rank_alike(rng):
    x = rng.standard_normal((80, 6))
    s = x.T @ x
    a = vas_scores(x, None, s).scores
    b = vas_scores(x, None, s / 80).scores
    assert select_top_k(ScoreVector(a, "vas"), 30).kept.tolist() == \
        select_top_k(ScoreVector(b, "vas"), 30).kept.tolist()


def test_vas_d_respects_input_set(rng):
    x = rng.standard_normal((50, 4))
    start = SelectionResult(np.arange(0, 50, 2), [select_top_k(sv(np.ones(50)), 25).stages[0]])
    r, _ = vas_d(x, start, 10, tau=3)
    assert set(r.kept) <= set(range(0, 50, 2))
    assert len(r.stages) == 2


def test_vas_d_errors(rng):
    x = rng.standard_normal((10, 3))
    with pytest.raises(TauZero):
        vas_d(x, SelectionResult.full(10), 5, tau=0)
    with pytest.raises(TargetExceedsInput):
        vas_d(x, SelectionResult.full(10), 11)


def test_selection_result_invariants():
    with pytest.raises(ValidationError):
        SelectionResult([2, 1], [select_top_k(sv([1.0]), 1).stages[0]])
    with pytest.raises(ValidationError):
        SelectionResult([1, 2], [])


def test_remap_to_ids():
    m = EmbeddingMatrix(np.ones((3, 2)), ids=[10, 11, 12])
    st0 = select_top_k(sv([1.0]), 1).stages
    assert remap_to_ids(SelectionResult([0, 2], st0), m) == [10, 12]
    assert remap_to_ids(SelectionResult([], st0), m) == []
    assert remap_to_ids(SelectionResult.full(3), m) == [10, 11, 12]
    with pytest.raises(MissingIds):
        remap_to_ids(SelectionResult.full(3), EmbeddingMatrix(np.ones((3, 2))))


def test_selection_files(tmp_path, rng):
    r = select_top_k(sv(rng.standard_normal(20)), 5)
    write_selection(r, tmp_path / "sel.txt")
    assert read_index_list(tmp_path / "sel.txt").tolist() == r.kept.tolist()
    rec = json.loads((tmp_path / "sel.txt.stages.jsonl").read_text().splitlines()[0])
    assert set(rec) == {"name", "input_n", "output_n", "threshold_used", "objective_value"}
    assert format_stages(r).count("\n") == 1
