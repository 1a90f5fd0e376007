import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vasfilter.embstore import (
    HEADER,
    EmbeddingMatrix,
    Modality,
    align_pairs,
    iter_chunks,
    load_embeddings,
    read_header,
    renormalize_rows,
    save_csv,
    save_embeddings,
)
from vasfilter.errors import (
    BadMagic,
    DimensionOverflow,
    IdMismatch,
    InvalidShape,
    LengthMismatch,
    TruncatedPayload,
    ValidationError,
    VersionMismatch,
    ZeroNormRow,
)


def write(path, text):
    path.write_text(text)
    return path


def test_csv_identity_rows_stay_put(tmp_path):
    m = load_embeddings(write(tmp_path / "a.csv", "1,0\n0,1\n"), expect_normalized=True)
    assert m.normalized
    np.testing.assert_array_equal(m.data, [[1, 0], [0, 1]])


def test_csv_row_is_rescaled(tmp_path):
    m = load_embeddings(write(tmp_path / "a.csv", "3,0,4\n"), expect_normalized=True)
    np.testing.assert_allclose(m.data[0], [0.6, 0.0, 0.8], rtol=1e-7)


def test_zero_row_is_rejected_with_index(tmp_path):
    with pytest.raises(ZeroNormRow) as info:
        load_embeddings(write(tmp_path / "a.csv", "1,0\n0,0\n"), expect_normalized=True)
    assert info.value.index == 1


def test_binary_round_trip_1000x512(tmp_path, rng):
    data = rng.standard_normal((1000, 512)).astype(np.float32)
    m = EmbeddingMatrix(data, ids=np.arange(1000, 2000), modality="language")
    path = tmp_path / "m.vemb"
    save_embeddings(m, path)
    back = load_embeddings(path)
    assert back.equals(m)
    raw = path.read_bytes()
    assert raw[HEADER.size:] == data.astype("<f4").tobytes()
    assert read_header(path) == (1000, 512, Modality.LANGUAGE, False)


def test_mmap_load_matches(tmp_path, rng):
    m = EmbeddingMatrix(rng.standard_normal((50, 8)))
    save_embeddings(m, tmp_path / "m.vemb")
    mm = load_embeddings(tmp_path / "m.vemb", mmap=True)
    np.testing.assert_array_equal(np.asarray(mm.data), m.data)
    blocks = list(iter_chunks(tmp_path / "m.vemb", chunk_rows=16))
    assert [s for s, _ in blocks] == [0, 16, 32, 48]
    np.testing.assert_array_equal(np.vstack([b for _, b in blocks]), m.data)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 20), st.integers(1, 12)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_round_trip_property(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("rt") / "m.vemb"
    m = EmbeddingMatrix(data, ids=np.arange(data.shape[0]) * 7)
    save_embeddings(m, path)
    assert load_embeddings(path).equals(m)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 64)),
              elements=st.floats(0.01, 100)))
def test_renormalization_is_idempotent(data):
    once = renormalize_rows(data.astype(np.float32))
    twice = renormalize_rows(once)
    np.testing.assert_allclose(twice, once, rtol=1e-7, atol=0)


def test_csv_and_binary_agree(tmp_path, rng):
    m = EmbeddingMatrix(rng.standard_normal((20, 6)))
    save_embeddings(m, tmp_path / "m.vemb")
    save_csv(m, tmp_path / "m.csv")
    a = load_embeddings(tmp_path / "m.vemb").data
    b = load_embeddings(tmp_path / "m.csv").data
    np.testing.assert_allclose(a, b, rtol=1e-6)


def test_bad_magic(tmp_path):
    (tmp_path / "x.vemb").write_bytes(b"NOPE" + bytes(28))
    with pytest.raises(BadMagic):
        load_embeddings(tmp_path / "x.vemb")


def test_version_mismatch(tmp_path):
    m = EmbeddingMatrix(np.ones((2, 2)))
    save_embeddings(m, tmp_path / "m.vemb")
    raw = bytearray((tmp_path / "m.vemb").read_bytes())
    raw[4] = 9
    (tmp_path / "m.vemb").write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_embeddings(tmp_path / "m.vemb")


def test_truncated_payload(tmp_path):
    save_embeddings(EmbeddingMatrix(np.ones((4, 3))), tmp_path / "m.vemb")
    raw = (tmp_path / "m.vemb").read_bytes()
    (tmp_path / "m.vemb").write_bytes(raw[:-4])
    with pytest.raises(TruncatedPayload):
        load_embeddings(tmp_path / "m.vemb")


def test_memory_budget(tmp_path):
    save_embeddings(EmbeddingMatrix(np.ones((10, 10))), tmp_path / "m.vemb")
    with pytest.raises(DimensionOverflow):
        load_embeddings(tmp_path / "m.vemb", max_bytes=100)


def test_wrong_length_ids_fail_before_write(tmp_path):
    with pytest.raises(LengthMismatch):
        EmbeddingMatrix(np.ones((3, 2)), ids=[1, 2])
    assert not os.listdir(tmp_path)


def test_empty_matrix_rejected():
    with pytest.raises(InvalidShape):
        EmbeddingMatrix(np.zeros((0, 4)))


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError):
        EmbeddingMatrix(np.ones((2, 2)), ids=[5, 5])


def test_normalized_flag_is_checked():
    with pytest.raises(ValidationError):
        EmbeddingMatrix(np.ones((1, 2)), normalized=True)


def test_caller_array_untouched():
    data = np.ones((2, 2), dtype=np.float32)
    m = EmbeddingMatrix(data)
    assert data.flags.writeable and not m.data.flags.writeable


def test_align_pairs(unit_matrix):
    v = unit_matrix(3, 4, ids=[1, 2, 3])
    view = align_pairs(v, unit_matrix(3, 4, "language", ids=[1, 2, 3]))
    assert len(view) == 3
    np.testing.assert_array_equal(view[1][0], v.data[1])
    with pytest.raises(LengthMismatch):
        align_pairs(v, unit_matrix(4, 4, "language"))
    with pytest.raises(IdMismatch) as info:
        align_pairs(v, unit_matrix(3, 4, "language", ids=[1, 3, 2]))
    assert info.value.position == 1


def test_sidecar_ids_written_and_removed(tmp_path):
    path = tmp_path / "m.vemb"
    save_embeddings(EmbeddingMatrix(np.ones((2, 2)), ids=[7, 9]), path)
    assert (tmp_path / "m.vemb.ids").read_text().split() == ["7", "9"]
    save_embeddings(EmbeddingMatrix(np.ones((2, 2))), path)
    assert not (tmp_path / "m.vemb.ids").exists()
    assert load_embeddings(path).ids is None
