from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rubiscot.errors import DimensionMismatch, EmptyStore, InvalidChunkParams, ZeroVector
from rubiscot.model import SectionKind
from rubiscot.rag import (
    ExpectationDocument,
    ExpectationKind,
    HashingEmbedder,
    RagStore,
    build_store,
    chunk_document,
    cosine,
    reassemble,
)

from conftest import FIXTURES


def doc(text, doc_id="d", target=None):
    return ExpectationDocument(doc_id, ExpectationKind.EXPECTATION, target, text)


def test_short_text_is_one_chunk():
    assert len(chunk_document(doc("x" * 10), 20, 5)) == 1


def test_hundred_chars_sixty_twenty():
    chunks = chunk_document(doc("".join(chr(65 + i % 26) for i in range(100))), 60, 20)
    assert [c.char_range for c in chunks] == [(0, 60), (40, 100)]


@pytest.mark.parametrize(("size", "overlap"), [(10, 10), (10, 11), (10, -1)])
def test_invalid_chunk_params(size, overlap):
    with pytest.raises(InvalidChunkParams):
        chunk_document(doc("abc"), size, overlap)


@settings(max_examples=200)
@given(
    st.text(min_size=1, max_size=600),
    st.integers(min_value=1, max_value=120),
    st.data(),
)
def test_chunk_count_and_roundtrip(text, size, data):
    overlap = data.draw(st.integers(min_value=0, max_value=size - 1))
    chunks = chunk_document(doc(text), size, overlap)
    n = len(text)
    expected = math.ceil((n - overlap) / (size - overlap)) if n > size else 1
    assert len(chunks) == expected
    assert reassemble(chunks, overlap) == text
    assert all(len(c.text) <= size for c in chunks)
    for a, b in zip(chunks, chunks[1:]):
        assert a.char_range[1] - b.char_range[0] == overlap
        if overlap:
            assert a.text[-overlap:] == b.text[:overlap]


def test_cosine_examples():
    v = np.array([3.0, -1.0, 2.0])
    assert cosine(v, v) == pytest.approx(1.0)
    assert cosine((1, 0), (0, 1)) == 0.0
    assert cosine((1, 1), (1, 0)) == pytest.approx(0.7071, abs=1e-4)


def test_cosine_errors():
    with pytest.raises(ZeroVector):
        cosine((0, 0), (1, 0))
    with pytest.raises(DimensionMismatch):
        cosine((1, 0), (1, 0, 0))


def test_embedder_deterministic_and_normalized():
    e = HashingEmbedder()
    a, b = e.embed("Research questions follow from objectives."), HashingEmbedder().embed(
        "research QUESTIONS follow from objectives"
    )
    assert e.dimension == 256 and a.shape == (256,)
    assert np.array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)


def test_verbatim_chunk_ranks_first():
    store = build_store(FIXTURES / "expectations")
    target = next(c for c in store.chunks if c.doc_id == "methodology")
    top = store.retrieve(target.text, k=3)
    assert top[0].chunk == target
    assert top[0].score == pytest.approx(1.0)


def test_k_larger_than_candidates():
    store = RagStore()
    store.add(doc("alpha beta", "a"))
    store.add(doc("beta gamma", "b"))
    out = store.retrieve("beta", k=10)
    assert len(out) == 2


def test_identical_vectors_tie_break():
    store = RagStore()
    store.add(doc("same words here", "zeta"))
    store.add(doc("same words here", "alpha"))
    out = store.retrieve("same words", k=2)
    assert [s.chunk.doc_id for s in out] == ["alpha", "zeta"]
    assert out[0].score == out[1].score


def test_section_filter_keeps_untargeted_docs():
    store = build_store(FIXTURES / "expectations")
    ids = {s.chunk.doc_id for s in store.retrieve("expectations", k=10, target_section=SectionKind.CONCLUSION)}
    assert ids == {"conclusion", "formatting_guidelines"}


def test_empty_store():
    with pytest.raises(EmptyStore):
        RagStore().retrieve("q")


def test_duplicate_doc_id_rejected():
    store = RagStore()
    store.add(doc("a", "x"))
    with pytest.raises(ValueError):
        store.add(doc("b", "x"))


_words = st.lists(st.sampled_from("thesis method rubric result objective question data review".split()), min_size=1, max_size=12)


@settings(max_examples=60)
@given(st.lists(_words, min_size=1, max_size=8), _words, st.integers(min_value=1, max_value=10))
def test_retrieve_sorted_with_tiebreak(docs, query, k):
    store = RagStore(chunk_size=40, overlap=10)
    for i, words in enumerate(docs):
        store.add(doc(" ".join(words), f"d{i:02d}"))
    out = store.retrieve(" ".join(query), k)
    keys = [(-s.score, s.chunk.doc_id, s.chunk.chunk_index) for s in out]
    assert keys == sorted(keys)
    assert len(out) == min(k, len(store))
    e = store.embedder
    for s in out:
        assert s.score == pytest.approx(cosine(e.embed(" ".join(query)), e.embed(s.chunk.text)), abs=1e-9)


def test_index_save_load_roundtrip(tmp_path):
    store = build_store(FIXTURES / "expectations", chunk_size=120, overlap=30)
    path = tmp_path / "index.json"
    store.save(path)
    again = RagStore.load(path)
    assert again.chunks == store.chunks
    assert again.documents == store.documents
    q = "research design replication threats"
    assert again.retrieve(q, 4) == store.retrieve(q, 4)


def test_expectation_front_matter():
    store = build_store(FIXTURES / "expectations")
    assert store.documents["introduction"].target_section is SectionKind.INTRODUCTION
    assert store.documents["formatting_guidelines"].kind is ExpectationKind.GUIDELINE
    assert not store.documents["introduction"].text.startswith("---")
