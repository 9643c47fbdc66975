"""Term vector index: cosine retrieval, persistence, linker integration."""

import numpy as np

from sqlknow.linker import link
from sqlknow.vector_index import build_term_index, load_term_index, save_term_index


def test_index_ranks_semantically_closer_term_first(kb):
    index = build_term_index(kb)
    top = index.search("what share of students gets free meals", k=1)
    assert top[0][0].term_text == "free meal rate"
    top2 = index.search("share of test takers scoring high on the SAT", k=2)
    assert {t.term_text for t, _ in top2} == {"free meal rate", "excellence rate"}


def test_index_round_trip(tmp_path, kb):
    index = build_term_index(kb)
    path = tmp_path / "terms.index.json"
    save_term_index(index, path)
    loaded = load_term_index(path)
    assert [t.term_text for t in loaded.terms] == [t.term_text for t in index.terms]
    assert np.allclose(loaded.matrix, index.matrix)
    assert loaded.search("free meals", 1)[0][0].term_text == index.search("free meals", 1)[0][0].term_text


def test_empty_kb_index(tmp_path):
    from sqlknow.knowledge import KnowledgeBase

    index = build_term_index(KnowledgeBase(db_id="none"))
    assert index.search("anything", 3) == []
    path = tmp_path / "empty.index.json"
    save_term_index(index, path)
    assert load_term_index(path).search("anything", 3) == []


def test_linker_accepts_vector_term_backend(schools, kb):
    index = build_term_index(kb)
    result = link("free meal rate of schools in Fresno", schools, kb,
                  k1=2, k2=3, k3=1, term_index=index)
    assert result.terms
    assert result.terms[0][0].term_text == "free meal rate"
