"""Pattern graph: probability law, mixture retrieval, persistence, export."""

import collections

import numpy as np
import pytest
from scipy import stats

from sqlknow.pattern_graph import (
    Edge,
    GraphConfig,
    PatternGraph,
    QuestionCluster,
    SkeletonCluster,
    build_graph,
    export_cypher,
    graph_from_dict,
    graph_to_dict,
    load_graph,
    mixture_distribution,
    representative_queries,
    retrieve_skeletons,
    store_graph,
)
from sqlknow.textproc import HashingEmbedder

PROB_TOL = 1e-9


def small_config(kq=4, ks=4, seed=7):
    return GraphConfig(question_clusters=kq, skeleton_clusters=ks, seed=seed)


def graph_pairs(corpus):
    return [(r["question"], r["sql"]) for r in corpus]


def test_edge_probabilities_sum_to_one(schools, kb, corpus):
    graph = build_graph(graph_pairs(corpus), schools, kb, small_config())
    sums = collections.defaultdict(float)
    for e in graph.edges:
        sums[e.q_cluster] += e.prob
        assert e.count >= 1
        assert e.prob > 0.0
    for q_id, total in sums.items():
        assert abs(total - 1.0) <= PROB_TOL, q_id
    # every question cluster with at least one member has outgoing edges
    assert set(sums) == {qc.id for qc in graph.question_clusters}


def test_single_skeleton_family_gives_prob_one(schools):
    pairs = [
        (f"how many schools are in area {i}", f"SELECT COUNT(*) FROM schools WHERE County = 'a{i}'")
        for i in range(8)
    ]
    graph = build_graph(pairs, schools, None, small_config(kq=2, ks=2, seed=1))
    # identical skeletons everywhere: co-occurrence is forced, probs are 1.0
    for e in graph.edges:
        assert abs(e.prob - 1.0) <= PROB_TOL


def test_conditional_probability_arithmetic():
    """f(q,s1)=3, f(q,s2)=1 must yield p(s1|q)=0.75 and p(s2|q)=0.25."""
    counts = {(0, 0): 3, (0, 1): 1}
    total = sum(counts.values())
    edges = [
        Edge(q_cluster=q, s_cluster=s, count=c, prob=c / total)
        for (q, s), c in sorted(counts.items())
    ]
    assert edges[0].prob == 0.75
    assert edges[1].prob == 0.25


def test_unparseable_pair_dropped_and_logged(schools):
    pairs = [
        ("good one", "SELECT COUNT(*) FROM schools"),
        ("bad one", "SELEC COUNT(*) FROM"),
        ("another good", "SELECT County FROM schools"),
        ("more good", "SELECT School FROM schools WHERE Charter = 1"),
    ]
    graph = build_graph(pairs, schools, None, small_config(kq=2, ks=2))
    assert len(graph.dropped) == 1
    assert graph.dropped[0][0] == 1


def test_pinned_counts_clamp_to_corpus(schools, kb, corpus):
    graph = build_graph(
        graph_pairs(corpus), schools, kb,
        GraphConfig(question_clusters=50, skeleton_clusters=150, seed=0),
    )
    n = len(corpus)
    assert len(graph.question_clusters) <= 50
    assert len(graph.skeleton_clusters) <= 150
    assert len(graph.question_clusters) <= n and len(graph.skeleton_clusters) <= n


def test_round_trip_exact(schools, kb, corpus, tmp_path):
    graph = build_graph(graph_pairs(corpus), schools, kb, small_config())
    path = tmp_path / "graph.json"
    store_graph(graph, path)
    assert load_graph(path) == graph
    assert graph_from_dict(graph_to_dict(graph)) == graph


def test_rebuild_is_deterministic(schools, kb, corpus):
    a = build_graph(graph_pairs(corpus), schools, kb, small_config(seed=21))
    b = build_graph(graph_pairs(corpus), schools, kb, small_config(seed=21))
    assert a == b
    assert [s.text for s in representative_queries(a)] == [
        s.text for s in representative_queries(b)
    ]


def test_representatives_one_per_cluster_in_id_order(schools, kb, corpus):
    graph = build_graph(graph_pairs(corpus), schools, kb, small_config())
    reps = representative_queries(graph)
    assert len(reps) == len(graph.skeleton_clusters)
    ordered = sorted(graph.skeleton_clusters, key=lambda sc: sc.id)
    assert [r.text for r in reps] == [
        sc.medoid_skeleton for sc in ordered
    ]


def hand_graph(dim=32):
    e0 = HashingEmbedder(dim).embed("how many rows are there").values
    e1 = HashingEmbedder(dim).embed("list the names please").values
    return PatternGraph(
        graph_id="hand",
        embed_dimension=dim,
        question_clusters=(
            QuestionCluster(0, tuple(float(v) for v in e0), "how many rows are there"),
            QuestionCluster(1, tuple(float(v) for v in e1), "list the names please"),
        ),
        skeleton_clusters=(
            SkeletonCluster(0, "SELECT COUNT(*) FROM _T", 3),
            SkeletonCluster(1, "SELECT _C FROM _T", 2),
            SkeletonCluster(2, "SELECT _C FROM _T WHERE _C = _V", 1),
        ),
        edges=(
            Edge(0, 0, 3, 0.75),
            Edge(0, 2, 1, 0.25),
            Edge(1, 1, 4, 1.0),
        ),
    )


def test_concentrated_mixture_returns_that_medoid():
    graph = PatternGraph(
        graph_id="one",
        embed_dimension=16,
        question_clusters=(
            QuestionCluster(0, tuple(HashingEmbedder(16).embed("alpha").values), "alpha"),
        ),
        skeleton_clusters=(SkeletonCluster(0, "SELECT COUNT(*) FROM _T", 1),),
        edges=(Edge(0, 0, 5, 1.0),),
    )
    for seed in range(5):
        out = retrieve_skeletons("anything at all", graph, 1, seed=seed)
        assert [s.text for s in out] == ["SELECT COUNT(*) FROM _T"]


def test_k4_equal_to_cluster_count_returns_permutation():
    graph = hand_graph()
    out = retrieve_skeletons("how many rows are there", graph, 3, seed=9)
    texts = {s.text for s in out}
    # the question sits on cluster 0; nonzero mass covers all three clusters
    # through the two-cluster mixture
    assert len(out) == len(texts)
    mixture = mixture_distribution("how many rows are there", graph)
    assert texts == {
        graph.skeleton_cluster(cid).medoid_skeleton for cid in mixture if mixture[cid] > 0
    }


def test_k4_larger_than_mass_returns_all_nonzero(schools, kb, corpus):
    graph = build_graph(graph_pairs(corpus), schools, kb, small_config())
    question = corpus[0]["question"]
    mixture = mixture_distribution(question, graph, schools, kb)
    nonzero = {cid for cid, p in mixture.items() if p > 0}
    out = retrieve_skeletons(question, graph, k4=999, seed=0, schema=schools, kb=kb)
    assert len(out) == len(nonzero)


def test_mixture_weights_follow_two_cluster_formula():
    graph = hand_graph()
    mixture = mixture_distribution("how many rows are there", graph)
    assert abs(sum(mixture.values()) - 1.0) <= PROB_TOL
    # cluster 0 edges dominate; skeleton 0 must carry more mass than skeleton 2
    assert mixture.get(0, 0.0) > mixture.get(2, 0.0)


def test_retrieval_empirical_frequency_tracks_mixture():
    graph = hand_graph()
    question = "how many rows are there"
    mixture = mixture_distribution(question, graph)
    draws = 10_000
    counts = collections.Counter(
        retrieve_skeletons(question, graph, 1, seed=seed)[0].text for seed in range(draws)
    )
    text_of = {sc.id: sc.medoid_skeleton for sc in graph.skeleton_clusters}
    observed = np.array([counts.get(text_of[cid], 0) for cid in sorted(mixture)])
    expected = np.array([mixture[cid] * draws for cid in sorted(mixture)])
    result = stats.chisquare(observed, expected)
    assert result.pvalue > 0.01
    # dominant cluster frequency within 2 points of its mixture mass
    top = max(mixture, key=mixture.get)
    assert abs(counts[text_of[top]] / draws - mixture[top]) < 0.02


def test_cypher_export_covers_all_nodes_and_edges():
    graph = hand_graph()
    cypher = export_cypher(graph)
    assert cypher.count("CREATE (:QuestionCluster") == 2
    assert cypher.count("CREATE (:SkeletonCluster") == 3
    assert cypher.count("GENERATES") == 3
    assert "prob: 0.75" in cypher


def test_build_requires_two_pairs(schools):
    with pytest.raises(ValueError):
        build_graph([("q", "SELECT 1")], schools, None, small_config())
