"""Bipartite pattern graph: question clusters to skeleton clusters.

Edges carry co-occurrence counts from the original question-SQL pairs and the
conditional probability of a skeleton cluster given the question cluster.
Retrieval embeds an incoming question, finds its two nearest question
clusters, mixes their outgoing distributions proportionally to (clipped)
similarity, and samples skeleton clusters without replacement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import kmeans
from .errors import InvariantViolation, SqlParseError, UnsupportedSqlError
from .knowledge import KnowledgeBase
from .schema import DatabaseSchema
from .skeleton import SqlSkeleton, skeletonize
from .textproc import EmbedConfig, HashingEmbedder, cosine, mask_question, stack_tfidf, tfidf_corpus

PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GraphConfig:
    question_clusters: int | None = 50  # None -> silhouette sweep
    skeleton_clusters: int | None = 150
    question_sweep: tuple[int, int] = (2, 10)
    skeleton_sweep: tuple[int, int] = (2, 12)
    seed: int = 0
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    graph_id: str = "pattern-graph"


@dataclass(frozen=True)
class QuestionCluster:
    id: int
    centroid: tuple[float, ...]
    medoid_question: str


@dataclass(frozen=True)
class SkeletonCluster:
    id: int
    medoid_skeleton: str
    members: int
    medoid_question: str = ""
    medoid_sql: str = ""


@dataclass(frozen=True)
class Edge:
    q_cluster: int
    s_cluster: int
    count: int
    prob: float


@dataclass(frozen=True)
class PatternGraph:
    graph_id: str
    embed_dimension: int
    question_clusters: tuple[QuestionCluster, ...]
    skeleton_clusters: tuple[SkeletonCluster, ...]
    edges: tuple[Edge, ...]
    dropped: tuple[tuple[int, str], ...] = ()  # (pair index, reason)

    def validate(self) -> None:
        totals: dict[int, float] = {}
        for e in self.edges:
            if e.count < 1:
                raise InvariantViolation("zero-count edge stored")
            totals[e.q_cluster] = totals.get(e.q_cluster, 0.0) + e.prob
        for q_id, total in totals.items():
            if abs(total - 1.0) > PROB_TOLERANCE:
                raise InvariantViolation(
                    f"edge probabilities for question cluster {q_id} sum to {total!r}"
                )

    def edges_from(self, q_cluster: int) -> list[Edge]:
        return [e for e in self.edges if e.q_cluster == q_cluster]

    def skeleton_cluster(self, cluster_id: int) -> SkeletonCluster:
        for sc in self.skeleton_clusters:
            if sc.id == cluster_id:
                return sc
        raise KeyError(cluster_id)


def build_graph(
    pairs: list[tuple[str, str]],
    schema: DatabaseSchema,
    kb: KnowledgeBase | None = None,
    config: GraphConfig = GraphConfig(),
) -> PatternGraph:
    """Cluster questions and skeletons, then count cluster co-occurrences.

    A pair is dropped (and recorded in ``graph.dropped``) only when its SQL
    cannot be skeletonized.
    """
    if len(pairs) < 2:
        raise ValueError("need at least 2 question-SQL pairs")
    kept: list[tuple[str, str, SqlSkeleton]] = []
    dropped: list[tuple[int, str]] = []
    for idx, (question, sql) in enumerate(pairs):
        try:
            kept.append((question, sql, skeletonize(sql)))
        except (SqlParseError, UnsupportedSqlError) as exc:
            dropped.append((idx, str(exc)))
    if len(kept) < 2:
        raise ValueError("fewer than 2 parseable pairs")

    n = len(kept)
    embedder = HashingEmbedder(config.embed.dimension)
    q_vectors = np.vstack(
        [embedder.embed(mask_question(q, schema, kb).text).values for q, _, _ in kept]
    )
    s_vectors = stack_tfidf(tfidf_corpus([sk for _, _, sk in kept]))

    k_q = _effective_k(config.question_clusters, config.question_sweep, n)
    k_s = _effective_k(config.skeleton_clusters, config.skeleton_sweep, n)
    q_clust = _cluster(q_vectors, k_q, config.seed)
    s_clust = _cluster(s_vectors, k_s, config.seed + 1)

    counts: dict[tuple[int, int], int] = {}
    for i in range(n):
        key = (q_clust.assignments[i], s_clust.assignments[i])
        counts[key] = counts.get(key, 0) + 1
    totals: dict[int, int] = {}
    for (qc, _), c in counts.items():
        totals[qc] = totals.get(qc, 0) + c
    edges = tuple(
        Edge(q_cluster=qc, s_cluster=sc, count=c, prob=c / totals[qc])
        for (qc, sc), c in sorted(counts.items())
    )

    question_clusters = tuple(
        QuestionCluster(
            id=c,
            centroid=tuple(float(v) for v in q_clust.centroids[c]),
            medoid_question=kept[q_clust.medoid_ids[c]][0],
        )
        for c in range(q_clust.k)
    )
    skeleton_clusters = tuple(
        SkeletonCluster(
            id=c,
            medoid_skeleton=kept[s_clust.medoid_ids[c]][2].text,
            members=sum(1 for a in s_clust.assignments if a == c),
            medoid_question=kept[s_clust.medoid_ids[c]][0],
            medoid_sql=kept[s_clust.medoid_ids[c]][1],
        )
        for c in range(s_clust.k)
    )
    graph = PatternGraph(
        graph_id=config.graph_id,
        embed_dimension=config.embed.dimension,
        question_clusters=question_clusters,
        skeleton_clusters=skeleton_clusters,
        edges=edges,
        dropped=tuple(dropped),
    )
    graph.validate()
    return graph


def _effective_k(pinned: int | None, sweep: tuple[int, int], n: int) -> int | tuple[int, int]:
    if pinned is not None:
        return max(2, min(pinned, n))
    return (max(2, min(sweep[0], n - 1)), max(2, min(sweep[1], n - 1)))


def _cluster(vectors: np.ndarray, k, seed: int):
    if isinstance(k, tuple):
        from .clustering import select_k

        return select_k(vectors, k[0], k[1], seed)
    return kmeans(vectors, k, seed)


# -- retrieval ---------------------------------------------------------------------


def _embed_question(
    q: str, graph: PatternGraph, schema: DatabaseSchema | None, kb: KnowledgeBase | None
) -> np.ndarray:
    effective_schema = schema or DatabaseSchema(db_id="", tables=[])
    masked = mask_question(q, effective_schema, kb).text
    return HashingEmbedder(graph.embed_dimension).embed(masked).values


def mixture_distribution(
    q: str,
    graph: PatternGraph,
    schema: DatabaseSchema | None = None,
    kb: KnowledgeBase | None = None,
) -> dict[int, float]:
    """Skeleton-cluster distribution for a question: the similarity-weighted
    mixture of its two nearest question clusters' outgoing probabilities."""
    if not graph.question_clusters:
        raise ValueError("empty graph")
    vec = _embed_question(q, graph, schema, kb)
    sims = [
        (cosine(vec, np.asarray(qc.centroid)), qc.id) for qc in graph.question_clusters
    ]
    sims.sort(key=lambda t: (-t[0], t[1]))
    nearest = sims[:2]
    clipped = [max(s, 0.0) for s, _ in nearest]
    total = sum(clipped)
    if total == 0.0:
        weights = [1.0 / len(nearest)] * len(nearest)
    else:
        weights = [c / total for c in clipped]
    mixture: dict[int, float] = {}
    for (_, q_id), w in zip(nearest, weights):
        if w == 0.0:
            continue
        for e in graph.edges_from(q_id):
            mixture[e.s_cluster] = mixture.get(e.s_cluster, 0.0) + w * e.prob
    return mixture


def retrieve_skeletons(
    q: str,
    graph: PatternGraph,
    k4: int,
    seed: int = 0,
    schema: DatabaseSchema | None = None,
    kb: KnowledgeBase | None = None,
) -> list[SqlSkeleton]:
    """Sample k4 distinct skeleton clusters by mixture weight; return medoids.

    Sampling is without replacement via sequential renormalized draws under the
    given seed. If fewer clusters carry mass than k4, all of them are returned.
    """
    if k4 < 1:
        raise ValueError("k4 must be >= 1")
    mixture = mixture_distribution(q, graph, schema, kb)
    remaining = {cid: p for cid, p in mixture.items() if p > 0.0}
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen: list[int] = []
    while remaining and len(chosen) < k4:
        total = sum(remaining.values())
        r = rng.random() * total
        acc = 0.0
        picked = None
        for cid in sorted(remaining):
            acc += remaining[cid]
            if r < acc:
                picked = cid
                break
        if picked is None:  # numeric edge: fall back to the last cluster
            picked = max(remaining)
        chosen.append(picked)
        del remaining[picked]
    return [skeletonize(graph.skeleton_cluster(cid).medoid_skeleton) for cid in chosen]


def representative_queries(graph: PatternGraph) -> list[SqlSkeleton]:
    """Medoid skeleton of every skeleton cluster, in stable cluster-id order."""
    if not graph.skeleton_clusters:
        raise ValueError("empty graph")
    ordered = sorted(graph.skeleton_clusters, key=lambda sc: sc.id)
    return [skeletonize(sc.medoid_skeleton) for sc in ordered]


# -- persistence ----------------------------------------------------------------


def graph_to_dict(graph: PatternGraph) -> dict:
    return {
        "graph_id": graph.graph_id,
        "embed_dimension": graph.embed_dimension,
        "question_clusters": [
            {"id": qc.id, "centroid": list(qc.centroid), "medoid_question": qc.medoid_question}
            for qc in graph.question_clusters
        ],
        "skeleton_clusters": [
            {
                "id": sc.id,
                "medoid_skeleton": sc.medoid_skeleton,
                "members": sc.members,
                "medoid_question": sc.medoid_question,
                "medoid_sql": sc.medoid_sql,
            }
            for sc in graph.skeleton_clusters
        ],
        "edges": [
            {"q_cluster": e.q_cluster, "s_cluster": e.s_cluster, "count": e.count, "prob": e.prob}
            for e in graph.edges
        ],
        "dropped": [[idx, reason] for idx, reason in graph.dropped],
    }


def graph_from_dict(data: dict) -> PatternGraph:
    graph = PatternGraph(
        graph_id=data["graph_id"],
        embed_dimension=int(data["embed_dimension"]),
        question_clusters=tuple(
            QuestionCluster(
                id=int(qc["id"]),
                centroid=tuple(float(v) for v in qc["centroid"]),
                medoid_question=qc["medoid_question"],
            )
            for qc in data.get("question_clusters", [])
        ),
        skeleton_clusters=tuple(
            SkeletonCluster(
                id=int(sc["id"]),
                medoid_skeleton=sc["medoid_skeleton"],
                members=int(sc["members"]),
                medoid_question=sc.get("medoid_question", ""),
                medoid_sql=sc.get("medoid_sql", ""),
            )
            for sc in data.get("skeleton_clusters", [])
        ),
        edges=tuple(
            Edge(
                q_cluster=int(e["q_cluster"]),
                s_cluster=int(e["s_cluster"]),
                count=int(e["count"]),
                prob=float(e["prob"]),
            )
            for e in data.get("edges", [])
        ),
        dropped=tuple((int(i), str(r)) for i, r in data.get("dropped", [])),
    )
    graph.validate()
    return graph


def store_graph(graph: PatternGraph, path: str | Path) -> None:
    graph.validate()
    Path(path).write_text(
        json.dumps(graph_to_dict(graph), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_graph(path: str | Path) -> PatternGraph:
    return graph_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def export_cypher(graph: PatternGraph) -> str:
    """Cypher statement stream for loading the graph into a graph database."""
    lines = []
    for qc in graph.question_clusters:
        props = json.dumps(qc.medoid_question, ensure_ascii=False)
        lines.append(
            f"CREATE (:QuestionCluster {{id: {qc.id}, medoid_question: {props}}});"
        )
    for sc in graph.skeleton_clusters:
        skel = json.dumps(sc.medoid_skeleton, ensure_ascii=False)
        lines.append(
            f"CREATE (:SkeletonCluster {{id: {sc.id}, medoid_skeleton: {skel}, "
            f"members: {sc.members}}});"
        )
    for e in graph.edges:
        lines.append(
            f"MATCH (q:QuestionCluster {{id: {e.q_cluster}}}), "
            f"(s:SkeletonCluster {{id: {e.s_cluster}}}) "
            f"CREATE (q)-[:GENERATES {{count: {e.count}, prob: {e.prob}}}]->(s);"
        )
    return "\n".join(lines) + "\n"
