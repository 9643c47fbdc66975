"""Seeded k-means under cosine distance with silhouette-based model selection.

Initialization is farthest-first from a seeded starting point, so a fixed seed
gives a bit-identical clustering. Empty clusters are repaired by stealing the
point currently farthest from its own centroid. Singleton clusters contribute
a silhouette term of 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_LLOYD_ITERATIONS = 100


@dataclass(frozen=True)
class Clustering:
    k: int
    assignments: tuple[int, ...]
    centroids: np.ndarray
    medoid_ids: tuple[int, ...]
    mean_silhouette: float
    objective_history: tuple[float, ...] = ()


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return x / safe


def _cosine_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 1.0 - _unit_rows(a) @ _unit_rows(b).T


class CosineKMeans:
    """Estimator-style wrapper; ``fit`` exposes labels_, centers and medoids."""

    def __init__(self, n_clusters: int, seed: int = 0, max_iter: int = MAX_LLOYD_ITERATIONS):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter

    def get_params(self) -> dict:
        return {"n_clusters": self.n_clusters, "seed": self.seed, "max_iter": self.max_iter}

    def fit(self, x: np.ndarray) -> "CosineKMeans":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        k = self.n_clusters
        if not 2 <= k <= n:
            raise ValueError(f"k={k} out of range for n={n}")
        units = _unit_rows(x)

        rng = np.random.Generator(np.random.PCG64(self.seed))
        centers_idx = [int(rng.integers(n))]
        dist_to_chosen = _cosine_distance_matrix(x, x[centers_idx])
        min_dist = dist_to_chosen[:, 0]
        while len(centers_idx) < k:
            nxt = int(np.argmax(min_dist))  # argmax takes the first (smallest index) on ties
            centers_idx.append(nxt)
            min_dist = np.minimum(min_dist, _cosine_distance_matrix(x, x[[nxt]])[:, 0])
        centroids = _unit_rows(x[centers_idx].copy())

        assignments = np.full(n, -1, dtype=int)
        history: list[float] = []
        for _ in range(self.max_iter):
            sims = units @ centroids.T
            new_assign = np.argmax(sims, axis=1)
            new_assign = self._repair_empty(new_assign, sims, k)
            history.append(float(np.sum(1.0 - sims[np.arange(n), new_assign])))
            if np.array_equal(new_assign, assignments):
                break
            assignments = new_assign
            for c in range(k):
                members = units[assignments == c]
                mean = members.mean(axis=0)
                norm = float(np.linalg.norm(mean))
                centroids[c] = mean / norm if norm > 0 else mean

        sims = units @ centroids.T
        medoids = []
        for c in range(k):
            member_ids = np.flatnonzero(assignments == c)
            best = member_ids[int(np.argmax(sims[member_ids, c]))]
            medoids.append(int(best))

        self.labels_ = tuple(int(a) for a in assignments)
        self.cluster_centers_ = centroids
        self.medoid_indices_ = tuple(medoids)
        self.objective_history_ = tuple(history)
        self.silhouette_ = mean_silhouette(x, self.labels_)
        return self

    @staticmethod
    def _repair_empty(assignments: np.ndarray, sims: np.ndarray, k: int) -> np.ndarray:
        assignments = assignments.copy()
        for c in range(k):
            if np.any(assignments == c):
                continue
            counts = np.bincount(assignments, minlength=k)
            movable = np.flatnonzero(counts[assignments] > 1)
            # farthest point from its current centroid, i.e. lowest similarity
            own_sims = sims[movable, assignments[movable]]
            victim = movable[int(np.argmin(own_sims))]
            assignments[victim] = c
        return assignments

    def predict(self, x: np.ndarray) -> np.ndarray:
        sims = _unit_rows(np.asarray(x, dtype=float)) @ self.cluster_centers_.T
        return np.argmax(sims, axis=1)


def mean_silhouette(x: np.ndarray, assignments) -> float:
    """Standard a/b silhouette under cosine distance; singletons count as 0."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(assignments, dtype=int)
    n = x.shape[0]
    unique = np.unique(labels)
    if len(unique) <= 1:
        return 0.0
    dist = _cosine_distance_matrix(x, x)
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        own_mask = labels == own
        own_size = int(own_mask.sum())
        if own_size <= 1:
            scores[i] = 0.0
            continue
        a = float(dist[i, own_mask].sum() - dist[i, i]) / (own_size - 1)
        b = min(
            float(dist[i, labels == other].mean()) for other in unique if other != own
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def kmeans(vectors, k: int, seed: int = 0) -> Clustering:
    """Cluster row vectors into k groups; deterministic for a fixed seed."""
    model = CosineKMeans(n_clusters=k, seed=seed).fit(np.asarray(vectors, dtype=float))
    return Clustering(
        k=k,
        assignments=model.labels_,
        centroids=model.cluster_centers_,
        medoid_ids=model.medoid_indices_,
        mean_silhouette=model.silhouette_,
        objective_history=model.objective_history_,
    )


def select_k(vectors, k_min: int, k_max: int, seed: int = 0) -> Clustering:
    """Sweep k in [k_min, k_max], return the clustering with the best mean
    silhouette; ties go to the smallest k."""
    x = np.asarray(vectors, dtype=float)
    n = x.shape[0]
    if not (2 <= k_min <= k_max <= n - 1):
        raise ValueError(f"invalid sweep range [{k_min}, {k_max}] for n={n}")
    best: Clustering | None = None
    for k in range(k_min, k_max + 1):
        result = kmeans(x, k, seed)
        if best is None or result.mean_silhouette > best.mean_silhouette + 1e-12:
            best = result
    return best
