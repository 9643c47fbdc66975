"""Cosine k-means and silhouette selection against independent oracles."""

import itertools

import numpy as np
import pytest

from sqlknow.clustering import CosineKMeans, kmeans, select_k


def cosine_distance(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return 1.0 - float(np.dot(a, b) / (na * nb))


def brute_force_two_partition(points):
    """Oracle: the 2-partition minimizing total within-cluster pairwise distance."""
    n = len(points)
    best, best_cost = None, None
    for assignment in itertools.product([0, 1], repeat=n):
        if len(set(assignment)) < 2:
            continue
        cost = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                if assignment[i] == assignment[j]:
                    cost += cosine_distance(points[i], points[j])
        if best_cost is None or cost < best_cost:
            best, best_cost = assignment, cost
    return best


def silhouette_oracle(points, labels):
    """Straight transcription of the a/b formula from the distance matrix."""
    n = len(points)
    labels = list(labels)
    scores = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            scores.append(0.0)
            continue
        a = sum(cosine_distance(points[i], points[j]) for j in own) / len(own)
        b = min(
            sum(cosine_distance(points[i], points[j]) for j in range(n) if labels[j] == other)
            / sum(1 for j in range(n) if labels[j] == other)
            for other in set(labels)
            if other != labels[i]
        )
        denom = max(a, b)
        scores.append(0.0 if denom == 0 else (b - a) / denom)
    return sum(scores) / n


def test_two_separated_groups_recovered_exactly():
    points = np.array([[1.0, 0.02], [1.0, -0.02], [-1.0, 0.03], [-1.0, -0.03]])
    oracle = brute_force_two_partition(points)
    result = kmeans(points, 2, seed=13)
    same = [result.assignments[i] == result.assignments[0] for i in range(4)]
    oracle_same = [oracle[i] == oracle[0] for i in range(4)]
    assert same == oracle_same


def test_k_equals_n_gives_singletons_with_zero_silhouette():
    points = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    result = kmeans(points, 4, seed=0)
    assert sorted(result.assignments) == [0, 1, 2, 3]
    assert result.mean_silhouette == 0.0


def test_fixed_seed_is_deterministic():
    rng = np.random.default_rng(7)
    points = rng.normal(size=(30, 6))
    a = kmeans(points, 4, seed=99)
    b = kmeans(points, 4, seed=99)
    assert a.assignments == b.assignments
    assert np.array_equal(a.centroids, b.centroids)
    assert a.medoid_ids == b.medoid_ids


def test_k_out_of_range():
    points = np.eye(3)
    with pytest.raises(ValueError):
        kmeans(points, 1, seed=0)
    with pytest.raises(ValueError):
        kmeans(points, 4, seed=0)


def test_every_cluster_nonempty_and_medoids_belong():
    rng = np.random.default_rng(3)
    points = rng.normal(size=(50, 8))
    result = kmeans(points, 7, seed=5)
    for c in range(7):
        assert c in result.assignments
        assert result.assignments[result.medoid_ids[c]] == c


def test_objective_non_increasing():
    rng = np.random.default_rng(11)
    points = rng.normal(size=(60, 5))
    history = kmeans(points, 5, seed=2).objective_history
    assert all(history[i + 1] <= history[i] + 1e-9 for i in range(len(history) - 1))


def test_silhouette_matches_oracle_on_two_pairs():
    points = np.array([[1.0, 0.05], [1.0, -0.05], [-0.2, 1.0], [0.2, 1.0]])
    result = kmeans(points, 2, seed=1)
    expected = silhouette_oracle(points, result.assignments)
    assert abs(result.mean_silhouette - expected) < 1e-9


def test_select_k_finds_three_triplets():
    rng = np.random.default_rng(0)
    base = np.eye(3)
    points = np.vstack([b + rng.normal(0, 0.01, size=(3, 3)) for b in base])
    # independent exhaustive check of the swept range
    oracle_scores = {}
    for k in range(2, 6):
        labels = kmeans(points, k, seed=4).assignments
        oracle_scores[k] = silhouette_oracle(points, labels)
    assert max(oracle_scores, key=oracle_scores.get) == 3
    best = select_k(points, 2, 5, seed=4)
    assert best.k == 3
    assert all(best.mean_silhouette >= s - 1e-12 for s in oracle_scores.values())


def test_select_k_degenerate_identical_points():
    points = np.ones((8, 4))
    best = select_k(points, 2, 5, seed=0)
    assert best.k == 2
    assert best.mean_silhouette == 0.0


def test_select_k_two_separated_pairs_hand_silhouette():
    points = np.array([[1.0, 0.0], [0.995, 0.1], [0.0, 1.0], [0.1, 0.995]])
    best = select_k(points, 2, 3, seed=8)
    assert best.k == 2
    expected = silhouette_oracle(points, best.assignments)
    assert abs(best.mean_silhouette - expected) < 1e-9


def test_select_k_invalid_range():
    points = np.eye(4)
    with pytest.raises(ValueError):
        select_k(points, 2, 4, seed=0)  # k_max must be <= n-1
    with pytest.raises(ValueError):
        select_k(points, 3, 2, seed=0)


def test_estimator_api_fit_predict():
    points = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
    model = CosineKMeans(n_clusters=2, seed=0).fit(points)
    assert model.get_params()["n_clusters"] == 2
    predictions = model.predict(np.array([[1.0, 0.05], [0.05, 1.0]]))
    assert predictions[0] == model.labels_[0]
    assert predictions[1] == model.labels_[2]
