"""Trajectory similarity features and X-means clustering.

Each optimal trajectory is encoded by its row of the similarity matrix
D(n, m) = sum_k ||x_k^n - x_k^m||_M. X-means grows the number of clusters by
2-means split tests on each cluster, accepting a split when it lowers the
information criterion of that cluster's points. The criterion is the mixed
criterion -L + g (d/2) log R + (1 - g) d, which is BIC for g = 1 and AIC for
g = 0; by default g is the between-cluster share of the total variance.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
from sklearn.cluster import KMeans

from stlcluster.domain import InsufficientDataError, TrajectoryLengthMismatchError
from stlcluster.domain.scenario import Trajectory
from stlcluster.utils.logging import get_logger
from stlcluster.utils.seeding import derive_seed

logger = get_logger(__name__)

VARIANCE_FLOOR = 1e-9
MIN_SPLIT_SIZE = 2
CRITERIA = ("mic", "bic", "aic")


@dataclass
class SimilarityMatrix:
    """Pairwise cumulative distances between N trajectories.

    Attributes:
        distances: (N, N) symmetric, non-negative, zero diagonal
        weight: (n_x, n_x) positive semi-definite matrix M
        norm: "sqrt" for sqrt(e^T M e) per time step, "quadratic" for e^T M e
    """

    distances: np.ndarray
    weight: np.ndarray
    norm: str = "sqrt"

    @property
    def size(self) -> int:
        return self.distances.shape[0]


def position_selector(state_dim: int, dims: Sequence[int] = (0, 1)) -> np.ndarray:
    """Diagonal weight matrix with ones on the selected state components."""
    weight = np.zeros((state_dim, state_dim))
    for d in dims:
        weight[d, d] = 1.0
    return weight


def _states_array(item: Any) -> np.ndarray:
    if isinstance(item, Trajectory):
        return item.states.detach().numpy()
    if hasattr(item, "states"):
        states = item.states
        if isinstance(states, torch.Tensor):
            return states.detach().numpy()
        return np.asarray(states, dtype=np.float64)
    return np.asarray(item, dtype=np.float64)


def similarity_matrix(
    trajectories: Sequence[Any],
    weight: np.ndarray | None = None,
    norm: str = "sqrt",
    workers: int = 1,
) -> SimilarityMatrix:
    """Compute D(n, m) for every pair of trajectories.

    Args:
        trajectories: Trajectories, optimal records or (T+1, n_x) arrays
        weight: PSD matrix M; defaults to the planar position selector
        norm: Per-step distance, "sqrt" or "quadratic"
        workers: Threads computing rows in parallel

    Returns:
        SimilarityMatrix with rows computed over n <= m and mirrored

    Raises:
        TrajectoryLengthMismatchError: If two trajectories differ in shape
    """
    if norm not in ("sqrt", "quadratic"):
        raise ValueError(f"Invalid similarity norm: {norm}. Use 'sqrt' or 'quadratic'")

    arrays = [_states_array(t) for t in trajectories]
    if not arrays:
        return SimilarityMatrix(np.zeros((0, 0)), np.zeros((0, 0)), norm)
    for i, array in enumerate(arrays[1:], start=1):
        if array.shape != arrays[0].shape:
            raise TrajectoryLengthMismatchError(
                f"Trajectory {i} has shape {array.shape}, trajectory 0 has {arrays[0].shape}",
                indices=(0, i),
            )
    stacked = np.stack(arrays)
    n, _, n_x = stacked.shape
    if weight is None:
        weight = position_selector(n_x, dims=tuple(range(min(2, n_x))))
    weight = np.asarray(weight, dtype=np.float64)

    distances = np.zeros((n, n))

    def fill_row(row: int) -> None:
        diff = stacked[row + 1 :] - stacked[row]
        quadratic = np.einsum("mki,ij,mkj->mk", diff, weight, diff)
        quadratic = np.maximum(quadratic, 0.0)
        per_step = np.sqrt(quadratic) if norm == "sqrt" else quadratic
        distances[row, row + 1 :] = per_step.sum(axis=1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill_row, range(n)))
    else:
        for row in range(n):
            fill_row(row)

    upper = np.triu(distances, k=1)
    return SimilarityMatrix(upper + upper.T, weight, norm)


def feature_vectors(
    matrix: SimilarityMatrix, anchors: int | None = None, seed: int = 0
) -> np.ndarray:
    """Feature vector z^n = row n of D, one row per trajectory.

    Args:
        matrix: Complete similarity matrix
        anchors: If given, keep only the distances to a random subset of
            min(N, anchors) trajectories (columns in increasing order)
        seed: Seed for the anchor subset

    Returns:
        (N, N) array, or (N, min(N, anchors)) with anchors
    """
    features = matrix.distances.copy()
    if anchors is None or anchors >= matrix.size:
        return features
    rng = np.random.default_rng(seed)
    columns = np.sort(rng.choice(matrix.size, size=anchors, replace=False))
    return features[:, columns]


def _partition(points: np.ndarray, labels: np.ndarray) -> list[np.ndarray]:
    return [points[labels == label] for label in np.unique(labels)]


def variance_weight(points: np.ndarray, labels: np.ndarray) -> float:
    """Between-cluster share of the total variance, V_b / (V_b + V_w).

    Returns 0 when both variances are zero.
    """
    points = np.asarray(points, dtype=np.float64)
    overall = points.mean(axis=0)
    within = 0.0
    between = 0.0
    for members in _partition(points, np.asarray(labels)):
        center = members.mean(axis=0)
        within += float(((members - center) ** 2).sum())
        between += len(members) * float(((center - overall) ** 2).sum())
    total = within + between
    return 0.0 if total == 0.0 else between / total


def log_likelihood(points: np.ndarray, labels: np.ndarray) -> float:
    """Log-likelihood of a spherical Gaussian mixture fitted per cluster.

    Each cluster has its MLE center and variance (floored at VARIANCE_FLOOR)
    and mixing weight N_p / R.
    """
    points = np.asarray(points, dtype=np.float64)
    total, dim = points.shape
    value = 0.0
    for members in _partition(points, np.asarray(labels)):
        size = len(members)
        center = members.mean(axis=0)
        scatter = float(((members - center) ** 2).sum())
        variance = max(scatter / (size * dim), VARIANCE_FLOOR)
        value += (
            size * math.log(size / total)
            - 0.5 * size * dim * math.log(2.0 * math.pi * variance)
            - scatter / (2.0 * variance)
        )
    return value


def free_parameters(n_clusters: int, dim: int) -> int:
    """Centers, one variance per cluster and the mixing weights."""
    return n_clusters * (dim + 1) + n_clusters - 1


def mic(points: np.ndarray, labels: np.ndarray, gamma: float | None = None) -> float:
    """Mixed information criterion of a partition; lower is better.

    Args:
        points: (R, dim) cluster member features
        labels: Cluster label per point
        gamma: Weight between BIC (1) and AIC (0); computed with
            variance_weight() when None

    Returns:
        -L + gamma * (d/2) * log(R) + (1 - gamma) * d

    Example:
        >>> points = np.array([[0.0], [1.0]])
        >>> mic(points, np.zeros(2, dtype=int), gamma=0.0)  # AIC
        3.4515827...
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    labels = np.asarray(labels)
    if len(points) == 0:
        raise InsufficientDataError("Criterion needs at least one point", count=0, required=1)
    if gamma is None:
        gamma = variance_weight(points, labels)
    d = free_parameters(len(np.unique(labels)), points.shape[1])
    return -log_likelihood(points, labels) + gamma * (d / 2.0) * math.log(len(points)) + (
        1.0 - gamma
    ) * d


def bic(points: np.ndarray, labels: np.ndarray) -> float:
    return mic(points, labels, gamma=1.0)


def aic(points: np.ndarray, labels: np.ndarray) -> float:
    return mic(points, labels, gamma=0.0)


def score_partition(
    points: np.ndarray, labels: np.ndarray, criterion: str = "mic", gamma: float | None = None
) -> float:
    """Information criterion selected by name; ``gamma`` fixes the MIC weight."""
    if criterion == "mic":
        return mic(points, labels, gamma)
    if criterion == "bic":
        return bic(points, labels)
    if criterion == "aic":
        return aic(points, labels)
    raise ValueError(f"Invalid criterion: {criterion}. Use one of {CRITERIA}")


@dataclass
class ClusterModel:
    """Result of X-means.

    Attributes:
        n_clusters: Number of clusters n_c
        labels: 0-based label per trajectory, numbered by first appearance
        centroids: (n_c, dim) cluster means in feature space
        sizes: Members per cluster N_p
        score: Criterion value of the final partition
        criterion: Name of the criterion used
        score_trace: Criterion of the global partition after each round
    """

    n_clusters: int
    labels: np.ndarray
    centroids: np.ndarray
    sizes: list[int]
    score: float
    criterion: str = "mic"
    score_trace: list[float] = field(default_factory=list)

    def assignment_rows(self) -> list[dict[str, int]]:
        return [{"n": n, "label": int(label)} for n, label in enumerate(self.labels)]

    def report(self) -> dict[str, Any]:
        return {
            "n_clusters": self.n_clusters,
            "sizes": self.sizes,
            "criterion": self.criterion,
            "score": self.score,
            "score_trace": self.score_trace,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.report(),
            "labels": [int(v) for v in self.labels],
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ClusterModel:
        return cls(
            n_clusters=int(data["n_clusters"]),
            labels=np.asarray(data["labels"], dtype=np.int64),
            centroids=np.asarray(data["centroids"], dtype=np.float64),
            sizes=[int(s) for s in data["sizes"]],
            score=float(data["score"]),
            criterion=data.get("criterion", "mic"),
            score_trace=[float(s) for s in data.get("score_trace", [])],
        )


def _kmeans(n_clusters: int, seed: int, init: np.ndarray | None = None) -> KMeans:
    random_state = seed % (2**32)
    if init is None:
        return KMeans(n_clusters=n_clusters, init="k-means++", n_init=10, random_state=random_state)
    return KMeans(n_clusters=n_clusters, init=init, n_init=1, random_state=random_state)


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    mapping: dict[int, int] = {}
    for label in labels:
        mapping.setdefault(int(label), len(mapping))
    return np.array([mapping[int(label)] for label in labels], dtype=np.int64)


def _centroids(points: np.ndarray, labels: np.ndarray, n_clusters: int) -> np.ndarray:
    return np.stack([points[labels == p].mean(axis=0) for p in range(n_clusters)])


def xmeans(
    features: np.ndarray,
    k_min: int = 1,
    k_max: int = 16,
    seed: int = 0,
    criterion: str = "mic",
    gamma: float | None = None,
) -> ClusterModel:
    """Cluster feature vectors with X-means.

    Starts from k_min clusters (k-means++), then repeatedly tries a 2-means
    split of every cluster and accepts it when the criterion of the split
    pair is lower than that of the parent alone. Stops at a fixed point or
    at k_max clusters, then refines all centers with a global k-means.

    Args:
        features: (N, dim) feature vectors
        k_min: Initial number of clusters
        k_max: Upper bound on the number of clusters
        seed: Seed for every k-means run
        criterion: "mic", "bic" or "aic"
        gamma: Fixed MIC weight; computed per candidate partition when None

    Returns:
        ClusterModel with every cluster nonempty

    Raises:
        InsufficientDataError: If N < k_min
    """
    points = np.asarray(features, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if k_min < 1 or k_min > k_max:
        raise ValueError(f"Need 1 <= k_min <= k_max, got k_min={k_min}, k_max={k_max}")
    if n < k_min:
        raise InsufficientDataError(
            f"X-means needs at least k_min={k_min} points, got {n}", count=n, required=k_min
        )
    if criterion not in CRITERIA:
        raise ValueError(f"Invalid criterion: {criterion}. Use one of {CRITERIA}")
    k_max = min(k_max, n)

    def score(subset: np.ndarray, subset_labels: np.ndarray) -> float:
        return score_partition(subset, subset_labels, criterion, gamma)

    if k_min == 1:
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels = _kmeans(k_min, derive_seed(seed, "xmeans", 0)).fit(points).labels_
    labels = _canonical_labels(labels)
    k = int(labels.max()) + 1
    trace = [score(points, labels)]

    round_index = 0
    while k < k_max:
        round_index += 1
        centers: list[np.ndarray] = []
        accepted = 0
        for cluster in range(k):
            members = points[labels == cluster]
            parent_center = members.mean(axis=0)
            splittable = len(members) >= 2 * MIN_SPLIT_SIZE and np.ptp(members, axis=0).max() > 0
            if k + accepted >= k_max or not splittable:
                centers.append(parent_center)
                continue
            split = _kmeans(2, derive_seed(seed, "xmeans", round_index, cluster)).fit(members)
            child_labels = split.labels_
            if np.bincount(child_labels, minlength=2).min() < MIN_SPLIT_SIZE:
                centers.append(parent_center)
                continue
            parent_score = score(members, np.zeros(len(members), dtype=np.int64))
            child_score = score(members, child_labels)
            logger.debug(
                f"Split test for cluster {cluster}",
                extra={
                    "context": {
                        "round": round_index,
                        "cluster": cluster,
                        "size": len(members),
                        "parent": parent_score,
                        "split": child_score,
                        "accepted": child_score < parent_score,
                    }
                },
            )
            if child_score < parent_score:
                accepted += 1
                centers.extend(members[child_labels == c].mean(axis=0) for c in (0, 1))
            else:
                centers.append(parent_center)

        if accepted == 0:
            break
        refined = _kmeans(len(centers), derive_seed(seed, "xmeans", round_index), np.stack(centers))
        labels = _canonical_labels(refined.fit(points).labels_)
        previous, k = k, int(labels.max()) + 1
        trace.append(score(points, labels))
        if k <= previous:
            # refinement merged the new clusters back
            break

    if k > 1:
        initial = _centroids(points, labels, k)
        final = _kmeans(k, derive_seed(seed, "xmeans-final"), initial).fit(points)
        labels = _canonical_labels(final.labels_)
        k = int(labels.max()) + 1

    model = ClusterModel(
        n_clusters=k,
        labels=labels,
        centroids=_centroids(points, labels, k),
        sizes=[int((labels == p).sum()) for p in range(k)],
        score=score(points, labels),
        criterion=criterion,
        score_trace=trace,
    )
    logger.info(
        f"X-means found {k} clusters",
        extra={"context": {"n_clusters": k, "sizes": model.sizes, "score": model.score}},
    )
    return model
