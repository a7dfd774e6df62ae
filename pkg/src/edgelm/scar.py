"""Clustered sparse attention: cosine k-means over token representations,
block sparsity masks from cluster co-membership, masked softmax attention,
and the closed-form sparse-operation accounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClusterPlan:
    k: int
    centroids: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,) ints in [0, k)
    objective: float  # sum of cosine distances to assigned centroid
    iterations_run: int
    objective_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class SparsityMask:
    """Symmetric n x n binary mask; M[i, j] = 1 iff tokens share a cluster."""

    mask: np.ndarray

    def density(self) -> float:
        return float(self.mask.mean())


@dataclass(frozen=True)
class AttentionResult:
    weights: np.ndarray  # (n, n) row-stochastic, zero off-mask
    outputs: np.ndarray  # (n, d)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b); lies in [0, 2]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm vector")
    return float(1.0 - np.dot(a, b) / (na * nb))


def _cosine_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances, shape (n, k)."""
    pn = points / np.linalg.norm(points, axis=1, keepdims=True)
    cn = centroids / np.linalg.norm(centroids, axis=1, keepdims=True)
    sims = np.clip(pn @ cn.T, -1.0, 1.0)
    return 1.0 - sims


def _farthest_point_init(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic farthest-point seeding from a seeded first pick."""
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    while len(chosen) < k:
        dists = _cosine_distances(points, points[chosen])
        min_dist = dists.min(axis=1)
        min_dist[chosen] = -1.0
        chosen.append(int(np.argmin(-min_dist)))  # argmax with lowest-index ties
    return points[chosen].copy()


def _objective(points: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    d = _cosine_distances(points, centroids)
    return float(d[np.arange(points.shape[0]), assignments].sum())


def kmeans_cosine(points: np.ndarray, k: int, max_iters: int = 100, seed: int = 0) -> ClusterPlan:
    """Lloyd-style k-means under cosine distance with mean centroid updates.

    Deterministic for a fixed seed. The mean update does not in general
    minimize the cosine objective, so an update that would raise it is
    rolled back and iteration stops; the reported objective trace is
    therefore non-increasing.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise ValueError("more clusters than points")
    if np.any(np.linalg.norm(points, axis=1) == 0.0):
        raise ValueError("zero-norm vector")

    centroids = _farthest_point_init(points, k, seed)
    assignments = np.argmin(_cosine_distances(points, centroids), axis=1)
    best_obj = _objective(points, centroids, assignments)
    trace = [best_obj]
    iterations = 0

    for _ in range(max_iters):
        iterations += 1
        new_centroids = centroids.copy()
        for c in range(k):
            members = points[assignments == c]
            if len(members) > 0:
                new_centroids[c] = members.mean(axis=0)
            else:
                # repair: reseed with the point farthest from the stale centroid
                d = _cosine_distances(points, centroids[c : c + 1])[:, 0]
                new_centroids[c] = points[np.argmax(d)]
            if np.linalg.norm(new_centroids[c]) == 0.0:
                # mean of opposing members can vanish; keep the old direction
                new_centroids[c] = centroids[c]
        new_assignments = np.argmin(_cosine_distances(points, new_centroids), axis=1)
        new_obj = _objective(points, new_centroids, new_assignments)
        if new_obj > best_obj + 1e-12:
            break
        converged = np.array_equal(new_assignments, assignments)
        centroids, assignments, best_obj = new_centroids, new_assignments, new_obj
        trace.append(best_obj)
        if converged:
            break

    return ClusterPlan(
        k=k,
        centroids=centroids,
        assignments=assignments,
        objective=best_obj,
        iterations_run=iterations,
        objective_trace=tuple(trace),
    )


def build_mask(assignments) -> SparsityMask:
    """Block mask from cluster co-membership: M[i, j] = 1 iff same cluster."""
    a = np.asarray(assignments)
    mask = (a[:, None] == a[None, :]).astype(np.uint8)
    return SparsityMask(mask=mask)


def masked_attention(
    q: np.ndarray,
    kmat: np.ndarray,
    v: np.ndarray,
    mask: SparsityMask,
    literal_zero: bool = False,
) -> AttentionResult:
    """Softmax attention restricted to mask-allowed pairs.

    Masked positions are excluded from the softmax (logit -inf), which makes
    off-mask weights exactly zero. With literal_zero=True the masked logits
    are instead set to 0 before a full softmax, for comparison.
    """
    q = np.asarray(q, dtype=np.float64)
    kmat = np.asarray(kmat, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n, d_k = q.shape
    if kmat.shape != (n, d_k) or v.shape[0] != n or mask.mask.shape != (n, n):
        raise ValueError("dimension mismatch")

    logits = (q @ kmat.T) / np.sqrt(d_k)
    m = mask.mask.astype(bool)
    if literal_zero:
        logits = np.where(m, logits, 0.0)
        shifted = logits - logits.max(axis=1, keepdims=True)
        weights = np.exp(shifted)
    else:
        logits = np.where(m, logits, -np.inf)
        shifted = logits - logits.max(axis=1, keepdims=True)
        weights = np.where(m, np.exp(shifted), 0.0)
    weights = weights / weights.sum(axis=1, keepdims=True)
    return AttentionResult(weights=weights, outputs=weights @ v)


def scar_ops(n: int, k: int) -> int:
    """Sparse-attention operation count: k*n + n."""
    return k * n + n


def dense_ops(n: int) -> int:
    """Full-attention operation count: n^2."""
    return n * n


def reduction(baseline_ops: int, new_ops: int) -> float:
    """Fractional savings: 1 - new/baseline."""
    return 1.0 - new_ops / baseline_ops
