"""Evaluation against true labels: retrieval recall, k-means, and NMI.

Neighbor search is exact and O(n^2); clustering is Lloyd's algorithm with
k-means++ seeding and best-of-restarts selection, kept in-package so runs are
bit-reproducible for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import EmbeddingState
from .rng import spawn_rng

__all__ = [
    "EvalReport",
    "KMeansResult",
    "recall_at_k",
    "kmeans",
    "nmi",
    "evaluate_embedding",
]

_QUERY_BLOCK = 512


def _vectors_of(emb: Union[EmbeddingState, np.ndarray]) -> np.ndarray:
    return emb.vectors if isinstance(emb, EmbeddingState) else np.asarray(emb, float)


@dataclass(frozen=True)
class EvalReport:
    """Per-embedding evaluation: Recall@K map, NMI, and k-means inertia."""

    recall_at: dict
    nmi: float
    kmeans_inertia: float


def recall_at_k(
    emb: Union[EmbeddingState, np.ndarray],
    true_labels: np.ndarray,
    ks: Sequence[int],
) -> dict:
    """Fraction of queries whose k nearest other points include a same-class
    sample, for each k. Exact search; ties resolve by index for determinism.
    """
    vectors = _vectors_of(emb)
    labels = np.asarray(true_labels)
    n = vectors.shape[0]
    ks = sorted(int(k) for k in ks)
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive")
    if ks[-1] >= n:
        raise ValueError(f"k={ks[-1]} needs at least k+1 samples, have {n}")
    k_max = ks[-1]
    sq = np.sum(vectors * vectors, axis=1)
    hits = np.zeros((n, k_max), dtype=bool)
    for start in range(0, n, _QUERY_BLOCK):
        stop = min(start + _QUERY_BLOCK, n)
        block = vectors[start:stop]
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (block @ vectors.T)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        if k_max < n - 1:
            part = np.argpartition(d2, k_max, axis=1)[:, :k_max]
        else:
            part = np.argsort(d2, axis=1, kind="stable")[:, :k_max]
        part_d = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, part_d))
        neighbors = np.take_along_axis(part, order, axis=1)
        hits[start:stop] = labels[neighbors] == labels[start:stop, None]
    any_hit = np.logical_or.accumulate(hits, axis=1)
    return {k: float(np.mean(any_hit[:, k - 1])) for k in ks}


@dataclass(frozen=True)
class KMeansResult:
    assignment: np.ndarray
    inertia: float
    centers: np.ndarray


def _kmeans_pp_seed(
    x: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # all points already covered
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    return centers


def _reseed_empty(x, centers, assignment, d2_min):
    """Move each empty cluster's centroid onto the current farthest point."""
    for c in range(centers.shape[0]):
        if not np.any(assignment == c):
            centers[c] = x[int(np.argmax(d2_min))]
            d2c = np.sum((x - centers[c]) ** 2, axis=1)
            assignment = np.where(d2c < d2_min, c, assignment)
            d2_min = np.minimum(d2_min, d2c)
    return centers, assignment


def kmeans(
    emb: Union[EmbeddingState, np.ndarray],
    k: int,
    restarts: int = 10,
    seed: int = 0,
    max_iter: int = 100,
) -> KMeansResult:
    """Lloyd iterations from k-means++ seeds, best of `restarts` by inertia."""
    x = _vectors_of(emb)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    best = None
    for r in range(restarts):
        rng = spawn_rng(seed, r)
        centers = _kmeans_pp_seed(x, k, rng)
        assignment = np.zeros(n, dtype=np.int64)
        for _ in range(max_iter):
            d2 = (
                np.sum(x * x, axis=1)[:, None]
                + np.sum(centers * centers, axis=1)[None, :]
                - 2.0 * (x @ centers.T)
            )
            new_assignment = np.argmin(d2, axis=1)
            d2_min = d2[np.arange(n), new_assignment]
            centers, new_assignment = _reseed_empty(x, centers, new_assignment, d2_min)
            if np.array_equal(new_assignment, assignment):
                assignment = new_assignment
                break
            assignment = new_assignment
            for c in range(k):
                members = assignment == c
                if np.any(members):
                    centers[c] = x[members].mean(axis=0)
        inertia = float(
            np.sum((x - centers[assignment]) ** 2)
        )
        if best is None or inertia < best.inertia:
            best = KMeansResult(assignment=assignment.copy(), inertia=inertia, centers=centers.copy())
    return best


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def nmi(assignment: np.ndarray, true_labels: np.ndarray) -> float:
    """Mutual information of the two partitions over the geometric mean of
    their entropies. Two identical trivial partitions score 1; a trivial
    partition against a non-trivial one scores 0.
    """
    a = np.asarray(assignment)
    b = np.asarray(true_labels)
    if a.shape != b.shape:
        raise ValueError("assignment and labels must have equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)
    pxy = table / n
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    hx, hy = _entropy(px), _entropy(py)
    if hx == 0.0 and hy == 0.0:
        return 1.0
    if hx == 0.0 or hy == 0.0:
        return 0.0
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * (np.log(pxy[nz]) - np.log(np.outer(px, py)[nz]))))
    return float(np.clip(mi / np.sqrt(hx * hy), 0.0, 1.0))


def evaluate_embedding(
    emb: Union[EmbeddingState, np.ndarray],
    true_labels: np.ndarray,
    n_classes: int,
    ks: Sequence[int] = (1, 10),
    seed: int = 0,
    restarts: int = 10,
) -> EvalReport:
    """Recall@K plus NMI of a k-means clustering with k = class count."""
    recall = recall_at_k(emb, true_labels, ks)
    clustering = kmeans(emb, n_classes, restarts=restarts, seed=seed)
    return EvalReport(
        recall_at=recall,
        nmi=nmi(clustering.assignment, np.asarray(true_labels)),
        kmeans_inertia=clustering.inertia,
    )
