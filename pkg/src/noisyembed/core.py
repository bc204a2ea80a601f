"""Domain types shared by all modules.

Labeled sample sets carry two label channels (true and observed) so a run can
train on corrupted labels while evaluating against the ground truth.
Embeddings are free per-sample unit vectors on the d-dimensional hypersphere;
distances are plain Euclidean and therefore live in [0, 2].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "D_MAX",
    "UNIT_NORM_TOL",
    "PairLabel",
    "LabeledPointSet",
    "EmbeddingState",
    "Triplet",
    "LossConfig",
    "pairwise_distance",
    "pair_label",
    "distance_matrix",
    "point_set_to_json",
    "point_set_from_json",
    "save_point_set",
    "load_point_set",
]

D_MAX = 2.0  # largest possible distance between two unit vectors
UNIT_NORM_TOL = 1e-9

LOSS_FAMILIES = ("triplet", "marginal")
MINING_SCHEMES = ("random_semi_hard", "fixed_semi_hard", "exhaustive")


class PairLabel(IntEnum):
    """+1 for a same-class pair, -1 for a different-class pair."""

    POSITIVE = 1
    NEGATIVE = -1


@dataclass(frozen=True)
class LabeledPointSet:
    """Samples with true labels, observed (possibly corrupted) labels and an
    optional feature vector per sample.

    Labels are dense integers in [0, K). Both label channels are always
    stored; features are only produced by the synthetic generator and feed
    feature-based embedding initialization.
    """

    n: int
    K: int
    true_labels: np.ndarray
    observed_labels: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"need at least 2 classes, got K={self.K}")
        true = np.asarray(self.true_labels, dtype=np.int64)
        obs = np.asarray(self.observed_labels, dtype=np.int64)
        object.__setattr__(self, "true_labels", true)
        object.__setattr__(self, "observed_labels", obs)
        if true.shape != (self.n,) or obs.shape != (self.n,):
            raise ValueError(
                f"label arrays must have length n={self.n}, "
                f"got {true.shape} and {obs.shape}"
            )
        for name, arr in (("true", true), ("observed", obs)):
            if arr.size and (arr.min() < 0 or arr.max() >= self.K):
                raise ValueError(f"{name} labels outside [0, {self.K})")
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.shape[0] != self.n:
                raise ValueError("features must have one row per sample")
            object.__setattr__(self, "features", feats)

    def labels(self, use_observed: bool) -> np.ndarray:
        return self.observed_labels if use_observed else self.true_labels

    def is_clean(self) -> bool:
        return bool(np.array_equal(self.true_labels, self.observed_labels))

    def with_observed(self, observed: np.ndarray) -> "LabeledPointSet":
        return replace(self, observed_labels=np.asarray(observed, dtype=np.int64))


@dataclass
class EmbeddingState:
    """Unit-norm vectors in R^d, one per sample; the optimization variable.

    The only mutable type in the package: the optimizer updates ``vectors``
    in place and renormalizes after every step. All other uses are read-only.
    """

    d: int
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.d:
            raise ValueError(
                f"vectors must be (n, {self.d}), got {self.vectors.shape}"
            )
        norms = np.linalg.norm(self.vectors, axis=1)
        worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
        if worst > UNIT_NORM_TOL:
            raise ValueError(
                f"vectors must be unit-norm within {UNIT_NORM_TOL}; "
                f"worst deviation {worst:.3e}"
            )

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def copy(self) -> "EmbeddingState":
        return EmbeddingState(self.d, self.vectors.copy())

    def distance(self, i: int, j: int) -> float:
        return pairwise_distance(self, i, j)


def pairwise_distance(emb: EmbeddingState, i: int, j: int) -> float:
    """Euclidean distance between the embeddings of samples i and j."""
    n = emb.n
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexError(f"sample index {idx} out of range [0, {n})")
    return float(np.linalg.norm(emb.vectors[i] - emb.vectors[j]))


def distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """All pairwise Euclidean distances; exact zeros on the diagonal."""
    sq = np.sum(vectors * vectors, axis=1)
    g = sq[:, None] + sq[None, :] - 2.0 * (vectors @ vectors.T)
    np.maximum(g, 0.0, out=g)
    np.fill_diagonal(g, 0.0)
    return np.sqrt(g)


def pair_label(
    pset: LabeledPointSet, i: int, j: int, use_observed: bool = False
) -> PairLabel:
    """Pair label of (i, j) under the selected label channel."""
    if i == j:
        raise ValueError("pair label undefined for a self-pair")
    labels = pset.labels(use_observed)
    for idx in (i, j):
        if not 0 <= idx < pset.n:
            raise IndexError(f"sample index {idx} out of range [0, {pset.n})")
    return PairLabel.POSITIVE if labels[i] == labels[j] else PairLabel.NEGATIVE


@dataclass(frozen=True)
class Triplet:
    """Anchor / positive / negative sample indices.

    Builders guarantee that, under the observed labels, anchor and positive
    agree and anchor and negative differ.
    """

    a: int
    p: int
    n: int

    def __post_init__(self):
        if self.a == self.p:
            raise ValueError("anchor and positive must be distinct samples")


@dataclass(frozen=True)
class LossConfig:
    """Loss family, hinge mode, margins, and the mining scheme."""

    family: str = "triplet"
    hinged: bool = True
    alpha: float = 0.2
    beta: float = 1.4
    mining: str = "random_semi_hard"

    def __post_init__(self):
        if self.family not in LOSS_FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.mining not in MINING_SCHEMES:
            raise ValueError(f"unknown mining scheme {self.mining!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.family == "marginal":
            if not 0 < self.beta < D_MAX:
                raise ValueError(f"beta must lie in (0, {D_MAX})")
            if not self.beta - self.alpha > 0:
                raise ValueError("beta - alpha must be positive")


# --- JSON document {n, K, true_labels, observed_labels, d?, vectors?} ---


def point_set_to_json(
    pset: LabeledPointSet, vectors: Optional[np.ndarray] = None
) -> dict:
    """Serializable document for a point set.

    ``vectors`` defaults to the set's feature vectors so a generated dataset
    and a trained embedding share one schema.
    """
    doc = {
        "n": pset.n,
        "K": pset.K,
        "true_labels": pset.true_labels.tolist(),
        "observed_labels": pset.observed_labels.tolist(),
    }
    if vectors is None and pset.features is not None:
        vectors = pset.features
    if vectors is not None:
        vectors = np.asarray(vectors, dtype=np.float64)
        doc["d"] = int(vectors.shape[1])
        doc["vectors"] = vectors.tolist()
    return doc


def point_set_from_json(doc: dict) -> LabeledPointSet:
    """Parse the JSON document; any vectors land in ``features``."""
    for key in ("n", "K", "true_labels", "observed_labels"):
        if key not in doc:
            raise ValueError(f"point set document missing field {key!r}")
    features = None
    if doc.get("vectors") is not None:
        features = np.asarray(doc["vectors"], dtype=np.float64)
        if "d" in doc and features.shape[1] != doc["d"]:
            raise ValueError("declared dimension d does not match vectors")
    return LabeledPointSet(
        n=int(doc["n"]),
        K=int(doc["K"]),
        true_labels=np.asarray(doc["true_labels"], dtype=np.int64),
        observed_labels=np.asarray(doc["observed_labels"], dtype=np.int64),
        features=features,
    )


def save_point_set(
    path: str | Path, pset: LabeledPointSet, vectors: Optional[np.ndarray] = None
) -> None:
    Path(path).write_text(json.dumps(point_set_to_json(pset, vectors)))


def load_point_set(path: str | Path) -> LabeledPointSet:
    return point_set_from_json(json.loads(Path(path).read_text()))
