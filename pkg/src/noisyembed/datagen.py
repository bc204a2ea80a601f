"""Synthetic datasets: class clusters on the sphere with tunable separability.

Each class owns a random unit direction; samples perturb it with isotropic
noise scaled by 1/spread and renormalize, so large spread means tight,
well-separated clusters. The stored feature vectors double as a
"pretrained-like" initialization for the optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LabeledPointSet
from .rng import spawn_rng

__all__ = ["SynthSpec", "generate", "subsample_clean"]

_MIN_CENTER_ANGLE = 1e-6  # radians


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic dataset: classes, samples, dimension, spread."""

    K: int = 10
    per_class: int = 50
    d: int = 16
    spread: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need at least 2 classes")
        if self.per_class < 2:
            raise ValueError("need at least 2 samples per class")
        if self.d < 2:
            raise ValueError("need dimension >= 2")
        if not self.spread > 0:
            raise ValueError("spread must be positive")

    @property
    def n(self) -> int:
        return self.K * self.per_class


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate(spec: SynthSpec) -> LabeledPointSet:
    """Sample class directions and per-class clusters; labels start clean."""
    rng = spawn_rng(spec.seed)
    centers = _unit_rows(rng.standard_normal((spec.K, spec.d)))
    # distinct directions: resample until every pair is separated
    for _ in range(100):
        dots = np.clip(centers @ centers.T, -1.0, 1.0)
        np.fill_diagonal(dots, -1.0)
        worst = float(np.max(dots))
        if math.acos(min(worst, 1.0)) > _MIN_CENTER_ANGLE:
            break
        bad = int(np.argmax(np.max(dots, axis=1)))
        centers[bad] = _unit_rows(rng.standard_normal((1, spec.d)))[0]
    labels = np.repeat(np.arange(spec.K), spec.per_class)
    noise = rng.standard_normal((spec.n, spec.d)) / spec.spread
    features = _unit_rows(centers[labels] + noise)
    return LabeledPointSet(
        n=spec.n,
        K=spec.K,
        true_labels=labels,
        observed_labels=labels.copy(),
        features=features,
    )


def subsample_clean(
    pset: LabeledPointSet,
    fraction: float,
    seed: int = 0,
    stratified: bool = True,
) -> LabeledPointSet:
    """Keep ceil(fraction * n) samples with clean labels.

    Stratified mode apportions the kept count across classes by largest
    remainder, so per-class counts stay within one of fraction * class size.
    A class that would be emptied keeps one representative; the swap count is
    not part of the returned set but classes are never silently dropped.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    rng = spawn_rng(seed)
    n_keep = math.ceil(fraction * pset.n)
    labels = pset.true_labels
    if stratified:
        kept: list[int] = []
        classes = np.unique(labels)
        sizes = np.array([np.sum(labels == c) for c in classes])
        targets = np.floor(fraction * sizes).astype(int)
        remainders = fraction * sizes - targets
        shortfall = n_keep - int(targets.sum())
        if shortfall > 0:
            order = np.lexsort((classes, -remainders))
            for idx in order[:shortfall]:
                targets[idx] += 1
        # no class goes extinct: steal from the largest allocations
        for idx in np.flatnonzero(targets == 0):
            donor = int(np.argmax(targets))
            targets[idx] += 1
            targets[donor] -= 1
        for cls, take in zip(classes, targets):
            members = np.flatnonzero(labels == cls)
            kept.extend(int(i) for i in rng.choice(members, size=take, replace=False))
        keep_idx = np.sort(np.asarray(kept, dtype=np.int64))
    else:
        keep_idx = np.sort(rng.choice(pset.n, size=n_keep, replace=False))
        present = np.unique(labels[keep_idx])
        missing = np.setdiff1d(np.unique(labels), present)
        if missing.size:
            keep = set(int(i) for i in keep_idx)
            counts = {c: int(np.sum(labels[keep_idx] == c)) for c in present}
            for cls in missing:
                members = np.flatnonzero(labels == cls)
                add = int(rng.choice(members))
                donor_cls = max(counts, key=lambda c: (counts[c], c))
                donor_members = [i for i in keep if labels[i] == donor_cls]
                drop = int(rng.choice(np.asarray(sorted(donor_members))))
                keep.discard(drop)
                keep.add(add)
                counts[donor_cls] -= 1
            keep_idx = np.sort(np.asarray(sorted(keep), dtype=np.int64))
    return LabeledPointSet(
        n=int(keep_idx.size),
        K=pset.K,
        true_labels=labels[keep_idx],
        observed_labels=labels[keep_idx].copy(),
        features=None if pset.features is None else pset.features[keep_idx],
    )
