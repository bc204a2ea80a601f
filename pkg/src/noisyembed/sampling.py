"""Pair and triplet construction under observed labels.

Both semi-hard miners implement a 1-1 scheme: each in-batch positive pair
yields at most one negative pair. Selection logs record how often each
negative pair was chosen against a uniform-over-candidates baseline, which is
what the skew estimator turns into the mining skew eta (and, for the marginal
loss, the positive/negative skew pair behind gamma).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import EmbeddingState, LabeledPointSet, LossConfig, Triplet, distance_matrix
from .losses import PairItem
from .rng import spawn_rng

__all__ = [
    "MinibatchSpec",
    "SelectionLog",
    "SkewEstimate",
    "enumerate_positive_pairs",
    "random_semi_hard_negative",
    "fixed_semi_hard_negative",
    "build_minibatch_triplets",
    "build_minibatch_pairs",
    "estimate_skew",
]


@dataclass(frozen=True)
class MinibatchSpec:
    """Batch shape: how many classes and how many samples from each."""

    classes_per_batch: int = 12
    samples_per_class: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.classes_per_batch < 2 or self.samples_per_class < 2:
            raise ValueError("batch needs at least 2 classes and 2 samples per class")

    @property
    def batch_size(self) -> int:
        return self.classes_per_batch * self.samples_per_class


@dataclass
class SelectionLog:
    """Mergeable record of pair selections.

    ``counts`` holds how often a pair was selected; ``baseline`` the expected
    counts had every selection been uniform over its candidate pool. Counters
    track skipped positive pairs (miner found no valid negative) and
    with-replacement draws forced by undersized classes.
    """

    counts: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    opportunities: int = 0
    skipped: int = 0
    replacement_draws: int = 0

    def record(self, key: tuple[int, int], candidates: Sequence[tuple[int, int]]):
        self.counts[key] = self.counts.get(key, 0.0) + 1.0
        share = 1.0 / len(candidates)
        for cand in candidates:
            self.baseline[cand] = self.baseline.get(cand, 0.0) + share
        self.opportunities += 1

    def merge(self, other: "SelectionLog") -> None:
        for k, v in other.counts.items():
            self.counts[k] = self.counts.get(k, 0.0) + v
        for k, v in other.baseline.items():
            self.baseline[k] = self.baseline.get(k, 0.0) + v
        self.opportunities += other.opportunities
        self.skipped += other.skipped
        self.replacement_draws += other.replacement_draws

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["anchor", "negative", "count"])
            for (a, b) in sorted(self.counts):
                writer.writerow([a, b, repr(self.counts[(a, b)])])

    @classmethod
    def read_csv(cls, path: str | Path) -> "SelectionLog":
        log = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                key = (int(row["anchor"]), int(row["negative"]))
                log.counts[key] = log.counts.get(key, 0.0) + float(row["count"])
        return log


@dataclass(frozen=True)
class SkewEstimate:
    """Mining skew estimates: eta for triplet mining, eta+/eta-/gamma for
    marginal mining. gamma = eta_minus / eta_plus lies in (0, 1]."""

    eta: float
    eta_plus: Optional[float] = None
    eta_minus: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.eta < 1.0:
            raise ValueError("eta must be >= 1")
        if self.gamma is not None and not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")


def _as_labels(pset: Union[LabeledPointSet, np.ndarray], use_observed: bool) -> np.ndarray:
    if isinstance(pset, LabeledPointSet):
        return pset.labels(use_observed)
    return np.asarray(pset, dtype=np.int64)


def _as_vectors(emb: Union[EmbeddingState, np.ndarray]) -> np.ndarray:
    if isinstance(emb, EmbeddingState):
        return emb.vectors
    return np.asarray(emb, dtype=np.float64)


def enumerate_positive_pairs(
    pset: Union[LabeledPointSet, np.ndarray], use_observed: bool = False
) -> list[tuple[int, int]]:
    """All unordered same-label pairs under the selected channel, each once."""
    labels = _as_labels(pset, use_observed)
    pairs = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                pairs.append((int(members[i]), int(members[j])))
    return pairs


def _pick_random(
    d_ap: float, d_cands: np.ndarray, alpha: float, rng: np.random.Generator
) -> Optional[int]:
    violators = np.flatnonzero(d_ap - d_cands + alpha > 0.0)
    if violators.size == 0:
        return None
    return int(violators[rng.integers(violators.size)])


def _pick_fixed(d_ap: float, d_cands: np.ndarray) -> Optional[int]:
    valid = np.flatnonzero(d_cands > d_ap)
    if valid.size == 0:
        return None
    # argmin over the valid subset; first occurrence breaks ties low
    return int(valid[np.argmin(d_cands[valid])])


def random_semi_hard_negative(
    emb: Union[EmbeddingState, np.ndarray],
    a: int,
    p_idx: int,
    candidates: Sequence[int],
    cfg: LossConfig,
    rng: np.random.Generator,
) -> Optional[int]:
    """Uniform pick among candidates violating d_ap - d_an + alpha > 0."""
    if len(candidates) == 0:
        return None
    vectors = _as_vectors(emb)
    cands = np.sort(np.asarray(candidates, dtype=np.int64))
    d_ap = float(np.linalg.norm(vectors[a] - vectors[p_idx]))
    d_cands = np.linalg.norm(vectors[cands] - vectors[a], axis=1)
    pos = _pick_random(d_ap, d_cands, cfg.alpha, rng)
    return None if pos is None else int(cands[pos])


def fixed_semi_hard_negative(
    emb: Union[EmbeddingState, np.ndarray],
    a: int,
    p_idx: int,
    candidates: Sequence[int],
    cfg: LossConfig,
) -> Optional[int]:
    """Closest candidate strictly farther than the positive; ties go to the
    lowest sample index."""
    if len(candidates) == 0:
        return None
    vectors = _as_vectors(emb)
    cands = np.sort(np.asarray(candidates, dtype=np.int64))
    d_ap = float(np.linalg.norm(vectors[a] - vectors[p_idx]))
    d_cands = np.linalg.norm(vectors[cands] - vectors[a], axis=1)
    pos = _pick_fixed(d_ap, d_cands)
    return None if pos is None else int(cands[pos])


def _sample_batch(
    labels: np.ndarray,
    spec: MinibatchSpec,
    rng: np.random.Generator,
    log: Optional[SelectionLog],
) -> np.ndarray:
    """Sample indices for one batch: classes first, then members per class."""
    if spec.batch_size > labels.size:
        raise ValueError(
            f"batch of {spec.batch_size} exceeds dataset size {labels.size}"
        )
    classes = np.unique(labels)
    take_classes = min(spec.classes_per_batch, classes.size)
    chosen = rng.choice(classes, size=take_classes, replace=False)
    batch = []
    for cls in chosen:
        members = np.flatnonzero(labels == cls)
        if members.size >= spec.samples_per_class:
            picked = rng.choice(members, size=spec.samples_per_class, replace=False)
        else:
            picked = rng.choice(members, size=spec.samples_per_class, replace=True)
            if log is not None:
                log.replacement_draws += 1
        batch.extend(int(i) for i in picked)
    return np.asarray(batch, dtype=np.int64)


def _mine_batch(
    labels: np.ndarray,
    vectors: np.ndarray,
    spec: MinibatchSpec,
    cfg: LossConfig,
    rng: np.random.Generator,
    log: Optional[SelectionLog],
):
    """Yield (anchor, positive, negative-or-None, candidate sample indices)
    for every in-batch positive pair, in deterministic order."""
    batch = _sample_batch(labels, spec, rng, log)
    batch_labels = labels[batch]
    dist = distance_matrix(vectors[batch])
    order = np.argsort(batch, kind="stable")  # candidate scan in index order

    results = []
    spc = spec.samples_per_class
    for start in range(0, len(batch), spc):
        group_label = batch_labels[start]
        cand_pos = order[batch_labels[order] != group_label]
        cand_samples = [int(batch[c]) for c in cand_pos]
        for u in range(start, start + spc):
            for w in range(u + 1, start + spc):
                if batch[u] == batch[w]:
                    continue  # duplicate sample from replacement draws
                if cfg.mining == "exhaustive":
                    results.append(
                        (int(batch[u]), int(batch[w]), None, cand_samples, None)
                    )
                    continue
                d_ap = dist[u, w]
                d_cands = dist[u, cand_pos]
                if cfg.mining == "random_semi_hard":
                    picked = _pick_random(d_ap, d_cands, cfg.alpha, rng)
                else:
                    picked = _pick_fixed(d_ap, d_cands)
                if picked is None:
                    if log is not None:
                        log.skipped += 1
                    continue
                neg = cand_samples[picked]
                if log is not None:
                    anchor = int(batch[u])
                    log.record((anchor, neg), [(anchor, c) for c in cand_samples])
                results.append((int(batch[u]), int(batch[w]), neg, cand_samples, d_ap))
    return results


def build_minibatch_triplets(
    pset: Union[LabeledPointSet, np.ndarray],
    emb: Union[EmbeddingState, np.ndarray],
    spec: MinibatchSpec,
    cfg: LossConfig,
    *,
    rng: Optional[np.random.Generator] = None,
    log: Optional[SelectionLog] = None,
    use_observed: bool = True,
) -> list[Triplet]:
    """One batch of triplets under the configured miner.

    Semi-hard miners emit at most one triplet per positive pair; exhaustive
    mining emits one per (positive pair, candidate). Deterministic for a
    given spec seed when no generator is supplied.
    """
    labels = _as_labels(pset, use_observed)
    vectors = _as_vectors(emb)
    if rng is None:
        rng = spawn_rng(spec.seed)
    triplets = []
    for a, p, neg, cands, _ in _mine_batch(labels, vectors, spec, cfg, rng, log):
        if cfg.mining == "exhaustive":
            triplets.extend(Triplet(a, p, c) for c in cands)
        elif neg is not None:
            triplets.append(Triplet(a, p, neg))
    return triplets


def build_minibatch_pairs(
    pset: Union[LabeledPointSet, np.ndarray],
    emb: Union[EmbeddingState, np.ndarray],
    spec: MinibatchSpec,
    cfg: LossConfig,
    *,
    rng: Optional[np.random.Generator] = None,
    log: Optional[SelectionLog] = None,
    pos_log: Optional[SelectionLog] = None,
    use_observed: bool = True,
) -> list[PairItem]:
    """One batch of labeled pairs for the marginal loss: every in-batch
    positive pair plus the negative pair its miner selects (anchored at the
    pair's first endpoint). The positive log counts hinge-active positive
    pairs against their appearances."""
    labels = _as_labels(pset, use_observed)
    vectors = _as_vectors(emb)
    if rng is None:
        rng = spawn_rng(spec.seed)
    items: list[PairItem] = []
    for a, p, neg, cands, d_ap in _mine_batch(labels, vectors, spec, cfg, rng, log):
        if cfg.mining == "exhaustive":
            items.append((a, p, 1))
            items.extend((a, c, -1) for c in cands)
            continue
        items.append((a, p, 1))
        if pos_log is not None:
            key = (min(a, p), max(a, p))
            pos_log.baseline[key] = pos_log.baseline.get(key, 0.0) + 1.0
            if d_ap > cfg.beta - cfg.alpha:
                pos_log.counts[key] = pos_log.counts.get(key, 0.0) + 1.0
            pos_log.opportunities += 1
        if neg is not None:
            items.append((a, neg, -1))
    return items


def _frequency_ratios(log: SelectionLog, selected_only: bool = False) -> np.ndarray:
    keys = sorted(log.baseline)
    base = np.array([log.baseline[k] for k in keys])
    counts = np.array([log.counts.get(k, 0.0) for k in keys])
    total_base = base.sum()
    total_counts = counts.sum()
    if total_base <= 0 or total_counts <= 0:
        raise ValueError("selection log is empty")
    ratios = (counts / total_counts) / (base / total_base)
    if selected_only:
        ratios = ratios[counts > 0]
    return ratios


def estimate_skew(
    log: SelectionLog,
    pos_log: Optional[SelectionLog] = None,
    quantile: float = 0.95,
    low_quantile: float = 0.05,
) -> SkewEstimate:
    """Skew of pair selection relative to the uniform baseline.

    eta is the upper-tail quantile of normalized frequency ratios over
    negative pairs (upper order statistic, so a single hot pair inside the
    tail is reported at its full ratio). When a positive-pair log is given,
    eta_plus is the analogous upper-tail positive skew, eta_minus the
    lower-tail skew over selected negative pairs, and gamma their ratio.
    """
    if not log.counts:
        raise ValueError("selection log is empty")
    neg_ratios = _frequency_ratios(log)
    eta = max(1.0, float(np.quantile(neg_ratios, quantile, method="higher")))
    if pos_log is None:
        return SkewEstimate(eta=eta)
    pos_ratios = _frequency_ratios(pos_log)
    eta_plus = max(1.0, float(np.quantile(pos_ratios, quantile, method="higher")))
    selected = _frequency_ratios(log, selected_only=True)
    eta_minus = max(1.0, float(np.quantile(selected, low_quantile, method="lower")))
    eta_minus = min(eta_minus, eta_plus)
    return SkewEstimate(
        eta=eta, eta_plus=eta_plus, eta_minus=eta_minus, gamma=eta_minus / eta_plus
    )
