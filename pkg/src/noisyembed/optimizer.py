"""Projected SGD over free per-sample embedding vectors on the unit sphere.

Each step mines items from one minibatch under the observed labels,
accumulates the mean analytic gradient, projects it onto the tangent plane,
takes a constant-rate step, and renormalizes every touched vector. The
trainer never sees true labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import EmbeddingState, LabeledPointSet, LossConfig
from .losses import ZERO_DISTANCE_TOL, project_tangent
from .rng import spawn_rng
from .sampling import MinibatchSpec, SelectionLog, build_minibatch_pairs, build_minibatch_triplets

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "StepRecord",
    "TrainResult",
    "initialize_embeddings",
    "train",
    "write_training_log",
    "read_training_log",
]

INIT_MODES = ("random_uniform_sphere", "from_features")


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite gradient appears; carries the step index."""

    def __init__(self, step: int):
        super().__init__(f"non-finite gradient at step {step}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    """Step budget, learning rate, batch shape, loss, and seeding."""

    steps: int = 600
    learning_rate: float = 0.05
    minibatch: MinibatchSpec = field(default_factory=MinibatchSpec)
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    snapshot_every: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be nonnegative")


@dataclass(frozen=True)
class StepRecord:
    step: int
    risk: float
    active_items: int
    skipped_pairs: int


@dataclass
class TrainResult:
    state: EmbeddingState
    log: list[StepRecord]
    selection_log: SelectionLog
    positive_log: Optional[SelectionLog]
    snapshots: list[tuple[int, np.ndarray]]
    zero_distance_events: int


def _unit_rows(x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    while rng is not None and np.any(norms < 1e-12):
        bad = norms[:, 0] < 1e-12
        x[bad] = rng.standard_normal((int(bad.sum()), x.shape[1]))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / norms


def initialize_embeddings(
    n: int,
    d: int,
    mode: str = "random_uniform_sphere",
    seed: int = 0,
    features: Optional[np.ndarray] = None,
    mix_lambda: float = 0.0,
) -> EmbeddingState:
    """Starting embedding: uniform random directions, or normalized feature
    vectors optionally blended toward random directions by ``mix_lambda``
    (0 keeps the features exactly, 1 is indistinguishable from random)."""
    if d < 2:
        raise ValueError("embedding dimension must be >= 2")
    if mode not in INIT_MODES:
        raise ValueError(f"unknown init mode {mode!r}")
    rng = spawn_rng(seed)
    if mode == "random_uniform_sphere":
        return EmbeddingState(d, _unit_rows(rng.standard_normal((n, d)), rng))
    if features is None:
        raise ValueError("from_features initialization requires feature vectors")
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape != (n, d):
        raise ValueError(f"features must be ({n}, {d}), got {feats.shape}")
    if not 0.0 <= mix_lambda <= 1.0:
        raise ValueError("mix_lambda must lie in [0, 1]")
    base = _unit_rows(feats.copy(), rng)
    random_dirs = _unit_rows(rng.standard_normal((n, d)), rng)
    mixed = (1.0 - mix_lambda) * base + mix_lambda * random_dirs
    # a blended row can cancel to zero only on a measure-zero event
    return EmbeddingState(d, _unit_rows(mixed, rng))


def _triplet_gradient(vectors: np.ndarray, triplets, cfg: LossConfig):
    """Summed gradient, per-item losses, active count, degenerate count."""
    n, d = vectors.shape
    grad = np.zeros((n, d))
    if not triplets:
        return grad, np.zeros(0), 0, 0
    A = np.fromiter((t.a for t in triplets), dtype=np.int64, count=len(triplets))
    P = np.fromiter((t.p for t in triplets), dtype=np.int64, count=len(triplets))
    N = np.fromiter((t.n for t in triplets), dtype=np.int64, count=len(triplets))
    diff_ap = vectors[A] - vectors[P]
    diff_an = vectors[A] - vectors[N]
    d_ap = np.linalg.norm(diff_ap, axis=1)
    d_an = np.linalg.norm(diff_an, axis=1)
    raw = d_ap - d_an + cfg.alpha
    losses = np.maximum(raw, 0.0) if cfg.hinged else raw + 2.0
    active = raw > 0.0 if cfg.hinged else np.ones(len(triplets), dtype=bool)
    ok_ap = d_ap > ZERO_DISTANCE_TOL
    ok_an = d_an > ZERO_DISTANCE_TOL
    degenerate = int(np.sum(active & ~(ok_ap & ok_an)))
    use = active & ok_ap & ok_an
    if np.any(use):
        u_ap = diff_ap[use] / d_ap[use, None]
        u_an = diff_an[use] / d_an[use, None]
        np.add.at(grad, A[use], u_ap - u_an)
        np.add.at(grad, P[use], -u_ap)
        np.add.at(grad, N[use], u_an)
    return grad, losses, int(active.sum()), degenerate


def _pair_gradient(vectors: np.ndarray, pairs, cfg: LossConfig):
    n, d = vectors.shape
    grad = np.zeros((n, d))
    if not pairs:
        return grad, np.zeros(0), 0, 0
    arr = np.asarray(pairs, dtype=np.int64)
    I, J, T = arr[:, 0], arr[:, 1], arr[:, 2].astype(np.float64)
    diff = vectors[I] - vectors[J]
    dist = np.linalg.norm(diff, axis=1)
    raw = (dist - cfg.beta) * T + cfg.alpha
    losses = np.maximum(raw, 0.0) if cfg.hinged else raw + 2.0
    active = raw > 0.0 if cfg.hinged else np.ones(len(pairs), dtype=bool)
    ok = dist > ZERO_DISTANCE_TOL
    degenerate = int(np.sum(active & ~ok))
    use = active & ok
    if np.any(use):
        u = diff[use] * (T[use] / dist[use])[:, None]
        np.add.at(grad, I[use], u)
        np.add.at(grad, J[use], -u)
    return grad, losses, int(active.sum()), degenerate


def train(
    pset: LabeledPointSet, init: EmbeddingState, cfg: TrainConfig
) -> TrainResult:
    """Run projected SGD and return the final state plus the step log,
    miner selection logs, and optional embedding snapshots."""
    if init.n != pset.n:
        raise ValueError("embedding and dataset sizes differ")
    # the trainer's view of the data: observed labels only
    labels = pset.observed_labels.copy()
    vectors = init.vectors.copy()
    marginal = cfg.loss.family == "marginal"
    neg_log = SelectionLog()
    pos_log = SelectionLog() if marginal else None
    log: list[StepRecord] = []
    snapshots: list[tuple[int, np.ndarray]] = []
    zero_distance = 0

    for step in range(cfg.steps):
        rng = spawn_rng(cfg.seed, step)
        skipped_before = neg_log.skipped
        if marginal:
            items = build_minibatch_pairs(
                labels, vectors, cfg.minibatch, cfg.loss,
                rng=rng, log=neg_log, pos_log=pos_log,
            )
            grad, losses, active, degenerate = _pair_gradient(vectors, items, cfg.loss)
        else:
            items = build_minibatch_triplets(
                labels, vectors, cfg.minibatch, cfg.loss, rng=rng, log=neg_log
            )
            grad, losses, active, degenerate = _triplet_gradient(vectors, items, cfg.loss)
        zero_distance += degenerate
        risk = float(losses.mean()) if losses.size else 0.0
        if items:
            # summed per-item gradients: a sample's step scales with how many
            # mined items touch it, and the constant rate stays meaningful
            # across batch sizes
            if not np.all(np.isfinite(grad)):
                raise TrainingDiverged(step)
            touched = np.flatnonzero(np.abs(grad).sum(axis=1))
            if touched.size:
                step_dir = project_tangent(grad[touched], vectors[touched])
                vectors[touched] -= cfg.learning_rate * step_dir
                norms = np.linalg.norm(vectors[touched], axis=1, keepdims=True)
                norms[norms < 1e-12] = 1.0  # degenerate collapse: leave as is
                vectors[touched] /= norms
        log.append(
            StepRecord(
                step=step,
                risk=risk,
                active_items=active,
                skipped_pairs=neg_log.skipped - skipped_before,
            )
        )
        if cfg.snapshot_every and (step + 1) % cfg.snapshot_every == 0:
            snapshots.append((step + 1, vectors.copy()))

    return TrainResult(
        state=EmbeddingState(init.d, vectors),
        log=log,
        selection_log=neg_log,
        positive_log=pos_log,
        snapshots=snapshots,
        zero_distance_events=zero_distance,
    )


def write_training_log(path: str | Path, records: list[StepRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "risk", "active_items", "skipped_pairs"])
        for rec in records:
            writer.writerow([rec.step, repr(rec.risk), rec.active_items, rec.skipped_pairs])


def read_training_log(path: str | Path) -> list[StepRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                StepRecord(
                    step=int(row["step"]),
                    risk=float(row["risk"]),
                    active_items=int(row["active_items"]),
                    skipped_pairs=int(row["skipped_pairs"]),
                )
            )
    return records
