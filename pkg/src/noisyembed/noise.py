"""Uniform label noise: injection, analytic pair-flip rates, and oracles.

A sample keeps its label with probability 1-p and otherwise takes a uniformly
chosen different class. The closed-form pair rates give the probability that a
pair's +1/-1 label flips once both endpoints pass through that channel; a
Monte Carlo simulator and a full enumeration of the corruption channel act as
independent checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledPointSet
from .rng import spawn_rng

__all__ = [
    "NoiseSpec",
    "PairNoiseRates",
    "inject_noise",
    "pair_noise_rates",
    "monte_carlo_pair_noise",
    "exhaustive_pair_noise",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Sample noise rate p in [0, 1), class count K >= 2, and an RNG seed."""

    p: float
    K: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"noise rate p must lie in [0, 1), got {self.p}")
        if self.K < 2:
            raise ValueError(f"need at least 2 classes, got K={self.K}")


@dataclass(frozen=True)
class PairNoiseRates:
    """q_neg: negative pair observed positive; q_pos: positive pair observed negative."""

    q_neg: float
    q_pos: float


def _corrupt_labels(
    labels: np.ndarray, p: float, k: int, rng: np.random.Generator
) -> np.ndarray:
    flips = rng.random(labels.shape) < p
    # offset in 1..K-1 makes the replacement uniform over the other classes
    offsets = rng.integers(1, k, size=labels.shape)
    return np.where(flips, (labels + offsets) % k, labels)


def inject_noise(pset: LabeledPointSet, spec: NoiseSpec) -> LabeledPointSet:
    """Corrupt the observed labels of a clean set, once, deterministically.

    The true labels are untouched; the input set must still be clean so that
    noise is applied exactly once per run.
    """
    if pset.K != spec.K:
        raise ValueError(f"class count mismatch: set has K={pset.K}, spec K={spec.K}")
    if not pset.is_clean():
        raise ValueError("inject_noise expects a clean set (observed == true)")
    rng = spawn_rng(spec.seed)
    observed = _corrupt_labels(pset.true_labels, spec.p, spec.K, rng)
    return pset.with_observed(observed)


def pair_noise_rates(spec: NoiseSpec) -> PairNoiseRates:
    """Closed-form pair flip rates for the uniform channel.

    Negative pair turns positive when one endpoint lands on the other's label
    or both land on a common third class. Positive pair turns negative when
    exactly one endpoint moves, or both move and miss each other; two fresh
    labels drawn from the K-1 alternatives collide with probability 1/(K-1).
    """
    p, k = spec.p, spec.K
    one_moved_neg = 2.0 * p * (1.0 - p) / (k - 1)
    both_moved_neg = p * p * (k - 2) / (k - 1) ** 2
    q_neg = one_moved_neg + both_moved_neg

    one_moved_pos = 2.0 * p * (1.0 - p)
    both_moved_pos = p * p * (1.0 - 1.0 / (k - 1))
    q_pos = one_moved_pos + both_moved_pos
    return PairNoiseRates(q_neg=q_neg, q_pos=q_pos)


def monte_carlo_pair_noise(spec: NoiseSpec, trials: int) -> PairNoiseRates:
    """Empirical pair flip rates from simulating `trials` pairs per channel.

    Standard error of each estimate is at most sqrt(0.25 / trials).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = spawn_rng(spec.seed, 1)
    k = spec.K
    same = np.zeros(trials, dtype=np.int64)
    a = _corrupt_labels(same, spec.p, k, rng)
    b = _corrupt_labels(same, spec.p, k, rng)
    q_pos = float(np.mean(a != b))

    y1 = np.zeros(trials, dtype=np.int64)
    y2 = np.ones(trials, dtype=np.int64)
    a = _corrupt_labels(y1, spec.p, k, rng)
    b = _corrupt_labels(y2, spec.p, k, rng)
    q_neg = float(np.mean(a == b))
    return PairNoiseRates(q_neg=q_neg, q_pos=q_pos)


def exhaustive_pair_noise(spec: NoiseSpec) -> PairNoiseRates:
    """Exact rates by enumerating all K*K joint corruptions of one pair.

    Independent of the closed form; intended for small K.
    """
    p, k = spec.p, spec.K
    # channel[y, u] = P(observe u | true y)
    channel = np.full((k, k), p / (k - 1))
    np.fill_diagonal(channel, 1.0 - p)
    # positive pair with both true labels 0; symmetry covers every class
    joint_pos = np.outer(channel[0], channel[0])
    q_pos = float(joint_pos.sum() - np.trace(joint_pos))
    # negative pair with true labels (0, 1)
    joint_neg = np.outer(channel[0], channel[1])
    q_neg = float(np.trace(joint_neg))
    return PairNoiseRates(q_neg=q_neg, q_pos=q_pos)
