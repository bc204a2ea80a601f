"""Loss functions on pair distances and their analytic gradients.

Hinged losses (marginal, triplet) clamp at zero; their unhinged counterparts
drop the clamp, which makes the pair-wise decomposition exact:

    aux(d, +1) = d          aux(d, -1) = d_max - d
    unhinged triplet(d_ap, d_an) = aux(d_ap, +1) + aux(d_an, -1) + alpha

Gradients are taken with respect to the raw embedding coordinates; the
optimizer projects them onto the sphere's tangent plane before stepping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import D_MAX, EmbeddingState, LossConfig, Triplet

__all__ = [
    "PairLossValue",
    "GradientContribution",
    "PairItem",
    "marginal_loss",
    "triplet_loss",
    "auxiliary_pair_loss",
    "unhinged_triplet_loss",
    "unhinged_marginal_loss",
    "loss_gradient",
    "project_tangent",
]

ZERO_DISTANCE_TOL = 1e-12

# (i, j, t) with t in {-1, +1}
PairItem = tuple[int, int, int]


@dataclass(frozen=True)
class PairLossValue:
    """Nonnegative loss value plus whether the hinge is active."""

    value: float
    active: bool


def marginal_loss(d_ij: float, t: int, cfg: LossConfig) -> PairLossValue:
    """Hinged threshold loss [(d_ij - beta) * t + alpha]_+ for one pair."""
    raw = (d_ij - cfg.beta) * float(t) + cfg.alpha
    return PairLossValue(value=max(raw, 0.0), active=raw > 0.0)


def triplet_loss(d_ap: float, d_an: float, cfg: LossConfig) -> PairLossValue:
    """Hinged ranking loss [d_ap - d_an + alpha]_+ for one triplet."""
    raw = d_ap - d_an + cfg.alpha
    return PairLossValue(value=max(raw, 0.0), active=raw > 0.0)


def auxiliary_pair_loss(d_ij: float, t: int) -> float:
    """Unhinged per-pair loss: d for positives, d_max - d for negatives.

    Satisfies the reflection identity aux(d, -t) = d_max - aux(d, t) exactly.
    """
    if t > 0:
        return d_ij
    return D_MAX - d_ij


def unhinged_triplet_loss(d_ap: float, d_an: float, cfg: LossConfig) -> float:
    """d_max + d_ap - d_an + alpha; the triplet loss without the clamp."""
    return D_MAX + d_ap - d_an + cfg.alpha


def unhinged_marginal_loss(d_ij: float, t: int, cfg: LossConfig) -> float:
    """d_max + (d_ij - beta) * t + alpha; the marginal loss without the clamp.

    Its reflection satisfies l(-t) = 2*d_max + 2*alpha - l(t) exactly.
    """
    return D_MAX + (d_ij - cfg.beta) * float(t) + cfg.alpha


@dataclass
class GradientContribution:
    """Gradient rows for the 2-3 samples a single loss term touches.

    ``degenerate`` marks a zero-distance pair hit while its hinge was active;
    the contribution is all zeros in that case and callers count the event.
    """

    indices: tuple[int, ...]
    grads: np.ndarray
    degenerate: bool = False

    def is_zero(self) -> bool:
        return not np.any(self.grads)


def project_tangent(grads: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Remove the radial component so each row is tangent to the sphere."""
    radial = np.sum(grads * vectors, axis=-1, keepdims=True)
    return grads - radial * vectors


def _unit_difference(vi: np.ndarray, vj: np.ndarray) -> tuple[np.ndarray, bool]:
    diff = vi - vj
    dist = float(np.linalg.norm(diff))
    if dist <= ZERO_DISTANCE_TOL:
        return np.zeros_like(diff), True
    return diff / dist, False


def loss_gradient(
    emb: EmbeddingState, item: Union[Triplet, PairItem], cfg: LossConfig
) -> GradientContribution:
    """Analytic gradient of the configured loss with respect to the embedding
    vectors the item touches. Inactive hinges contribute exact zeros; the
    subgradient at the kink is taken as zero.
    """
    v = emb.vectors
    if isinstance(item, Triplet):
        if cfg.family != "triplet":
            raise ValueError("triplet item passed to a non-triplet loss config")
        a, p, n = item.a, item.p, item.n
        d_ap = float(np.linalg.norm(v[a] - v[p]))
        d_an = float(np.linalg.norm(v[a] - v[n]))
        active = (not cfg.hinged) or (d_ap - d_an + cfg.alpha > 0.0)
        grads = np.zeros((3, emb.d))
        if not active:
            return GradientContribution((a, p, n), grads)
        u_ap, bad_ap = _unit_difference(v[a], v[p])
        u_an, bad_an = _unit_difference(v[a], v[n])
        if bad_ap or bad_an:
            return GradientContribution((a, p, n), grads, degenerate=True)
        grads[0] = u_ap - u_an
        grads[1] = -u_ap
        grads[2] = u_an
        return GradientContribution((a, p, n), grads)

    i, j, t = item
    if cfg.family != "marginal":
        raise ValueError("pair item passed to a non-marginal loss config")
    d_ij = float(np.linalg.norm(v[i] - v[j]))
    active = (not cfg.hinged) or ((d_ij - cfg.beta) * float(t) + cfg.alpha > 0.0)
    grads = np.zeros((2, emb.d))
    if not active:
        return GradientContribution((i, j), grads)
    u_ij, bad = _unit_difference(v[i], v[j])
    if bad:
        return GradientContribution((i, j), grads, degenerate=True)
    grads[0] = float(t) * u_ij
    grads[1] = -float(t) * u_ij
    return GradientContribution((i, j), grads)
