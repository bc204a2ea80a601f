"""Empirical risk, the noisy-risk decomposition, and noise-tolerance bounds.

Under uniform label noise the expected weighted pair risk is an affine
function of the clean pair risk; the scale is the per-channel multiplier
1 - q_t - q_t * w_{-t}/w_t and the offset is w_{-t} * q_t * d_max. Noise
tolerance requires the smaller channel multiplier Q to stay nonnegative,
and the bound solvers find the largest sample noise rate for which it does,
using the exact finite-K flip rates rather than the large-K limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import D_MAX, EmbeddingState, LabeledPointSet, LossConfig, Triplet
from .losses import (
    PairItem,
    auxiliary_pair_loss,
    marginal_loss,
    triplet_loss,
    unhinged_marginal_loss,
    unhinged_triplet_loss,
)
from .noise import NoiseSpec, PairNoiseRates, pair_noise_rates
from .sampling import SkewEstimate

__all__ = [
    "WeightScheme",
    "ExpectedPairRisk",
    "RiskReport",
    "BoundResult",
    "RiskOrderingReport",
    "MarginalPartition",
    "ZEstimate",
    "empirical_risk",
    "expected_noisy_pair_risk",
    "channel_multipliers",
    "q_multiplier",
    "solve_triplet_bound",
    "solve_marginal_bound",
    "assemble_risk_report",
    "verify_risk_ordering",
    "marginal_partition",
    "residual_z_estimate",
]


@dataclass(frozen=True)
class WeightScheme:
    """Per-channel pair weights; the 1-1 scheme uses (1, 1/K)."""

    w_pos: float
    w_neg: float

    def __post_init__(self):
        if self.w_pos <= 0 or self.w_neg <= 0:
            raise ValueError("pair weights must be positive")

    @classmethod
    def one_one(cls, K: int) -> "WeightScheme":
        return cls(w_pos=1.0, w_neg=1.0 / K)

    def of(self, t: int) -> float:
        return self.w_pos if t > 0 else self.w_neg

    def opposite(self, t: int) -> float:
        return self.w_neg if t > 0 else self.w_pos


def _item_loss(item: Union[Triplet, PairItem], emb: EmbeddingState, cfg: LossConfig) -> float:
    v = emb.vectors
    if isinstance(item, Triplet):
        d_ap = float(np.linalg.norm(v[item.a] - v[item.p]))
        d_an = float(np.linalg.norm(v[item.a] - v[item.n]))
        if cfg.hinged:
            return triplet_loss(d_ap, d_an, cfg).value
        return unhinged_triplet_loss(d_ap, d_an, cfg)
    i, j, t = item
    d_ij = float(np.linalg.norm(v[i] - v[j]))
    if cfg.hinged:
        return marginal_loss(d_ij, t, cfg).value
    return unhinged_marginal_loss(d_ij, t, cfg)


def empirical_risk(
    items: Iterable[tuple[Union[Triplet, PairItem], float]],
    emb: EmbeddingState,
    cfg: LossConfig,
) -> float:
    """Weighted mean of the configured loss over the given items."""
    total = 0.0
    weight_sum = 0.0
    for item, weight in items:
        total += weight * _item_loss(item, emb, cfg)
        weight_sum += weight
    if weight_sum == 0.0:
        raise ValueError("empirical risk over an empty item set is undefined")
    return total / weight_sum


@dataclass(frozen=True)
class ExpectedPairRisk:
    """Expected weighted pair risk under label noise, computed two ways.

    ``two_branch`` mixes the kept and flipped branches directly;
    ``affine`` evaluates scale * clean + offset. The two agree to
    floating-point precision, which the test suite pins at 1e-12.
    """

    two_branch: float
    affine: float
    scale: float
    offset: float


def expected_noisy_pair_risk(
    l_clean: float, t: int, weights: WeightScheme, rates: PairNoiseRates
) -> ExpectedPairRisk:
    """Expected weighted auxiliary loss of one pair whose label may flip."""
    q = rates.q_pos if t > 0 else rates.q_neg
    w_t = weights.of(t)
    w_not = weights.opposite(t)
    two_branch = (1.0 - q) * w_t * l_clean + q * w_not * (D_MAX - l_clean)
    scale = (1.0 - q - q * w_not / w_t) * w_t
    offset = w_not * q * D_MAX
    return ExpectedPairRisk(
        two_branch=two_branch, affine=scale * l_clean + offset, scale=scale, offset=offset
    )


def channel_multipliers(
    weights: WeightScheme, rates: PairNoiseRates
) -> tuple[float, float]:
    """(positive, negative) channel multipliers 1 - q_t - q_t * w_{-t}/w_t."""
    c_pos = 1.0 - rates.q_pos - rates.q_pos * weights.w_neg / weights.w_pos
    c_neg = 1.0 - rates.q_neg - rates.q_neg * weights.w_pos / weights.w_neg
    return c_pos, c_neg


def q_multiplier(weights: WeightScheme, rates: PairNoiseRates) -> float:
    """The smaller channel multiplier; tolerance requires it nonnegative."""
    return min(channel_multipliers(weights, rates))


@dataclass(frozen=True)
class BoundResult:
    """Largest tolerated sample noise rate for a loss/mining combination."""

    p_star: float
    asymptotic: float
    exact: bool
    eta_or_gamma: float
    K: int

    def __post_init__(self):
        if not 0.0 <= self.p_star <= 1.0:
            raise ValueError("p_star must lie in [0, 1]")


def _worst_case_weights(K: int, eta: float) -> WeightScheme:
    # the binding channel is a negative pair carrying the easy-pair weight
    # 1/(eta*K): its flip to a positive multiplies its weight by eta*K
    return WeightScheme(w_pos=1.0, w_neg=1.0 / (eta * K))


def _q_of_p(p: float, K: int, weights: WeightScheme) -> float:
    return q_multiplier(weights, pair_noise_rates(NoiseSpec(p=p, K=K)))


def _solve_exact(K: int, weights: WeightScheme) -> float:
    """Zero crossing of Q(p) on [0, (K-1)/K] by bisection.

    Both flip rates increase on that interval, so Q decreases; a grid check
    guards the assumption and falls back to bracketing the last nonnegative
    grid point if it ever fails.
    """
    hi_limit = (K - 1) / K - 1e-12
    grid = np.linspace(0.0, hi_limit, 257)
    values = np.array([_q_of_p(float(p), K, weights) for p in grid])
    monotone = bool(np.all(np.diff(values) <= 1e-12))
    if values[0] < 0.0:
        return 0.0
    if values[-1] >= 0.0:
        return float(hi_limit)
    if monotone:
        lo, hi = 0.0, float(hi_limit)
    else:
        # non-monotone condition: bracket the last sign change on the grid
        last_nonneg = int(np.max(np.flatnonzero(values >= 0.0)))
        lo, hi = float(grid[last_nonneg]), float(grid[last_nonneg + 1])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _q_of_p(mid, K, weights) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_triplet_bound(K: int, eta: float) -> BoundResult:
    """Noise tolerance of the 1-1 triplet scheme with mining skew eta.

    The asymptotic bound is 1 - sqrt(1 - 1/eta); the exact value comes from
    bisection of the finite-K condition Q(p) >= 0 under worst-case skewed
    weights (1, 1/(eta*K)).
    """
    if K < 3:
        raise ValueError("triplet bound requires K >= 3")
    if eta < 1.0:
        raise ValueError("eta must be >= 1")
    asymptotic = 1.0 - math.sqrt(1.0 - 1.0 / eta)
    p_star = _solve_exact(K, _worst_case_weights(K, eta))
    return BoundResult(
        p_star=p_star, asymptotic=asymptotic, exact=True, eta_or_gamma=eta, K=K
    )


def solve_marginal_bound(K: int, gamma: float) -> BoundResult:
    """Noise tolerance of the marginal loss with skew ratio gamma.

    Same solver as the triplet bound with weight ratio gamma/K between the
    negative and positive channels; asymptotically 1 - sqrt(1 - gamma).
    """
    if K < 3:
        raise ValueError("marginal bound requires K >= 3")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    asymptotic = 1.0 - math.sqrt(1.0 - gamma)
    weights = WeightScheme(w_pos=1.0, w_neg=gamma / K)
    p_star = _solve_exact(K, weights)
    return BoundResult(
        p_star=p_star, asymptotic=asymptotic, exact=True, eta_or_gamma=gamma, K=K
    )


# --- whole-set risk accounting over clean-labeled pairs ---


def _pair_arrays(pairs: Sequence[PairItem]):
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("pair set is empty")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _aux_losses(vectors: np.ndarray, I, J, T) -> np.ndarray:
    d = np.linalg.norm(vectors[I] - vectors[J], axis=1)
    return np.where(T > 0, d, D_MAX - d)


@dataclass(frozen=True)
class RiskReport:
    """Clean and expected-noisy weighted risk over a pair set, with the
    channel sums and affine coefficients that relate them."""

    clean_risk: float
    noisy_risk_expected: float
    q_value: float
    s_pos: float
    s_neg: float
    scale_pos: float
    scale_neg: float
    offset_pos: float
    offset_neg: float


def assemble_risk_report(
    pairs: Sequence[PairItem],
    emb: EmbeddingState,
    weights: WeightScheme,
    rates: PairNoiseRates,
) -> RiskReport:
    """Weighted clean risk and its expected value under label noise.

    Both risks share the clean normalizer sum(w_t), which keeps the affine
    relation between them exact pair by pair.
    """
    I, J, T = _pair_arrays(pairs)
    aux = _aux_losses(emb.vectors, I, J, T)
    pos = T > 0
    w = np.where(pos, weights.w_pos, weights.w_neg)
    z = float(w.sum())
    c_pos, c_neg = channel_multipliers(weights, rates)
    scale = np.where(pos, c_pos * weights.w_pos, c_neg * weights.w_neg)
    offset = np.where(
        pos, weights.w_neg * rates.q_pos * D_MAX, weights.w_pos * rates.q_neg * D_MAX
    )
    return RiskReport(
        clean_risk=float((w * aux).sum() / z),
        noisy_risk_expected=float((scale * aux + offset).sum() / z),
        q_value=min(c_pos, c_neg),
        s_pos=float(aux[pos].sum()),
        s_neg=float(aux[~pos].sum()),
        scale_pos=c_pos * weights.w_pos,
        scale_neg=c_neg * weights.w_neg,
        offset_pos=weights.w_neg * rates.q_pos * D_MAX,
        offset_neg=weights.w_pos * rates.q_neg * D_MAX,
    )


@dataclass(frozen=True)
class RiskOrderingReport:
    """Numerical check of the minimizer-transfer chain between two embeddings.

    When the candidate minimizer has per-channel sums no larger than the
    comparison embedding, the expected noisy risk difference is bounded by
    Q times the clean weighted risk difference, and both are nonpositive
    whenever Q >= 0.
    """

    s_pos_star: float
    s_pos_other: float
    s_neg_star: float
    s_neg_other: float
    precondition_pos: bool
    precondition_neg: bool
    failed_channels: tuple[str, ...]
    q_value: float
    noisy_diff: float
    clean_diff: float
    bound_value: float
    chain_holds: bool
    conclusion_holds: bool

    @property
    def preconditions_hold(self) -> bool:
        return self.precondition_pos and self.precondition_neg


def verify_risk_ordering(
    emb_star: EmbeddingState,
    emb_other: EmbeddingState,
    pair_set: Sequence[PairItem],
    weights: WeightScheme,
    rates: PairNoiseRates,
    tol: float = 1e-9,
) -> RiskOrderingReport:
    """Check the inequality chain noisy_diff <= Q * clean_diff <= 0 on one
    concrete instance. A failed per-channel precondition is reported, not
    raised; the chain is then not asserted for that channel."""
    star = assemble_risk_report(pair_set, emb_star, weights, rates)
    other = assemble_risk_report(pair_set, emb_other, weights, rates)
    pre_pos = star.s_pos <= other.s_pos + tol
    pre_neg = star.s_neg <= other.s_neg + tol
    failed = tuple(
        name
        for name, ok in (("positive", pre_pos), ("negative", pre_neg))
        if not ok
    )
    noisy_diff = star.noisy_risk_expected - other.noisy_risk_expected
    clean_diff = star.clean_risk - other.clean_risk
    q = star.q_value
    bound_value = q * clean_diff
    chain = noisy_diff <= bound_value + tol
    conclusion = chain and bound_value <= tol if (pre_pos and pre_neg and q >= 0) else False
    return RiskOrderingReport(
        s_pos_star=star.s_pos,
        s_pos_other=other.s_pos,
        s_neg_star=star.s_neg,
        s_neg_other=other.s_neg,
        precondition_pos=pre_pos,
        precondition_neg=pre_neg,
        failed_channels=failed,
        q_value=q,
        noisy_diff=noisy_diff,
        clean_diff=clean_diff,
        bound_value=bound_value,
        chain_holds=chain,
        conclusion_holds=conclusion,
    )


@dataclass(frozen=True)
class MarginalPartition:
    """Pairs split by hinge activity under clean versus observed labels.

    clean_only: active under the clean channel, silent under noise;
    noisy_only: the reverse; both: active in both channels. Pairs inactive
    in both channels belong to none of the sets.
    """

    clean_only: tuple[tuple[int, int], ...]
    noisy_only: tuple[tuple[int, int], ...]
    both: tuple[tuple[int, int], ...]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.clean_only), len(self.noisy_only), len(self.both)


def _hinge_active(d: np.ndarray, t: np.ndarray, cfg: LossConfig) -> np.ndarray:
    # positive pairs are active above beta - alpha, negatives below beta + alpha
    return np.where(t > 0, d > cfg.beta - cfg.alpha, d < cfg.beta + cfg.alpha)


def marginal_partition(
    pset: LabeledPointSet,
    emb: EmbeddingState,
    cfg: LossConfig,
    pairs: Optional[Sequence[tuple[int, int]]] = None,
) -> MarginalPartition:
    """Partition pairs by marginal hinge activity under both label channels.

    The point set supplies the noise realization through its observed labels;
    defaults to every unordered pair.
    """
    if pairs is None:
        pairs = [(i, j) for i in range(pset.n) for j in range(i + 1, pset.n)]
    arr = np.asarray(pairs, dtype=np.int64)
    I, J = arr[:, 0], arr[:, 1]
    d = np.linalg.norm(emb.vectors[I] - emb.vectors[J], axis=1)
    t_clean = np.where(pset.true_labels[I] == pset.true_labels[J], 1, -1)
    t_noisy = np.where(pset.observed_labels[I] == pset.observed_labels[J], 1, -1)
    active_clean = _hinge_active(d, t_clean, cfg)
    active_noisy = _hinge_active(d, t_noisy, cfg)
    as_tuples = [tuple(map(int, pair)) for pair in arr]
    clean_only = tuple(
        p for p, c, nz in zip(as_tuples, active_clean, active_noisy) if c and not nz
    )
    noisy_only = tuple(
        p for p, c, nz in zip(as_tuples, active_clean, active_noisy) if nz and not c
    )
    both = tuple(
        p for p, c, nz in zip(as_tuples, active_clean, active_noisy) if c and nz
    )
    return MarginalPartition(clean_only=clean_only, noisy_only=noisy_only, both=both)


@dataclass(frozen=True)
class ZEstimate:
    """Counterweight factor for the marginal residual heuristic.

    The residual is negative with high probability when z * |clean_only|
    exceeds |noisy_only|; z grows without bound as gamma approaches 1.
    """

    z: float
    unbounded: bool


def residual_z_estimate(skew: SkewEstimate) -> ZEstimate:
    """z = 1 / (eta_plus/eta_minus - 1), from the measured skew ratio."""
    if skew.gamma is None:
        raise ValueError("skew estimate carries no gamma; run marginal mining")
    if skew.gamma >= 1.0:
        return ZEstimate(z=math.inf, unbounded=True)
    return ZEstimate(z=skew.gamma / (1.0 - skew.gamma), unbounded=False)
