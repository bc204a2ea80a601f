"""Desk-scale laboratory for the label-noise tolerance of embedding losses.

Directly optimizes per-sample unit vectors on the hypersphere under triplet
and marginal losses, injects uniform label noise, and measures how sampling
schemes and initialization shift the tolerance predicted by the analytic
bounds.
"""

from .core import (
    D_MAX,
    EmbeddingState,
    LabeledPointSet,
    LossConfig,
    PairLabel,
    Triplet,
    load_point_set,
    pair_label,
    pairwise_distance,
    save_point_set,
)
from .datagen import SynthSpec, generate, subsample_clean
from .harness import MethodSpec, SweepConfig, emit_report, run_sweep
from .losses import (
    auxiliary_pair_loss,
    loss_gradient,
    marginal_loss,
    triplet_loss,
    unhinged_marginal_loss,
    unhinged_triplet_loss,
)
from .metrics import EvalReport, evaluate_embedding, kmeans, nmi, recall_at_k
from .noise import (
    NoiseSpec,
    PairNoiseRates,
    exhaustive_pair_noise,
    inject_noise,
    monte_carlo_pair_noise,
    pair_noise_rates,
)
from .optimizer import TrainConfig, initialize_embeddings, train
from .risk import (
    BoundResult,
    WeightScheme,
    empirical_risk,
    expected_noisy_pair_risk,
    marginal_partition,
    q_multiplier,
    residual_z_estimate,
    solve_marginal_bound,
    solve_triplet_bound,
    verify_risk_ordering,
)
from .sampling import (
    MinibatchSpec,
    SelectionLog,
    SkewEstimate,
    build_minibatch_pairs,
    build_minibatch_triplets,
    enumerate_positive_pairs,
    estimate_skew,
    fixed_semi_hard_negative,
    random_semi_hard_negative,
)
from .verify import run_all

__version__ = "0.1.0"
