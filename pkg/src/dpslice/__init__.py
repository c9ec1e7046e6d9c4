"""Differentially private synthetic tabular data via noisy random slices.

The private table is released once as noisy low-dimensional Gaussian
projections with a closed-form Renyi privacy accountant; a feed-forward
generator is then trained against those projections by minimizing a
smoothed-sliced f-divergence estimated with kernel mean matching. Training
is pure post-processing: no noisy gradients, no extra privacy cost for
tuning, restarts, or sampling.
"""

from .accounting import (
    InfeasibleOrderError,
    MechanismDims,
    PrivacyReport,
    RenyiPoint,
    UnreachableBudgetError,
    amplify,
    build_report,
    calibrate_sigma,
    deamplify,
    deterministic_epsilon,
    dp_from_rdp,
    epsilon_at,
    gamma_value,
    optimize_alpha,
    rdp_epsilon,
)
from .divergence import (
    CHI_SQUARED,
    JENSEN_SHANNON,
    KL,
    FDivGenerator,
    KernelConfig,
    density_ratio,
    f_divergence_estimate,
    gaussian_kernel,
    median_bandwidth,
    sliced_wasserstein_1d_loss,
    smoothed_sliced_loss,
)
from .evaluate import MetricsReport, evaluate_tables
from .generator import GeneratorModel, OptimizerState, adam_step, backward, forward, init
from .mechanism import (
    ColumnSchema,
    ColumnSpec,
    EncodedMatrix,
    SchemaError,
    SliceBundle,
    apply_mechanism,
    decode,
    encode,
    poisson_subsample,
    release,
)
from .trainer import TrainConfig, TrainHistory, generate, train

__version__ = "0.1.0"
