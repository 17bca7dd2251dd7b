"""Confidence-separable pseudo-label selection.

Per-pixel max confidence and residual dispersion, a spectral two-way split of
that feature space, Gaussian loss weights, trusted mask perturbation, losses
and selection-quality metrics.
"""
__version__ = "0.1.0"

from .arraystore import NpyFormatError, NpyUnsupportedError, read_array, write_array
from .evaluation import QualityReport, compare, score
from .features import (
    FeatureMatrix,
    alternative_metric,
    build_feature_matrix,
    max_confidence,
    residual_dispersion,
    taylor_approximation_error,
)
from .kernels import HAVE_NUMBA
from .losses import LossBreakdown, combined_unsupervised, loss_breakdown, supervised_ce, weighted_ce
from .perturbation import PerturbationMask, apply_mask, make_mask
from .separation import (
    SelectionOutcome,
    SeparationConfig,
    brute_force_partition,
    gaussian_weights,
    select,
    spectral_partition,
    threshold_baseline,
)
from .synthgen import SynthConfig, generate
