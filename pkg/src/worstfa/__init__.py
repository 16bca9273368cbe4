"""Worst-case false-alarm extrapolation for black-box speaker verification scores."""

from .data import (FaCurve, ModelArtifact, PairScoreTable, ScoreFormatError, ScoreSet,
                   load_model, load_score_table, save_model, save_score_table, write_curve)
from .estimate import (FaQuery, SimConfig, bootstrap_ci, empirical_curve, fa_rate, min_dcf_threshold,
                       pair_similarity, worst_case_fa_empirical, zero_effort_fa)
from .locscale import LocScaleParams, fit_generative_gaussian_baseline, ls_sample_worst_case_scores
from .plda import PldaScoreParams, plda_llr, plda_sample_worst_case_scores, simultaneous_diagonalize
from .pwl import MonotonePwl, pwl_eval, pwl_inverse
from .synthetic import GroundTruth, generate_synthetic_table, oracle_curve
from .training import (TrainConfig, extrapolate, relaxed_fa_estimate, train_discriminative,
                       validate_mae)

__version__ = "0.1.0"
