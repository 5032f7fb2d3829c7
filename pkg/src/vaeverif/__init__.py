"""Diagonal VAE verification backend with a two-covariance PLDA baseline."""

from .evaluation import CostParams, compute_eer, compute_min_dcf, det_points
from .model import DiagGaussian, VaeConfig, VaeModel, init_params
from .plda import LabeledCorpus, PldaTwoCov, fit_two_cov, plda_llr
from .preprocess import Pipeline, apply, fit_pipeline
from .scoring import ScoreSet, Trial, llr, log_joint_marginal, log_marginal, score_trials
from .training import fit

__all__ = [
    "CostParams", "DiagGaussian", "LabeledCorpus", "Pipeline", "PldaTwoCov", "ScoreSet",
    "Trial", "VaeConfig", "VaeModel", "apply", "compute_eer", "compute_min_dcf",
    "det_points", "fit", "fit_pipeline", "fit_two_cov", "init_params", "llr",
    "log_joint_marginal", "log_marginal", "plda_llr", "score_trials",
]

__version__ = "0.1.0"
