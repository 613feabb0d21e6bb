from .baseline import logistic_baseline_fit, logistic_baseline_predict
from .benchmark import run_binary_benchmark, run_misspec, run_table1
from .fitter import build_dataset, fit, fit_observed
from .predictor import build_predictor_state, classify, conditional_mean_given_u, predict, predict_many
from .sampler import estep_log_target, mh_run, prediction_log_target
from .simulation import gamma_distance, generate, generate_binary, perr

__all__ = [
    "build_dataset",
    "fit",
    "fit_observed",
    "estep_log_target",
    "prediction_log_target",
    "mh_run",
    "build_predictor_state",
    "conditional_mean_given_u",
    "predict",
    "predict_many",
    "classify",
    "generate",
    "generate_binary",
    "gamma_distance",
    "perr",
    "logistic_baseline_fit",
    "logistic_baseline_predict",
    "run_table1",
    "run_misspec",
    "run_binary_benchmark",
]
