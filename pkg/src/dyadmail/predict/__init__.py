"""Reply-time, reply-length and thread-end prediction."""
from .evaluate import EvalReport, baselines, binary_auc, class_rmse, confusion_matrix, evaluate, weighted_auc
from .labels import (
    LAST_EMAIL,
    REPLY_LENGTH,
    REPLY_TIME,
    TASKS,
    ClassScheme,
    bin_reply_length,
    bin_reply_time,
    scheme_for,
)
from .model import Hyperparams, Model, TrainingError, load_model, predict, save_model, train
from .ranking import chi2_rank, chi2_statistic, discretize, top_k_selection
