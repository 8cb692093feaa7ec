"""Feedforward networks with hand-written backprop, multi-task structured-output
training and class-wise hint regularization."""
from .core_math import Activation, Loss, ShapeError
from .estimators import HintMLPClassifier, MtlRegressor
from .hint import Dissimilarity, HintConfig, hint_penalty, invariance_probe
from .metrics import aggregate_runs, auc_cdf, cdf_at, classification_error, nrmse
from .mtl import MtlNetwork, ScheduleKind, ScheduleSpec, mtl_criterion, schedule_eval
from .network import LayerSpec, Network, backward, forward, init_weights, make_specs
from .optim import EarlyStopState, NumericalAbort, OptimConfig, OptimizerState, sgd_step

__version__ = "0.1.0"

__all__ = [
    "Activation", "Loss", "ShapeError", "HintMLPClassifier", "MtlRegressor", "Dissimilarity",
    "HintConfig", "hint_penalty", "invariance_probe", "aggregate_runs", "auc_cdf", "cdf_at",
    "classification_error", "nrmse", "MtlNetwork", "ScheduleKind", "ScheduleSpec",
    "mtl_criterion", "schedule_eval", "LayerSpec", "Network", "backward", "forward",
    "init_weights", "make_specs", "EarlyStopState", "NumericalAbort", "OptimConfig",
    "OptimizerState", "sgd_step",
]
