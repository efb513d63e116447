"""Grid of weight-shared LSTM cells with nearest-neighbor coupling.

A 2-D grid of cells, each running one shared LSTM core, processes one
signal source per cell; neighbor hidden outputs from the previous time
step feed every gate, a feed-forward head classifies the aggregated
final hidden outputs, and exact backpropagation through time trains the
whole thing end to end.
"""

from .core import (CellCoreParams, CellState, CoreGradients, StepTape,
                   bidirectional_rollout, cellular_lstm_step, lstm_step,
                   rollout, step_backward)
from .data import (Dataset, GridMapping, GridSample, apply_mapping,
                   balance_undersample, decimate, load_dataset, load_mapping,
                   load_sample, save_dataset, save_sample, segment,
                   synth_dataset, zscore)
from .grid import (GridConfig, GridModel, HeadParams, ModelConfig, ParamReport,
                   RolloutTape, backward, count_params, forward, forward_batch,
                   gather_neighbors, head_forward, load_model,
                   load_model_config, mse_loss, receptive_field_probe,
                   save_model, softmax)
from .kernels import init_matrix, make_rng, matvec, sigmoid, tanh_vec
from .metrics import (ConfusionCounts, auc_per_class, auc_score,
                      metric_summary, roc_points)
from .train import (FoldResult, GradCheckReport, TrainConfig, evaluate,
                    fold_indices, gradcheck, kfold, predict, train)

__version__ = "0.1.0"

__all__ = [
    "CellCoreParams", "CellState", "ConfusionCounts", "CoreGradients",
    "Dataset", "FoldResult", "GradCheckReport", "GridConfig", "GridMapping",
    "GridModel", "GridSample", "HeadParams", "ModelConfig", "ParamReport",
    "RolloutTape", "StepTape", "TrainConfig", "apply_mapping", "auc_per_class",
    "auc_score", "backward", "balance_undersample", "bidirectional_rollout",
    "cellular_lstm_step", "count_params", "decimate", "evaluate",
    "fold_indices", "forward", "forward_batch", "gather_neighbors",
    "gradcheck", "head_forward", "init_matrix", "kfold", "load_dataset",
    "load_mapping", "load_model", "load_model_config", "load_sample",
    "lstm_step", "make_rng", "matvec", "metric_summary", "mse_loss",
    "predict", "receptive_field_probe", "roc_points", "rollout",
    "save_dataset", "save_model", "save_sample", "segment", "sigmoid",
    "softmax", "step_backward", "synth_dataset", "tanh_vec", "train",
    "zscore",
]
