from .io import ModelFileError, load_model, save_model
from .layers import attention_forward, gru_cell_step, gru_layer_forward
from .model import (
    VARIANTS,
    ModelConfig,
    ModelParams,
    init_params,
    mae_loss,
    model_backward,
    model_forward,
    predict,
)
from .optim import RMSProp, rmsprop_step
from .train import TrainConfig, TrainingDiverged, fit, train_model

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "ModelFileError",
    "ModelParams",
    "RMSProp",
    "TrainConfig",
    "TrainingDiverged",
    "attention_forward",
    "fit",
    "gru_cell_step",
    "gru_layer_forward",
    "init_params",
    "load_model",
    "mae_loss",
    "model_backward",
    "model_forward",
    "predict",
    "rmsprop_step",
    "save_model",
    "train_model",
]
