from .model import (
    ARCHITECTURES,
    ClassifierModel,
    LatentRep,
    LossSpec,
    Prediction,
    TrainConfig,
    TrainingError,
    UnsupportedArchitectureError,
    class_activation_map,
    input_gradient,
    latent,
    latent_batch,
    logits_batch,
    predict,
    predict_batch,
    predict_labels,
    train,
)
from .persist import ModelIOError, load_model, save_model

__all__ = [
    "ARCHITECTURES",
    "ClassifierModel",
    "LatentRep",
    "LossSpec",
    "ModelIOError",
    "Prediction",
    "TrainConfig",
    "TrainingError",
    "UnsupportedArchitectureError",
    "class_activation_map",
    "input_gradient",
    "latent",
    "latent_batch",
    "load_model",
    "logits_batch",
    "predict",
    "predict_batch",
    "predict_labels",
    "save_model",
    "train",
]
