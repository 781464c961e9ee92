from .affordance import (
    Batch,
    ModelConfig,
    argmax_pixel,
    forward,
    grad,
    init_params,
    loss,
    predict_point,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .tokenizer import tokenize
from .train import TrainArrays, TrainHyper, arrays_from_triples, train

__all__ = [
    "Batch",
    "ModelConfig",
    "TrainArrays",
    "TrainHyper",
    "argmax_pixel",
    "arrays_from_triples",
    "forward",
    "grad",
    "init_params",
    "load_checkpoint",
    "loss",
    "predict_point",
    "save_checkpoint",
    "tokenize",
    "train",
]
