"""Graph network for fix and criticality prediction."""

from .io import ModelLoadError, deserialize, load_model, save_model, serialize
from .model import (ForwardTape, GraphBatch, Hyper, ModelError, ModelParams, attention_scores, backward,
                    forward, init_params, layer_forward, param_shapes)

__all__ = [
    "ForwardTape", "GraphBatch", "attention_scores", "layer_forward", "Hyper", "ModelError", "ModelLoadError", "ModelParams",
    "backward", "deserialize", "forward", "init_params", "load_model", "param_shapes",
    "save_model", "serialize",
]
