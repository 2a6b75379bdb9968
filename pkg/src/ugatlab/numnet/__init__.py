"""Minimal dense numeric kernel: MLPs with exact backprop, losses, Adam.

Matrices are 2-D float64 numpy arrays in C (row-major) order, vectors are
1-D float64 arrays; batched calls stack samples along the first axis.
"""

from ugatlab.numnet.mlp import (
    CacheError,
    ForwardCache,
    Gradients,
    MlpModel,
    MlpSpec,
    ShapeError,
    backward,
    clone_model,
    forward,
    init_model,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    softmax,
)
from ugatlab.numnet.losses import EvidenceError, cce_loss, edl_loss, mse_loss
from ugatlab.numnet.adam import AdamState, adam_step, init_adam
from ugatlab.numnet.gradcheck import GradCheckResult, gradcheck

__all__ = [
    "AdamState",
    "CacheError",
    "EvidenceError",
    "ForwardCache",
    "GradCheckResult",
    "Gradients",
    "MlpModel",
    "MlpSpec",
    "ShapeError",
    "adam_step",
    "backward",
    "cce_loss",
    "clone_model",
    "edl_loss",
    "forward",
    "gradcheck",
    "init_adam",
    "init_model",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "mse_loss",
    "save_model",
    "softmax",
]
