from .autograd import Segments, Tensor, backward, no_grad
from .layers import (GraphNormParams, MlpParams, ParamStore, bce, graph_norm, kl_std_normal,
                     mlp_apply, mse, reparameterize)
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step
from .serialize import CheckpointFormatError, dump_tensors, load_tensors

__all__ = [
    "Adam", "AdamState", "CheckpointFormatError", "GraphNormParams", "MlpParams",
    "NonFiniteGradientError", "ParamStore", "Segments", "Tensor", "adam_step", "backward",
    "bce", "dump_tensors", "graph_norm", "kl_std_normal", "load_tensors", "mlp_apply", "mse",
    "no_grad", "reparameterize",
]
