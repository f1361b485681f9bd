"""Minimal layered network core with exact backpropagation."""
from .functional import entropy, log_softmax, softmax, softmax_cross_entropy
from .layers import LayerSpec, conv2d, dense, dropout, flatten, maxpool, relu
from .network import ForwardCache, Network, load_checkpoint, save_checkpoint
from .optim import Adam

__all__ = [
    "Adam", "ForwardCache", "LayerSpec", "Network",
    "conv2d", "dense", "dropout", "entropy", "flatten", "load_checkpoint",
    "log_softmax", "maxpool", "relu", "save_checkpoint", "softmax", "softmax_cross_entropy",
]
