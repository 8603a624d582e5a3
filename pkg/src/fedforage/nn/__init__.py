"""Minimal deterministic neural-network engine on flat parameter vectors."""

from .layers import (
    ACTIVATIONS,
    Activation,
    BatchNorm,
    CacheError,
    Conv2D,
    ConvNeXtBlock,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    LayerSpec,
    MaxPool2D,
    ShapeError,
    SoftmaxHead,
    layer_backward,
    layer_forward,
    out_shape,
    param_blocks,
)
from .loss import log_softmax, one_hot, softmax, softmax_cross_entropy
from .network import Network, NetworkSpec, ParamLayout, Segment, infer_shapes
from .optim import AdamState, adam_step, sgd_step
from .gradcheck import gradient_check, layer_gradient_check, numeric_grad, relative_error

__all__ = [
    "ACTIVATIONS",
    "Activation",
    "AdamState",
    "BatchNorm",
    "CacheError",
    "Conv2D",
    "ConvNeXtBlock",
    "Dense",
    "Dropout",
    "Flatten",
    "GlobalAvgPool",
    "LayerSpec",
    "MaxPool2D",
    "Network",
    "NetworkSpec",
    "ParamLayout",
    "Segment",
    "ShapeError",
    "SoftmaxHead",
    "adam_step",
    "gradient_check",
    "infer_shapes",
    "layer_backward",
    "layer_forward",
    "layer_gradient_check",
    "log_softmax",
    "numeric_grad",
    "one_hot",
    "out_shape",
    "param_blocks",
    "relative_error",
    "sgd_step",
    "softmax",
    "softmax_cross_entropy",
]
