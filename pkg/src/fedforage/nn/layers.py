"""Layer definitions with explicit forward/backward passes.

Every layer is a frozen dataclass describing hyperparameters only; parameters
live in a flat vector owned by the network (see ``network.ParamLayout``) and
are handed to the layer functions as dicts of named array views.  Convolutions
are stride 1 with same-padding; pooling is fixed 2x2 / stride 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

import numpy as np

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "elu")


class ShapeError(ValueError):
    """Input shape incompatible with a layer."""


class CacheError(ValueError):
    """Backward called with a cache that does not match the layer."""


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel: int = 3

    def __post_init__(self):
        if self.out_channels < 1:
            raise ValueError(f"out_channels must be positive, got {self.out_channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")


@dataclass(frozen=True)
class MaxPool2D:
    """2x2 max pooling with stride 2."""


@dataclass(frozen=True)
class Activation:
    fn: str = "leaky_relu"
    alpha: float = 0.1  # negative slope, leaky_relu only

    def __post_init__(self):
        if self.fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.fn!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")


@dataclass(frozen=True)
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"rate must be in [0,1), got {self.rate}")


@dataclass(frozen=True)
class BatchNorm:
    momentum: float = 0.99
    epsilon: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum must be in (0,1), got {self.momentum}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class GlobalAvgPool:
    """Spatial mean per channel; output is already flat (batch, channels)."""


@dataclass(frozen=True)
class Dense:
    units: int

    def __post_init__(self):
        if self.units < 1:
            raise ValueError(f"units must be positive, got {self.units}")


@dataclass(frozen=True)
class ConvNeXtBlock:
    """Depthwise conv -> 1x1 expansion -> activation -> 1x1 projection -> residual."""

    channels: int
    kernel: int = 3
    expansion: int = 4
    fn: str = "leaky_relu"
    alpha: float = 0.1

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if self.expansion < 1:
            raise ValueError(f"expansion must be positive, got {self.expansion}")
        if self.fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.fn!r}")


@dataclass(frozen=True)
class SoftmaxHead:
    """Final affine map onto class logits; probabilities via loss.softmax."""

    classes: int

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")


LayerSpec = Union[
    Conv2D,
    MaxPool2D,
    Activation,
    Dropout,
    BatchNorm,
    Flatten,
    GlobalAvgPool,
    Dense,
    ConvNeXtBlock,
    SoftmaxHead,
]


# ---------------------------------------------------------------------------
# shape algebra


def out_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Output shape (without batch dimension) for `layer` on `in_shape`."""
    if isinstance(layer, Conv2D):
        _need_rank(layer, in_shape, 3)
        c, h, w = in_shape
        return (layer.out_channels, h, w)
    if isinstance(layer, MaxPool2D):
        _need_rank(layer, in_shape, 3)
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ShapeError(f"MaxPool2D needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)
    if isinstance(layer, (Activation, Dropout, BatchNorm)):
        return in_shape
    if isinstance(layer, Flatten):
        return (int(np.prod(in_shape)),)
    if isinstance(layer, GlobalAvgPool):
        _need_rank(layer, in_shape, 3)
        return (in_shape[0],)
    if isinstance(layer, Dense):
        _need_rank(layer, in_shape, 1)
        return (layer.units,)
    if isinstance(layer, ConvNeXtBlock):
        _need_rank(layer, in_shape, 3)
        if in_shape[0] != layer.channels:
            raise ShapeError(
                f"ConvNeXtBlock expects {layer.channels} channels, got {in_shape[0]}"
            )
        return in_shape
    if isinstance(layer, SoftmaxHead):
        _need_rank(layer, in_shape, 1)
        return (layer.classes,)
    raise TypeError(f"unknown layer {layer!r}")


def _need_rank(layer: LayerSpec, in_shape: tuple[int, ...], rank: int) -> None:
    if len(in_shape) != rank:
        raise ShapeError(
            f"{type(layer).__name__} expects rank-{rank} input (without batch), "
            f"got shape {in_shape}"
        )


def param_blocks(layer: LayerSpec, in_shape: tuple[int, ...]) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) parameter blocks owned by `layer`."""
    if isinstance(layer, Conv2D):
        c = in_shape[0]
        return [
            ("weight", (layer.out_channels, c, layer.kernel, layer.kernel)),
            ("bias", (layer.out_channels,)),
        ]
    if isinstance(layer, BatchNorm):
        c = in_shape[0]
        return [
            ("gamma", (c,)),
            ("beta", (c,)),
            ("running_mean", (c,)),
            ("running_var", (c,)),
        ]
    if isinstance(layer, Dense):
        return [("weight", (layer.units, in_shape[0])), ("bias", (layer.units,))]
    if isinstance(layer, SoftmaxHead):
        return [("weight", (layer.classes, in_shape[0])), ("bias", (layer.classes,))]
    if isinstance(layer, ConvNeXtBlock):
        c, e = layer.channels, layer.expansion
        return [
            ("dw_weight", (c, layer.kernel, layer.kernel)),
            ("dw_bias", (c,)),
            ("pw1_weight", (e * c, c)),
            ("pw1_bias", (e * c,)),
            ("pw2_weight", (c, e * c)),
            ("pw2_bias", (c,)),
        ]
    return []


STATE_BLOCKS = frozenset({"running_mean", "running_var"})


def init_blocks(
    layer: LayerSpec,
    in_shape: tuple[int, ...],
    rng: np.random.Generator,
    dtype: np.dtype,
) -> dict[str, np.ndarray]:
    """He-uniform weights, zero biases, unit/zero batch-norm parameters."""

    def he(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    out: dict[str, np.ndarray] = {}
    for name, shape in param_blocks(layer, in_shape):
        if name == "weight":
            fan_in = int(np.prod(shape[1:]))
            out[name] = he(shape, fan_in)
        elif name == "dw_weight":
            out[name] = he(shape, shape[1] * shape[2])
        elif name in ("pw1_weight", "pw2_weight"):
            out[name] = he(shape, shape[1])
        elif name in ("gamma", "running_var"):
            out[name] = np.ones(shape, dtype=dtype)
        else:  # biases, beta, running_mean
            out[name] = np.zeros(shape, dtype=dtype)
    return out


# ---------------------------------------------------------------------------
# activations


def _act_forward(fn: str, alpha: float, x: np.ndarray) -> np.ndarray:
    if fn == "relu":
        return np.maximum(x, 0.0)
    if fn == "leaky_relu":
        return np.where(x >= 0.0, x, alpha * x)
    if fn == "tanh":
        return np.tanh(x)
    if fn == "elu":
        return np.where(x >= 0.0, x, np.expm1(np.minimum(x, 0.0)))
    raise ValueError(f"unknown activation {fn!r}")


def _act_backward(fn: str, alpha: float, x: np.ndarray, y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    if fn == "relu":
        return gy * (x > 0.0)
    if fn == "leaky_relu":
        return gy * np.where(x >= 0.0, 1.0, alpha)
    if fn == "tanh":
        return gy * (1.0 - y * y)
    if fn == "elu":
        return gy * np.where(x >= 0.0, 1.0, y + 1.0)
    raise ValueError(f"unknown activation {fn!r}")


# ---------------------------------------------------------------------------
# convolution helpers (stride 1, same padding)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    b, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, h * w, c * k * k)


def _col2im(dcols: np.ndarray, x_shape: tuple[int, ...], k: int) -> np.ndarray:
    b, c, h, w = x_shape
    p = k // 2
    dxp = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=dcols.dtype)
    d = dcols.reshape(b, h, w, c, k, k)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + w] += d[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, p : p + h, p : p + w]


def _dw_windows(x: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    return np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))


def _dw_input_grad(gy: np.ndarray, w: np.ndarray, x_shape: tuple[int, ...], k: int) -> np.ndarray:
    b, c, h, w_ = x_shape
    p = k // 2
    dxp = np.zeros((b, c, h + 2 * p, w_ + 2 * p), dtype=gy.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + w_] += w[None, :, i, j, None, None] * gy
    return dxp[:, :, p : p + h, p : p + w_]


# ---------------------------------------------------------------------------
# forward / backward dispatch


def layer_forward(
    layer: LayerSpec,
    x: np.ndarray,
    params: dict[str, np.ndarray],
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, Any]:
    """Run one layer; returns (output, cache). Cache feeds layer_backward."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    out_shape(layer, x.shape[1:])  # validates input compatibility

    if isinstance(layer, Conv2D):
        w, bias = params["weight"], params["bias"]
        if w.shape[1] != x.shape[1]:
            raise ShapeError(
                f"Conv2D weight expects {w.shape[1]} input channels, got {x.shape[1]}"
            )
        b, c, h, wd = x.shape
        cols = _im2col(x, layer.kernel)
        wm = w.reshape(layer.out_channels, -1)
        y = cols @ wm.T + bias
        y = y.transpose(0, 2, 1).reshape(b, layer.out_channels, h, wd)
        return y, ("conv", x.shape, cols, wm)

    if isinstance(layer, MaxPool2D):
        b, c, h, w = x.shape
        win = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(b, c, h // 2, w // 2, 4)
        idx = win.argmax(-1)
        y = np.take_along_axis(win, idx[..., None], -1)[..., 0]
        return y, ("pool", x.shape, idx)

    if isinstance(layer, Activation):
        y = _act_forward(layer.fn, layer.alpha, x)
        return y, ("act", x, y)

    if isinstance(layer, Dropout):
        if mode == "infer" or layer.rate == 0.0:
            return x, ("drop", None, 1.0)
        if rng is None:
            raise ValueError("Dropout in train mode needs an rng")
        keep = 1.0 - layer.rate
        mask = rng.random(x.shape) >= layer.rate
        return x * mask / keep, ("drop", mask, keep)

    if isinstance(layer, BatchNorm):
        return _bn_forward(layer, x, params, mode)

    if isinstance(layer, Flatten):
        return x.reshape(x.shape[0], -1), ("flat", x.shape)

    if isinstance(layer, GlobalAvgPool):
        return x.mean(axis=(2, 3)), ("gap", x.shape)

    if isinstance(layer, (Dense, SoftmaxHead)):
        w, bias = params["weight"], params["bias"]
        if w.shape[1] != x.shape[1]:
            raise ShapeError(
                f"{type(layer).__name__} weight expects {w.shape[1]} features, got {x.shape[1]}"
            )
        return x @ w.T + bias, ("dense", x, w)

    if isinstance(layer, ConvNeXtBlock):
        return _convnext_forward(layer, x, params)

    raise TypeError(f"unknown layer {layer!r}")


def layer_backward(
    layer: LayerSpec, cache: Any, gy: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Gradient of one layer: (input_grad, {block: grad})."""
    tag = cache[0] if isinstance(cache, tuple) and cache else None
    expected = _cache_tag(layer)
    if tag != expected:
        raise CacheError(f"cache tag {tag!r} does not match layer {type(layer).__name__}")

    if isinstance(layer, Conv2D):
        _, x_shape, cols, wm = cache
        b, c, h, w = x_shape
        g = gy.reshape(b, layer.out_channels, h * w).transpose(0, 2, 1)
        dw = np.einsum("bnf,bnc->fc", g, cols).reshape(
            layer.out_channels, c, layer.kernel, layer.kernel
        )
        db = gy.sum(axis=(0, 2, 3))
        dcols = g @ wm
        dx = _col2im(dcols, x_shape, layer.kernel)
        return dx, {"weight": dw, "bias": db}

    if isinstance(layer, MaxPool2D):
        _, x_shape, idx = cache
        b, c, h, w = x_shape
        dwin = np.zeros((b, c, h // 2, w // 2, 4), dtype=gy.dtype)
        np.put_along_axis(dwin, idx[..., None], gy[..., None], -1)
        dx = dwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dx.reshape(b, c, h, w), {}

    if isinstance(layer, Activation):
        _, x, y = cache
        return _act_backward(layer.fn, layer.alpha, x, y, gy), {}

    if isinstance(layer, Dropout):
        _, mask, keep = cache
        if mask is None:
            return gy, {}
        return gy * mask / keep, {}

    if isinstance(layer, BatchNorm):
        return _bn_backward(cache, gy)

    if isinstance(layer, Flatten):
        return gy.reshape(cache[1]), {}

    if isinstance(layer, GlobalAvgPool):
        _, x_shape = cache
        b, c, h, w = x_shape
        return np.broadcast_to(gy[:, :, None, None], x_shape) / (h * w), {}

    if isinstance(layer, (Dense, SoftmaxHead)):
        _, x, w = cache
        return gy @ w, {"weight": gy.T @ x, "bias": gy.sum(axis=0)}

    if isinstance(layer, ConvNeXtBlock):
        return _convnext_backward(layer, cache, gy)

    raise TypeError(f"unknown layer {layer!r}")


def _cache_tag(layer: LayerSpec) -> str:
    return {
        Conv2D: "conv",
        MaxPool2D: "pool",
        Activation: "act",
        Dropout: "drop",
        BatchNorm: "bn",
        Flatten: "flat",
        GlobalAvgPool: "gap",
        Dense: "dense",
        SoftmaxHead: "dense",
        ConvNeXtBlock: "cnx",
    }[type(layer)]


# ---------------------------------------------------------------------------
# batch norm


def _bn_axes(x: np.ndarray) -> tuple[int, ...]:
    if x.ndim == 4:
        return (0, 2, 3)
    if x.ndim == 2:
        return (0,)
    raise ShapeError(f"BatchNorm expects 2-D or 4-D input, got rank {x.ndim}")


def _bn_expand(v: np.ndarray, ndim: int) -> np.ndarray:
    return v[None, :, None, None] if ndim == 4 else v


def _bn_forward(layer: BatchNorm, x: np.ndarray, params: dict[str, np.ndarray], mode: str):
    axes = _bn_axes(x)
    gamma, beta = params["gamma"], params["beta"]
    if mode == "train":
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + layer.epsilon)
        xhat = (x - _bn_expand(mu, x.ndim)) * _bn_expand(inv_std, x.ndim)
        # running statistics live in the parameter vector; updated in place
        m = layer.momentum
        params["running_mean"][...] = m * params["running_mean"] + (1.0 - m) * mu
        params["running_var"][...] = m * params["running_var"] + (1.0 - m) * var
        y = _bn_expand(gamma, x.ndim) * xhat + _bn_expand(beta, x.ndim)
        return y, ("bn", xhat, inv_std, gamma, axes)
    inv_std = 1.0 / np.sqrt(params["running_var"] + layer.epsilon)
    xhat = (x - _bn_expand(params["running_mean"], x.ndim)) * _bn_expand(inv_std, x.ndim)
    y = _bn_expand(gamma, x.ndim) * xhat + _bn_expand(beta, x.ndim)
    return y, ("bn", None, None, None, axes)


def _bn_backward(cache, gy: np.ndarray):
    _, xhat, inv_std, gamma, axes = cache
    if xhat is None:
        raise CacheError("BatchNorm backward requires a train-mode forward cache")
    n = np.prod([gy.shape[a] for a in axes])
    dgamma = (gy * xhat).sum(axis=axes)
    dbeta = gy.sum(axis=axes)
    dxhat = gy * _bn_expand(gamma, gy.ndim)
    mean_dxhat = _bn_expand(dxhat.mean(axis=axes), gy.ndim)
    mean_dxhat_xhat = _bn_expand((dxhat * xhat).mean(axis=axes), gy.ndim)
    dx = _bn_expand(inv_std, gy.ndim) * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    zeros_like = np.zeros_like(dgamma)
    return dx, {
        "gamma": dgamma,
        "beta": dbeta,
        "running_mean": zeros_like,
        "running_var": zeros_like.copy(),
    }


# ---------------------------------------------------------------------------
# ConvNeXt block


def _convnext_forward(layer: ConvNeXtBlock, x: np.ndarray, p: dict[str, np.ndarray]):
    k = layer.kernel
    win = _dw_windows(x, k)
    h = np.einsum("bchwij,cij->bchw", win, p["dw_weight"]) + p["dw_bias"][None, :, None, None]
    u = np.einsum("bchw,ec->behw", h, p["pw1_weight"]) + p["pw1_bias"][None, :, None, None]
    a = _act_forward(layer.fn, layer.alpha, u)
    v = np.einsum("behw,ce->bchw", a, p["pw2_weight"]) + p["pw2_bias"][None, :, None, None]
    return x + v, ("cnx", x.shape, win, h, u, a, p["dw_weight"], p["pw1_weight"], p["pw2_weight"])


def _convnext_backward(layer: ConvNeXtBlock, cache, gy: np.ndarray):
    _, x_shape, win, h, u, a, dw_w, pw1_w, pw2_w = cache
    k = layer.kernel
    dpw2_w = np.einsum("bchw,behw->ce", gy, a)
    dpw2_b = gy.sum(axis=(0, 2, 3))
    da = np.einsum("bchw,ce->behw", gy, pw2_w)
    du = _act_backward(layer.fn, layer.alpha, u, a, da)
    dpw1_w = np.einsum("behw,bchw->ec", du, h)
    dpw1_b = du.sum(axis=(0, 2, 3))
    dh = np.einsum("behw,ec->bchw", du, pw1_w)
    ddw_w = np.einsum("bchwij,bchw->cij", win, dh)
    ddw_b = dh.sum(axis=(0, 2, 3))
    dx = gy + _dw_input_grad(dh, dw_w, x_shape, k)
    return dx, {
        "dw_weight": ddw_w,
        "dw_bias": ddw_b,
        "pw1_weight": dpw1_w,
        "pw1_bias": dpw1_b,
        "pw2_weight": dpw2_w,
        "pw2_bias": dpw2_b,
    }
