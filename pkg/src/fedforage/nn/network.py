"""Network assembly: shape inference, flat parameter layout, forward/backward.

A ``NetworkSpec`` is a pure description (input shape + ordered layers);
``Network`` binds it to a dtype and owns the segment table mapping every
layer's parameter blocks into one flat vector — the unit that federated
aggregation averages and optimizers update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import layers as L
from .loss import softmax, softmax_cross_entropy


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]  # (channels, height, width)
    layers: tuple[L.LayerSpec, ...]
    classes: int
    variant: str = "baseline"

    def __post_init__(self):
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ValueError(f"bad input shape {self.input_shape}")
        if self.variant not in ("baseline", "convnext"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.layers or not isinstance(self.layers[-1], L.SoftmaxHead):
            raise ValueError("last layer must be a SoftmaxHead")
        if self.layers[-1].classes != self.classes:
            raise ValueError("SoftmaxHead classes must match spec classes")


@dataclass(frozen=True)
class Segment:
    layer: int
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class ParamLayout:
    """Ordered, disjoint segment table covering the whole flat vector."""

    def __init__(self, spec: NetworkSpec):
        shapes = infer_shapes(spec)
        segments: list[Segment] = []
        offset = 0
        for i, layer in enumerate(spec.layers):
            for name, shape in L.param_blocks(layer, shapes[i]):
                segments.append(Segment(i, name, offset, shape))
                offset += int(np.prod(shape))
        self.segments = tuple(segments)
        self.total = offset
        self._by_layer: dict[int, tuple[Segment, ...]] = {}
        for seg in segments:
            self._by_layer.setdefault(seg.layer, ())
        for seg in segments:
            self._by_layer[seg.layer] = self._by_layer[seg.layer] + (seg,)

    def views(self, vec: np.ndarray, layer: int) -> dict[str, np.ndarray]:
        """Reshaped views into `vec` for one layer; writes hit `vec` itself."""
        if vec.shape != (self.total,):
            raise ValueError(f"vector length {vec.shape} != layout total {self.total}")
        return {
            s.name: vec[s.offset : s.offset + s.size].reshape(s.shape)
            for s in self._by_layer.get(layer, ())
        }

    def layer_slice(self, layer: int) -> slice | None:
        segs = self._by_layer.get(layer, ())
        if not segs:
            return None
        return slice(segs[0].offset, segs[-1].offset + segs[-1].size)

    def trainable_mask(self, spec: NetworkSpec) -> np.ndarray:
        """Boolean mask; False on batch-norm running statistics."""
        mask = np.ones(self.total, dtype=bool)
        for s in self.segments:
            if s.name in L.STATE_BLOCKS:
                mask[s.offset : s.offset + s.size] = False
        return mask


def infer_shapes(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Per-layer input shapes (batch-free); raises ShapeError on mismatch."""
    shapes = []
    cur: tuple[int, ...] = spec.input_shape
    for i, layer in enumerate(spec.layers):
        shapes.append(cur)
        try:
            cur = L.out_shape(layer, cur)
        except L.ShapeError as e:
            raise L.ShapeError(f"layer {i} ({type(layer).__name__}): {e}") from e
    return shapes


class Network:
    """Executable network over a flat parameter vector."""

    def __init__(self, spec: NetworkSpec, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.layout = ParamLayout(spec)
        self.input_shapes = infer_shapes(spec)
        self.n_params = self.layout.total

    def init_params(self, seed: int | tuple = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        vec = np.zeros(self.n_params, dtype=self.dtype)
        for i, layer in enumerate(self.spec.layers):
            views = self.layout.views(vec, i)
            for name, arr in L.init_blocks(layer, self.input_shapes[i], rng, self.dtype).items():
                views[name][...] = arr
        return vec

    def forward(
        self,
        params: np.ndarray,
        x: np.ndarray,
        mode: str = "infer",
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, list]:
        """Full pass to logits; returns (logits, per-layer caches)."""
        if x.shape[1:] != self.spec.input_shape:
            raise L.ShapeError(
                f"input shape {x.shape[1:]} != spec input {self.spec.input_shape}"
            )
        h = np.ascontiguousarray(x, dtype=self.dtype)
        caches = []
        for i, layer in enumerate(self.spec.layers):
            views = self.layout.views(params, i)
            try:
                h, cache = L.layer_forward(layer, h, views, mode=mode, rng=rng)
            except L.ShapeError as e:
                raise L.ShapeError(f"layer {i} ({type(layer).__name__}): {e}") from e
            caches.append(cache)
        return h, caches

    def backward(self, caches: list, dlogits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Backprop through all layers; returns (grad vector, input grad)."""
        grads = np.zeros(self.n_params, dtype=dlogits.dtype)
        g = dlogits
        for i in range(len(self.spec.layers) - 1, -1, -1):
            layer = self.spec.layers[i]
            g, pgrads = L.layer_backward(layer, caches[i], g)
            views = self.layout.views(grads, i)
            for name, arr in pgrads.items():
                views[name][...] = arr
        return grads, g

    def loss_and_grad(
        self,
        params: np.ndarray,
        x: np.ndarray,
        labels_onehot: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> tuple[float, np.ndarray, np.ndarray]:
        """Train-mode loss, parameter gradient, and logits for one batch."""
        logits, caches = self.forward(params, x, mode="train", rng=rng)
        loss, dlogits = softmax_cross_entropy(
            logits.astype(np.float64), labels_onehot.astype(np.float64)
        )
        grads, _ = self.backward(caches, dlogits.astype(self.dtype))
        return loss, grads, logits

    def predict_proba(self, params: np.ndarray, x: np.ndarray, batch: int = 256) -> np.ndarray:
        out = []
        for start in range(0, x.shape[0], batch):
            logits, _ = self.forward(params, x[start : start + batch], mode="infer")
            out.append(softmax(logits.astype(np.float64)))
        return np.concatenate(out, axis=0)

    def predict(self, params: np.ndarray, x: np.ndarray, batch: int = 256) -> np.ndarray:
        return self.predict_proba(params, x, batch=batch).argmax(axis=1)
