"""Central finite-difference oracles for analytic gradients.

Probes re-run the forward pass with a fixed rng seed so stochastic layers
(dropout) see the same mask on every evaluation, and each probe works on its
own parameter copy so batch-norm running statistics cannot leak between
evaluations.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import layers as L
from .loss import softmax_cross_entropy
from .network import Network


def relative_error(a: np.ndarray, n: np.ndarray, guard: float = 1e-4) -> float:
    """Max elementwise |a-n| / max(|a|, |n|, guard)."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), guard)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar f over every coordinate of x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = g.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        fp = f(x)
        xf[i] = orig - eps
        fm = f(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * eps)
    return g


def gradient_check(
    network: Network,
    params: np.ndarray,
    x: np.ndarray,
    labels_onehot: np.ndarray,
    eps: float = 1e-5,
    rng_seed: int = 0,
    objective: str = "ce",
    guard: float = 1e-4,
) -> dict[int, float]:
    """Per-layer max relative error, analytic vs finite differences.

    `objective` is the scalar reduced: "ce" for softmax cross-entropy against
    the given one-hot labels, "mean_logit" for the plain mean of all logits
    (linear in the final affine layer, useful as an exactness probe).
    """
    if network.dtype != np.float64:
        raise ValueError("gradient_check requires a float64 network")

    def run(p: np.ndarray) -> tuple[float, np.ndarray | None]:
        rng = np.random.default_rng(rng_seed)
        logits, caches = network.forward(p, x, mode="train", rng=rng)
        if objective == "ce":
            loss, dlogits = softmax_cross_entropy(logits, labels_onehot)
        elif objective == "mean_logit":
            loss = float(logits.mean())
            dlogits = np.full_like(logits, 1.0 / logits.size)
        else:
            raise ValueError(f"unknown objective {objective!r}")
        return loss, (caches, dlogits)

    base = params.astype(np.float64).copy()
    _, (caches, dlogits) = run(base.copy())
    analytic, _ = network.backward(caches, dlogits)

    def value(p: np.ndarray) -> float:
        return run(p.copy())[0]

    numeric = np.zeros_like(base)
    for i in range(base.size):
        orig = base[i]
        base[i] = orig + eps
        fp = value(base)
        base[i] = orig - eps
        fm = value(base)
        base[i] = orig
        numeric[i] = (fp - fm) / (2.0 * eps)

    report: dict[int, float] = {}
    for idx in range(len(network.spec.layers)):
        sl = network.layout.layer_slice(idx)
        if sl is None:
            continue
        report[idx] = relative_error(analytic[sl], numeric[sl], guard=guard)
    return report


def layer_gradient_check(
    layer: L.LayerSpec,
    x: np.ndarray,
    params: dict[str, np.ndarray],
    mode: str = "train",
    rng_seed: int = 0,
    eps: float = 1e-5,
    guard: float = 1e-4,
) -> float:
    """Max relative error over input and parameter gradients of one layer.

    The scalar objective is a fixed random projection of the layer output, so
    the whole Jacobian participates rather than just its row sums.
    """
    x = x.astype(np.float64)
    params = {k: v.astype(np.float64) for k, v in params.items()}

    y0, _ = L.layer_forward(
        layer, x, {k: v.copy() for k, v in params.items()},
        mode=mode, rng=np.random.default_rng(rng_seed),
    )
    proj = np.random.default_rng(rng_seed + 1).standard_normal(y0.shape)

    def value(xv: np.ndarray, pv: dict[str, np.ndarray]) -> float:
        y, _ = L.layer_forward(
            layer, xv, {k: v.copy() for k, v in pv.items()},
            mode=mode, rng=np.random.default_rng(rng_seed),
        )
        return float((proj * y).sum())

    _, cache = L.layer_forward(
        layer, x, {k: v.copy() for k, v in params.items()},
        mode=mode, rng=np.random.default_rng(rng_seed),
    )
    gx, pgrads = L.layer_backward(layer, cache, proj)

    worst = relative_error(gx, numeric_grad(lambda v: value(v, params), x.copy(), eps), guard)
    for name in pgrads:
        if name in L.STATE_BLOCKS:
            continue  # buffers, not differentiated
        num = numeric_grad(
            lambda v, _n=name: value(x, {**params, _n: v}), params[name].copy(), eps
        )
        worst = max(worst, relative_error(pgrads[name], num, guard))
    return worst
