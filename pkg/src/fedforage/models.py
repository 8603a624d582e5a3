"""Shallow CNN builders: the fixed default stack, its ConvNeXt-enhanced
variant, and genome-decoded variants for structure search.

The search space is a 5-axis grid (filters, kernel, activation, dropout,
dense units); a genome is a point in [0,1]^5 and decodes by uniform binning.
Filter counts double per convolution stage starting from the genome's base
count, capped at 512.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .nn import layers as L
from .nn.network import NetworkSpec, ParamLayout

FILTER_CAP = 512

OPTIONS: dict[str, tuple] = {
    "filters": (8, 16, 32, 64, 128, 256, 512),
    "kernel": (3, 5, 7, 9),
    "activation": ("relu", "leaky_relu", "tanh", "elu"),
    "dropout": (0.1, 0.2, 0.3, 0.4, 0.5),
    "units": (16, 32, 64, 128),
}

GENOME_AXES = tuple(OPTIONS)
GRID_SIZE = int(np.prod([len(v) for v in OPTIONS.values()]))  # 2240 cells

# Mid-bin coordinates decoding to the fixed architecture's nearest grid cell:
# 32 filters, 3x3 kernels, leaky relu, dropout 0.2, 64 dense units.
DEFAULT_GENOME = (0.36, 0.125, 0.375, 0.3, 0.625)

LEAKY_ALPHA = 0.1


@dataclass(frozen=True)
class StructureSettings:
    filters: int
    kernel: int
    activation: str
    dropout: float
    units: int

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError(f"filters must be positive, got {self.filters}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd, got {self.kernel}")
        if self.activation not in OPTIONS["activation"]:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0,1), got {self.dropout}")
        if self.units < 1:
            raise ValueError(f"units must be positive, got {self.units}")


def default_settings() -> StructureSettings:
    """The fixed reference structure: 32 filters, 3x3, leaky relu, dense 64."""
    return StructureSettings(32, 3, "leaky_relu", 0.25, 64)


def decode_genome(position) -> StructureSettings:
    """Map a point in [0,1]^5 onto the option grid via floor(x * K), clamped."""
    pos = np.asarray(position, dtype=float)
    if pos.shape != (5,):
        raise ValueError(f"genome must have 5 coordinates, got shape {pos.shape}")
    if (pos < 0.0).any() or (pos > 1.0).any():
        raise ValueError("genome coordinates must lie in [0,1]")
    values = {}
    for x, (name, opts) in zip(pos, OPTIONS.items()):
        idx = min(int(np.floor(x * len(opts))), len(opts) - 1)
        values[name] = opts[idx]
    return StructureSettings(**values)


def _activation(settings: StructureSettings) -> L.Activation:
    return L.Activation(settings.activation, LEAKY_ALPHA)


def build_network(
    settings: StructureSettings | None = None,
    variant: str = "baseline",
    input_shape: tuple[int, int, int] = (3, 224, 224),
    classes: int = 4,
) -> NetworkSpec:
    """Assemble the shallow CNN stack.

    Three pooled conv stages (single, single, double) with dropout after the
    second and third, a final conv pair wrapped in batch norm, global average
    pooling as the feature-leveling stage, then Dense(128) and Dense(units)
    blocks and the class head.  ``variant="convnext"`` swaps each conv of the
    final pair for a residual depthwise block at the incoming width.
    """
    if settings is None:
        settings = default_settings()
    if variant not in ("baseline", "convnext"):
        raise ValueError(f"unknown variant {variant!r}")
    c, h, w = input_shape
    if h % 8 or w % 8:
        raise L.ShapeError(
            f"input spatial dims must be divisible by 8 (three 2x2 pools), got {h}x{w}"
        )

    act = _activation(settings)
    k = settings.kernel
    d = settings.dropout
    f1 = min(settings.filters, FILTER_CAP)
    f2 = min(2 * f1, FILTER_CAP)
    f3 = min(2 * f2, FILTER_CAP)
    f4 = min(2 * f3, FILTER_CAP)

    if variant == "convnext":
        final_pair = [
            L.ConvNeXtBlock(f3, k, fn=settings.activation, alpha=LEAKY_ALPHA),
            act,
            L.BatchNorm(),
            L.ConvNeXtBlock(f3, k, fn=settings.activation, alpha=LEAKY_ALPHA),
            act,
            L.BatchNorm(),
        ]
    else:
        final_pair = [
            L.Conv2D(f4, k),
            act,
            L.BatchNorm(),
            L.Conv2D(f4, k),
            act,
            L.BatchNorm(),
        ]

    stack: list[L.LayerSpec] = [
        # stage 1
        L.Conv2D(f1, k),
        act,
        L.MaxPool2D(),
        # stage 2
        L.Conv2D(f2, k),
        act,
        L.MaxPool2D(),
        L.Dropout(d),
        # stage 3
        L.Conv2D(f3, k),
        act,
        L.Conv2D(f3, k),
        act,
        L.MaxPool2D(),
        L.Dropout(d),
        # final conv pair
        *final_pair,
        # feature leveling
        L.GlobalAvgPool(),
        # dense blocks
        L.Dense(128),
        act,
        L.BatchNorm(),
        L.Dropout(d),
        L.Dense(settings.units),
        act,
        L.BatchNorm(),
        L.Dropout(0.5),
        L.SoftmaxHead(classes),
    ]
    return NetworkSpec(
        input_shape=tuple(input_shape), layers=tuple(stack), classes=classes, variant=variant
    )


def param_count(spec: NetworkSpec) -> int:
    """Analytic parameter count, independent of the layout allocator.

    Counts everything the flat vector stores, including batch-norm running
    statistics (4 values per feature for each norm layer).
    """
    total = 0
    shape = spec.input_shape
    for layer in spec.layers:
        if isinstance(layer, L.Conv2D):
            total += layer.out_channels * (shape[0] * layer.kernel**2 + 1)
        elif isinstance(layer, L.BatchNorm):
            total += 4 * shape[0]
        elif isinstance(layer, L.Dense):
            total += layer.units * (shape[0] + 1)
        elif isinstance(layer, L.SoftmaxHead):
            total += layer.classes * (shape[0] + 1)
        elif isinstance(layer, L.ConvNeXtBlock):
            c, e = layer.channels, layer.expansion
            total += c * layer.kernel**2 + c  # depthwise
            total += e * c * c + e * c  # expansion
            total += c * e * c + c  # projection
        shape = L.out_shape(layer, shape)
    return total


def param_bytes(spec: NetworkSpec, dtype=np.float32) -> int:
    return param_count(spec) * np.dtype(dtype).itemsize


def grid_index(settings: StructureSettings) -> tuple[int, ...]:
    """Option-grid coordinates of a settings tuple."""
    return tuple(OPTIONS[name].index(getattr(settings, name)) for name in GENOME_AXES)


def planted_grid_objective(target: StructureSettings):
    """Synthetic genome objective peaked at `target`.

    Scores a genome by the negative Manhattan distance between its decoded
    cell and the planted cell, so the unique maximum over the grid is the
    planted cell itself.  Used for search benchmarks and self-tests.
    """
    tidx = grid_index(target)

    def objective(position) -> float:
        idx = grid_index(decode_genome(position))
        return -float(sum(abs(a - b) for a, b in zip(idx, tidx)))

    return objective


def structural_diff(a: NetworkSpec, b: NetworkSpec) -> list[int]:
    """Indices where the two layer stacks differ (by layer value)."""
    if len(a.layers) != len(b.layers):
        raise ValueError("stacks have different depth")
    return [i for i, (la, lb) in enumerate(zip(a.layers, b.layers)) if la != lb]


def format_spec(spec: NetworkSpec) -> str:
    """Human-readable layer-per-line description, emitted with every run."""
    lines = [
        f"input_shape: {spec.input_shape}",
        f"classes: {spec.classes}",
        f"variant: {spec.variant}",
        f"parameters: {param_count(spec)}",
        "layers:",
    ]
    for i, layer in enumerate(spec.layers):
        fields = asdict(layer)
        args = ", ".join(f"{k}={v}" for k, v in fields.items())
        lines.append(f"  {i:3d}  {type(layer).__name__}({args})")
    return "\n".join(lines) + "\n"
