"""Synthetic multi-view image corpus: generation, preprocessing, balancing,
and deterministic stratified splits.

Each class is a distinct parametric grayscale pattern; each view applies a
fixed transform family (identity / transpose with intensity shift /
anisotropic squash) so views are correlated but not interchangeable.  Class
separability is controlled by the additive noise level, and one view can be
deliberately corrupted for degradation studies.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

GENERATOR_VERSION = "1"

VIEWS = ("axial", "coronal", "sagittal")
CLASS_NAMES = ("core_blob", "twin_blob", "ring", "bands")

ROTATE_DEGREES = 15.0
TRANSLATE_FRACTION = 0.10


@dataclass
class LabeledImage:
    pixels: np.ndarray  # (channels, H, W) float32 in [0, 1]
    label: int
    view: str
    augmented: bool = False

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}")
        if self.label < 0:
            raise ValueError(f"label must be non-negative, got {self.label}")


@dataclass
class DatasetSplit:
    train: list[LabeledImage]
    validation: list[LabeledImage]
    test: list[LabeledImage]
    metadata: dict = field(default_factory=dict)

    def all_images(self) -> list[LabeledImage]:
        return self.train + self.validation + self.test


# ---------------------------------------------------------------------------
# class patterns


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    axis = np.linspace(-1.0, 1.0, size)
    return np.meshgrid(axis, axis, indexing="ij")


def _pattern(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = _grid(size)
    jit = lambda s: rng.uniform(-s, s)
    if label == 0:  # single centered blob
        cy, cx = jit(0.08), jit(0.08)
        img = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.35**2)))
    elif label == 1:  # two diagonal blobs
        o = 0.45 + jit(0.05)
        img = np.exp(-(((yy - o) ** 2 + (xx - o) ** 2) / (2 * 0.22**2)))
        img += np.exp(-(((yy + o) ** 2 + (xx + o) ** 2) / (2 * 0.22**2)))
    elif label == 2:  # annulus
        radius = 0.55 + jit(0.04)
        r = np.sqrt(yy**2 + xx**2)
        img = np.exp(-(((r - radius) / 0.12) ** 2))
    elif label == 3:  # horizontal bands
        phase = jit(0.4)
        img = 0.5 + 0.5 * np.sin(3.0 * np.pi * yy + phase)
    else:
        raise ValueError(f"no pattern for label {label} (max 4 classes)")
    return np.clip(img, 0.0, 1.0)


def _apply_view(img: np.ndarray, view: str) -> np.ndarray:
    if view == "axial":
        return img
    if view == "coronal":
        return np.clip(img.T * 0.85 + 0.10, 0.0, 1.0)
    if view == "sagittal":
        h, w = img.shape
        squashed = bilinear_resize(img[None], (h, max(2, w // 2)))[0]
        return np.clip(bilinear_resize(squashed[None], (h, w))[0], 0.0, 1.0)
    raise ValueError(f"unknown view {view!r}")


def generate_synthetic_multiview(
    classes: int = 4,
    per_class_per_view: int | tuple[int, int, int] = 20,
    size: int = 32,
    noise: float = 0.05,
    seed: int = 0,
    corrupt_view: str | None = None,
    corrupt_noise: float = 2.5,
) -> list[LabeledImage]:
    """Deterministic pool of labeled multi-view images.

    `per_class_per_view` may be a single count or one count per view (axial,
    coronal, sagittal).  `corrupt_view` drowns one view in extra noise so its
    single-view evaluation degrades by construction.
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    if not 2 <= classes <= len(CLASS_NAMES):
        raise ValueError(f"classes must be in [2, {len(CLASS_NAMES)}], got {classes}")
    if corrupt_view is not None and corrupt_view not in VIEWS:
        raise ValueError(f"unknown view {corrupt_view!r}")
    counts = (
        (per_class_per_view,) * 3
        if isinstance(per_class_per_view, int)
        else tuple(per_class_per_view)
    )
    if len(counts) != 3 or any(c < 1 for c in counts):
        raise ValueError(f"need one positive count per view, got {counts}")

    rng = np.random.default_rng(seed)
    pool: list[LabeledImage] = []
    for label in range(classes):
        for view, count in zip(VIEWS, counts):
            for _ in range(count):
                img = _apply_view(_pattern(label, size, rng), view)
                level = noise + (corrupt_noise if view == corrupt_view else 0.0)
                if level > 0.0:
                    img = img + level * rng.standard_normal(img.shape)
                img = np.clip(img, 0.0, 1.0).astype(np.float32)
                pool.append(LabeledImage(pixels=img[None], label=label, view=view))
    return pool


# ---------------------------------------------------------------------------
# preprocessing


def bilinear_resize(pixels: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Channel-wise bilinear resize with corner-aligned sampling."""
    c, h, w = pixels.shape
    th, tw = target
    if (h, w) == (th, tw):
        return pixels.copy()
    rows = np.linspace(0.0, h - 1.0, th)
    cols = np.linspace(0.0, w - 1.0, tw)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = pixels[:, r0][:, :, c0] * (1 - fc) + pixels[:, r0][:, :, c1] * fc
    bot = pixels[:, r1][:, :, c0] * (1 - fc) + pixels[:, r1][:, :, c1] * fc
    return top * (1 - fr) + bot * fr


def preprocess(
    image: LabeledImage,
    target_size: int,
    source_range: tuple[float, float] | None = None,
) -> LabeledImage:
    """Resize to `target_size` square and bring pixel values into [0, 1].

    Integer inputs normalize by their dtype range; float inputs already inside
    [0, 1] pass through; anything else rescales by its observed value range,
    with constant (zero-range) images mapping to all-0.5 by convention.
    """
    px = image.pixels
    if not np.isfinite(px).all():
        raise ValueError("source pixels must be finite")
    if source_range is None and np.issubdtype(px.dtype, np.integer):
        info = np.iinfo(px.dtype)
        source_range = (0.0, float(info.max))
    px = px.astype(np.float64)
    lo, hi = (source_range if source_range is not None else (px.min(), px.max()))
    if source_range is not None or lo < 0.0 or hi > 1.0:
        if hi == lo:
            px = np.full_like(px, 0.5)
        else:
            px = (px - lo) / (hi - lo)
    px = np.clip(px, 0.0, 1.0)
    px = bilinear_resize(px, (target_size, target_size))
    return replace(image, pixels=np.clip(px, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# augmentation-based class balancing


def flip_horizontal(pixels: np.ndarray) -> np.ndarray:
    return pixels[:, :, ::-1].copy()


def rotate(pixels: np.ndarray, degrees: float) -> np.ndarray:
    out = ndimage.rotate(
        pixels, degrees, axes=(1, 2), reshape=False, order=1, mode="nearest"
    )
    return np.clip(out, 0.0, 1.0).astype(pixels.dtype)


def translate(pixels: np.ndarray, dy: float, dx: float) -> np.ndarray:
    _, h, w = pixels.shape
    out = ndimage.shift(pixels, (0.0, dy * h, dx * w), order=1, mode="nearest")
    return np.clip(out, 0.0, 1.0).astype(pixels.dtype)


def _augment_once(image: LabeledImage, rng: np.random.Generator) -> LabeledImage:
    strategy = rng.integers(0, 3)
    if strategy == 0:
        px = flip_horizontal(image.pixels)
    elif strategy == 1:
        px = rotate(image.pixels, rng.uniform(-ROTATE_DEGREES, ROTATE_DEGREES))
    else:
        f = TRANSLATE_FRACTION
        px = translate(image.pixels, rng.uniform(-f, f), rng.uniform(-f, f))
    return replace(image, pixels=px, augmented=True)


def balance_by_augmentation(
    images: list[LabeledImage], target: int, seed: int = 0
) -> list[LabeledImage]:
    """Pad every class up to `target` samples with augmented copies.

    Originals are kept untouched; padding draws seeded-random source images
    and applies one of the flip / rotate / translate strategies.
    """
    by_class: dict[int, list[LabeledImage]] = {}
    for img in images:
        by_class.setdefault(img.label, []).append(img)
    counts = {c: len(v) for c, v in by_class.items()}
    if any(n == 0 for n in counts.values()) or not counts:
        raise ValueError("cannot balance an empty class")
    if target < max(counts.values()):
        raise ValueError(
            f"target {target} below current max class count {max(counts.values())}"
        )
    rng = np.random.default_rng(seed)
    out = list(images)
    for label in sorted(by_class):
        pool = by_class[label]
        for _ in range(target - len(pool)):
            src = pool[int(rng.integers(0, len(pool)))]
            out.append(_augment_once(src, rng))
    return out


def balance_split(split: DatasetSplit, seed: int = 0) -> DatasetSplit:
    """Balance train and validation to their own max class counts; never test."""

    def target(images):
        counts: dict[int, int] = {}
        for img in images:
            counts[img.label] = counts.get(img.label, 0) + 1
        return max(counts.values())

    return DatasetSplit(
        train=balance_by_augmentation(split.train, target(split.train), seed),
        validation=balance_by_augmentation(split.validation, target(split.validation), seed + 1),
        test=list(split.test),
        metadata={**split.metadata, "balanced": True},
    )


# ---------------------------------------------------------------------------
# splitting


def largest_remainder(total: int, proportions) -> list[int]:
    """Integer allocation of `total` by proportions, exact sum, deterministic."""
    props = np.asarray(proportions, dtype=float)
    if (props <= 0).any():
        raise ValueError(f"proportions must be positive, got {proportions}")
    if abs(props.sum() - 1.0) > 1e-9:
        raise ValueError(f"proportions must sum to 1, got {props.sum()}")
    raw = props * total
    base = np.floor(raw).astype(int)
    remainder = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    for i in range(remainder):
        base[order[i]] += 1
    return base.tolist()


def split_dataset(
    pool: list[LabeledImage],
    proportions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    metadata: dict | None = None,
) -> DatasetSplit:
    """Stratified train/validation/test split by (class, view)."""
    if len(proportions) != 3:
        raise ValueError("need exactly three proportions (train, validation, test)")
    largest_remainder(100, proportions)  # validates positivity and sum

    cells: dict[tuple[int, str], list[int]] = {}
    for i, img in enumerate(pool):
        cells.setdefault((img.label, img.view), []).append(i)

    rng = np.random.default_rng(seed)
    picks: dict[str, list[int]] = {"train": [], "validation": [], "test": []}
    for key in sorted(cells):
        idx = np.array(cells[key])
        rng.shuffle(idx)
        if len(idx) < 3:
            warnings.warn(
                f"cell {key} has {len(idx)} sample(s); assigning all to train",
                RuntimeWarning,
            )
            picks["train"].extend(idx.tolist())
            continue
        n_train, n_val, n_test = largest_remainder(len(idx), proportions)
        picks["train"].extend(idx[:n_train].tolist())
        picks["validation"].extend(idx[n_train : n_train + n_val].tolist())
        picks["test"].extend(idx[n_train + n_val :].tolist())

    meta = {
        "proportions": list(proportions),
        "seed": seed,
        "generator_version": GENERATOR_VERSION,
        "view_composition": {
            v: sum(1 for img in pool if img.view == v) for v in VIEWS
        },
        **(metadata or {}),
    }
    return DatasetSplit(
        train=[pool[i] for i in picks["train"]],
        validation=[pool[i] for i in picks["validation"]],
        test=[pool[i] for i in picks["test"]],
        metadata=meta,
    )


# ---------------------------------------------------------------------------
# array conversion and a simple generation-time oracle


def to_arrays(images: list[LabeledImage], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([img.pixels for img in images]).astype(dtype)
    y = np.array([img.label for img in images], dtype=np.int64)
    return x, y


def views_of(images: list[LabeledImage]) -> np.ndarray:
    return np.array([img.view for img in images])


def fit_centroids(images: list[LabeledImage]) -> dict[int, np.ndarray]:
    """Per-class mean images, the nearest-centroid oracle's model."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for img in images:
        px = img.pixels.astype(np.float64)
        if img.label in sums:
            sums[img.label] += px
            counts[img.label] += 1
        else:
            sums[img.label] = px.copy()
            counts[img.label] = 1
    return {c: sums[c] / counts[c] for c in sums}


def centroid_predict(centroids: dict[int, np.ndarray], images: list[LabeledImage]) -> np.ndarray:
    labels = sorted(centroids)
    stack = np.stack([centroids[c].ravel() for c in labels])
    out = np.empty(len(images), dtype=np.int64)
    for i, img in enumerate(images):
        d = ((stack - img.pixels.astype(np.float64).ravel()) ** 2).sum(axis=1)
        out[i] = labels[int(np.argmin(d))]
    return out


def centroid_accuracy(images: list[LabeledImage], train: list[LabeledImage] | None = None) -> float:
    centroids = fit_centroids(train if train is not None else images)
    preds = centroid_predict(centroids, images)
    truth = np.array([img.label for img in images])
    return float((preds == truth).mean())
