"""On-disk dataset format.

Layout of one image file:

    magic           8 bytes  b"FOLCDS01"
    header          6 x u32 little-endian: version, classes, n_images,
                    channels, height, width
    records         per image: label u16, view u8, augmented u8,
                    pixels float32 row-major (channels*height*width)
    trailer         u32 little-endian CRC32 of all preceding bytes

A dataset split is a directory holding train/validation/test files plus a
JSON metadata sidecar.  The reader fails loudly: wrong magic, short files,
checksum mismatches, and out-of-range values each raise their own error
class instead of yielding garbage.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .datagen import VIEWS, DatasetSplit, LabeledImage

MAGIC = b"FOLCDS01"
VERSION = 1
_HEADER = struct.Struct("<6I")
_RECORD_HEAD = struct.Struct("<HBB")

SPLIT_FILES = {"train": "train.folcds", "validation": "validation.folcds", "test": "test.folcds"}
METADATA_FILE = "metadata.json"


class DataFileError(Exception):
    """Base class for dataset file problems."""


class FormatError(DataFileError):
    """Structurally invalid content (magic, version, codes, value ranges)."""


class TruncationError(DataFileError):
    """File ends before the declared content does."""


class ChecksumError(DataFileError):
    """Trailing CRC32 does not match the content."""


def encode_images(images: list[LabeledImage], classes: int) -> bytes:
    if not images:
        shape = (1, 16, 16)
    else:
        shape = images[0].pixels.shape
    chunks = [MAGIC, _HEADER.pack(VERSION, classes, len(images), *shape)]
    for i, img in enumerate(images):
        if img.pixels.shape != shape:
            raise ValueError(f"image {i} shape {img.pixels.shape} != {shape}")
        if img.label >= classes:
            raise ValueError(f"image {i} label {img.label} >= classes {classes}")
        chunks.append(
            _RECORD_HEAD.pack(img.label, VIEWS.index(img.view), int(img.augmented))
        )
        chunks.append(np.ascontiguousarray(img.pixels, dtype="<f4").tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_images(blob: bytes) -> tuple[list[LabeledImage], int]:
    """Inverse of encode_images; returns (images, classes)."""
    if len(blob) < len(MAGIC):
        raise TruncationError(f"file is {len(blob)} bytes, shorter than the magic")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic at offset 0: {blob[:len(MAGIC)]!r}")
    need = len(MAGIC) + _HEADER.size
    if len(blob) < need:
        raise TruncationError("file ends inside the header")
    version, classes, n_images, c, h, w = _HEADER.unpack_from(blob, len(MAGIC))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if classes < 1 or min(c, h, w) < 1:
        raise FormatError(f"nonsensical header (classes={classes}, shape=({c},{h},{w}))")

    pixel_bytes = c * h * w * 4
    record = _RECORD_HEAD.size + pixel_bytes
    expected = need + n_images * record + 4
    if len(blob) < expected:
        raise TruncationError(
            f"file is {len(blob)} bytes but {expected} are declared"
        )
    if len(blob) > expected:
        raise FormatError(f"{len(blob) - expected} trailing byte(s) after the checksum")

    (stored_crc,) = struct.unpack_from("<I", blob, expected - 4)
    actual_crc = zlib.crc32(blob[: expected - 4])
    if stored_crc != actual_crc:
        raise ChecksumError(f"crc32 {actual_crc:#010x} != stored {stored_crc:#010x}")

    images = []
    off = need
    for i in range(n_images):
        label, view_code, augmented = _RECORD_HEAD.unpack_from(blob, off)
        off += _RECORD_HEAD.size
        if label >= classes:
            raise FormatError(f"record {i}: label {label} >= classes {classes}")
        if view_code >= len(VIEWS):
            raise FormatError(f"record {i}: unknown view code {view_code}")
        if augmented > 1:
            raise FormatError(f"record {i}: augmented flag {augmented} not 0/1")
        px = np.frombuffer(blob, dtype="<f4", count=c * h * w, offset=off)
        off += pixel_bytes
        px = px.reshape(c, h, w).copy()
        if not np.isfinite(px).all() or px.min() < 0.0 or px.max() > 1.0:
            raise FormatError(f"record {i}: pixels outside [0, 1]")
        images.append(
            LabeledImage(px, int(label), VIEWS[view_code], augmented=bool(augmented))
        )
    return images, classes


def write_images(images: list[LabeledImage], classes: int, path) -> None:
    Path(path).write_bytes(encode_images(images, classes))


def read_images(path) -> tuple[list[LabeledImage], int]:
    return decode_images(Path(path).read_bytes())


def write_dataset(split: DatasetSplit, directory, classes: int | None = None) -> None:
    """One file per subset plus the metadata sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if classes is None:
        labels = [im.label for im in split.all_images()]
        classes = max(labels) + 1 if labels else 1
    for name, filename in SPLIT_FILES.items():
        write_images(getattr(split, name), classes, directory / filename)
    meta = {**split.metadata, "classes": classes}
    (directory / METADATA_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_dataset(directory) -> DatasetSplit:
    directory = Path(directory)
    parts = {}
    for name, filename in SPLIT_FILES.items():
        path = directory / filename
        if not path.exists():
            raise FormatError(f"missing split file {filename}")
        parts[name], _ = read_images(path)
    meta_path = directory / METADATA_FILE
    metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return DatasetSplit(
        train=parts["train"],
        validation=parts["validation"],
        test=parts["test"],
        metadata=metadata,
    )
