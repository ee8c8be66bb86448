"""IDX file reading/writing and the MNIST-parity strip dataset.

IDX layout: two zero bytes, a type code (0x08 = unsigned byte), the number
of dimensions, then one big-endian uint32 per dimension, then the data in
row-major order.  Images use magic 0x00000803 (3 dims), labels 0x00000801.
"""
import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IdxParseError, InvalidInputError
from .rng import as_generator

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
MAX_ELEMENTS = 1 << 34

FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class IdxArray:
    data: np.ndarray
    magic: int
    dims: tuple


def _read_bytes(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx_bytes(raw, scale=True) -> IdxArray:
    if len(raw) < 4:
        raise IdxParseError("file shorter than the 4-byte magic", len(raw))
    magic = struct.unpack(">I", raw[:4])[0]
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise IdxParseError(f"bad magic 0x{magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxParseError(f"truncated header, expected {header} bytes", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise IdxParseError(f"dimensions {dims} overflow the element limit", 4)
    if len(raw) < header + count:
        raise IdxParseError(f"truncated data, expected {header + count} bytes, found {len(raw)}", len(raw))
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)
    if magic == IMAGES_MAGIC and scale:
        data = data.astype(np.float32) / np.float32(255.0)
    else:
        data = data.copy()
    return IdxArray(data, magic, tuple(dims))


def parse_idx(path, scale=True) -> IdxArray:
    """Read an IDX file (plain or gzip).  Image bytes are scaled to [0, 1]."""
    return parse_idx_bytes(_read_bytes(path), scale)


def write_idx(path, array):
    """Write uint8 data as IDX: 3-d arrays as images, 1-d as labels."""
    a = np.asarray(array)
    if a.ndim == 3:
        magic = IMAGES_MAGIC
    elif a.ndim == 1:
        magic = LABELS_MAGIC
    else:
        raise InvalidInputError(f"IDX writer supports 1-d labels or 3-d images, got {a.ndim}-d")
    if a.dtype != np.uint8:
        if np.issubdtype(a.dtype, np.floating):
            a = np.clip(np.rint(a * 255.0), 0, 255)
        a = a.astype(np.uint8)
    body = struct.pack(">I", magic) + struct.pack(f">{a.ndim}I", *a.shape) + a.tobytes()
    path = Path(path)
    path.write_bytes(gzip.compress(body) if path.suffix == ".gz" else body)
    return path


def _find(directory, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        p = Path(directory) / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist(directory):
    """``{"train": (images, labels), "test": (images, labels)}`` from the four canonical files."""
    out = {}
    for split, prefix in (("train", "train"), ("test", "test")):
        imgs = parse_idx(_find(directory, FILES[f"{prefix}_images"])).data
        labs = parse_idx(_find(directory, FILES[f"{prefix}_labels"])).data
        if len(imgs) != len(labs):
            raise InvalidInputError(f"{split}: {len(imgs)} images but {len(labs)} labels")
        out[split] = (imgs, labs)
    return out


def default_mnist_dir():
    return os.environ.get("MNIST_DIR", str(Path.cwd() / "data" / "mnist"))


# --------------------------------------------------------------------------- strips


@dataclass
class MnistStripDataset:
    images: np.ndarray
    labels: np.ndarray
    digits: np.ndarray
    k: int
    split: str

    @property
    def X(self):
        return self.images.reshape(len(self.images), -1)

    def __len__(self):
        return len(self.labels)


def build_strips(images, labels, k, count, rng=0, split="train"):
    """``count`` strips of ``k`` digits drawn uniformly with replacement.

    Digits are placed side by side, so a strip is ``28 x 28k``.  The label is
    +1 iff the sum of the digit values is even.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    gen = as_generator(rng)
    images = np.asarray(images)
    labels = np.asarray(labels).astype(np.int64)
    idx = gen.integers(0, len(labels), size=(count, k))
    h, w = images.shape[1:]
    strips = images[idx].transpose(0, 2, 1, 3).reshape(count, h, w * k)
    digits = labels[idx]
    y = np.where(digits.sum(axis=1) % 2 == 0, 1.0, -1.0).astype(np.float32)
    return MnistStripDataset(strips, y, digits, k, split)
