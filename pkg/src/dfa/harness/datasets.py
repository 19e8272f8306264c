"""Dataset readers (IDX, CIFAR-10 binary, npz arrays) and bundled desk-scale datasets.

The desk datasets come from scikit-learn's bundled data and need no download:

* ``digits``: 1797 8x8 handwritten digits, 10 classes.
* ``photo-patches``: 8x8 grayscale patches cut from the two bundled sample
  photographs (crop 32x32, average-pool by 4). Used as out-of-distribution
  data for ``digits``; the label says which photo a patch came from.
* ``blobs``: linearly separable 2-class 8x8 images, for smoke tests.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from dfa.data import LabeledDataset
from dfa.errors import DataError, FormatError

IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
CIFAR_RECORD = 1 + 3072
FORMATS = ("idx", "cifar-binary", "raw-array")
DESK_DATASETS = ("digits", "photo-patches", "blobs")


def read_idx(path) -> np.ndarray:
    """Parse an IDX file: two zero bytes, a type code, the rank, big-endian u32 dims, data."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header", offset=len(raw))
    if raw[0] != 0 or raw[1] != 0:
        raise FormatError(f"{path}: bad IDX magic {raw[:4].hex()}", offset=0)
    code, ndim = raw[2], raw[3]
    if code not in IDX_DTYPES:
        raise FormatError(f"{path}: unknown IDX type code 0x{code:02x}", offset=2)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX dimension header", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = IDX_DTYPES[code]
    expected = header + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: IDX payload is {len(raw) - header} bytes, dims {dims} "
                          f"need {expected - header}", offset=min(len(raw), expected))
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray):
    array = np.asarray(array)
    code = next((c for c, dt in IDX_DTYPES.items() if dt.newbyteorder("=") == array.dtype
                 or dt == array.dtype), None)
    if code is None:
        raise FormatError(f"dtype {array.dtype} has no IDX type code")
    with open(path, "wb") as f:
        f.write(bytes([0, 0, code, array.ndim]))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.astype(IDX_DTYPES[code], copy=False).tobytes())


def _idx_labels_path(images_path: Path) -> Path:
    name = images_path.name.replace("images", "labels").replace("idx3", "idx1")
    return images_path.with_name(name)


def read_cifar_binary(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD:
        whole = len(raw) - len(raw) % CIFAR_RECORD
        raise FormatError(f"{path}: {len(raw)} bytes is not a whole number of "
                          f"{CIFAR_RECORD}-byte records", offset=whole)
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"{path}: label {labels[bad]} out of range", offset=bad * CIFAR_RECORD)
    return rec[:, 1:].reshape(-1, 3, 32, 32), labels


def write_cifar_binary(path, images: np.ndarray, labels: np.ndarray):
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), 3072)
    rec = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], images], axis=1)
    Path(path).write_bytes(rec.tobytes())


def _scale(x: np.ndarray) -> np.ndarray:
    if x.dtype == np.uint8 or (np.issubdtype(x.dtype, np.integer) and x.max(initial=0) > 1):
        return x.astype(np.float32) / 255.0
    x = x.astype(np.float32)
    if x.size and (x.min() < 0 or x.max() > 1):
        raise DataError("floating-point samples must already lie in [0, 1]")
    return x


def load_dataset(path, format: str, labels_path=None, n_classes: int | None = None
                 ) -> LabeledDataset:
    """Read a labeled dataset with samples as float32 (N, C, H, W) in [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such dataset file: {path}")
    if format == "idx":
        images = read_idx(path)
        labels = read_idx(Path(labels_path) if labels_path else _idx_labels_path(path))
        if len(labels) != len(images):
            raise FormatError(f"{len(images)} images but {len(labels)} labels")
        x = images[:, None] if images.ndim == 3 else images
        y = labels.astype(np.int64)
    elif format == "cifar-binary":
        x, y = read_cifar_binary(path)
    elif format == "raw-array":
        with np.load(path) as z:
            if "x" not in z or "y" not in z:
                raise FormatError(f"{path}: npz archive must hold arrays 'x' and 'y'")
            x, y = z["x"], z["y"].astype(np.int64)
            n_classes = n_classes or (int(z["n_classes"]) if "n_classes" in z else None)
        x = x[:, None] if x.ndim == 3 else x
    else:
        raise FormatError(f"unknown dataset format {format!r}; choose from {FORMATS}")
    n_classes = n_classes or (int(y.max()) + 1 if len(y) else 0)
    return LabeledDataset(_scale(np.ascontiguousarray(x)), y, n_classes, name=path.name)


def save_raw_array(path, dataset: LabeledDataset):
    np.savez(path, x=dataset.x, y=dataset.y, n_classes=dataset.n_classes)


def _digits() -> LabeledDataset:
    from sklearn.datasets import load_digits

    d = load_digits()
    return LabeledDataset((d.images / 16.0)[:, None].astype(np.float32), d.target, 10, "digits")


def _photo_patches(crop: int = 32, size: int = 8) -> LabeledDataset:
    from sklearn.datasets import load_sample_images

    xs, ys = [], []
    for k, img in enumerate(load_sample_images().images):
        gray = img.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
        h, w = gray.shape
        for r in range(0, h - crop + 1, crop):
            for c in range(0, w - crop + 1, crop):
                patch = gray[r:r + crop, c:c + crop]
                f = crop // size
                xs.append(patch.reshape(size, f, size, f).mean(axis=(1, 3)) / 255.0)
                ys.append(k)
    return LabeledDataset(np.array(xs, dtype=np.float32)[:, None], np.array(ys), 2,
                          "photo-patches")


def _blobs(n: int = 400, seed: int = 0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = rng.uniform(0.0, 0.3, size=(n, 1, 8, 8))
    x[y == 1, :, :, :4] += 0.6
    x[y == 0, :, :, 4:] += 0.6
    return LabeledDataset(x.astype(np.float32), y, 2, "blobs")


def desk_dataset(name: str) -> LabeledDataset:
    if name == "digits":
        return _digits()
    if name == "photo-patches":
        return _photo_patches()
    if name == "blobs":
        return _blobs()
    raise DataError(f"unknown desk dataset {name!r}; choose from {DESK_DATASETS}")


def resolve_dataset(source: str, format: str | None = None, labels_path=None,
                    split: str = "all", test_fraction: float = 0.25, split_seed: int = 0
                    ) -> LabeledDataset:
    """Load a desk dataset by name or a file by path, then pick a seeded stratified split."""
    if source in DESK_DATASETS and not os.path.exists(source):
        ds = desk_dataset(source)
    else:
        if format is None:
            raise DataError(f"{source}: a file dataset needs an explicit format")
        ds = load_dataset(source, format, labels_path)
    if split == "all":
        return ds
    train, test = ds.split(1.0 - test_fraction, seed=split_seed)
    if split == "train":
        return train
    if split == "test":
        return test
    raise DataError(f"split must be all, train or test; got {split!r}")
