"""Readers and writers for the IDX byte format and CIFAR-style batches.

IDX: big-endian magic (two zero bytes, type code, rank), one 4-byte
big-endian size per dimension, then raw values.  Only the unsigned-byte
payload (code 0x08) is needed for image/label files; ``.gz`` paths are
decompressed transparently.

CIFAR-style batches are flat records of one label byte followed by
channels-first pixel bytes (3072 for 32x32 RGB).
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def _open(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def read_idx(path) -> np.ndarray:
    """Load an IDX file into a numpy array with native byte order."""
    with _open(path, "rb") as fh:
        header = fh.read(4)
        if len(header) != 4 or header[0] != 0 or header[1] != 0:
            raise ValueError(f"{path}: not an IDX file (bad magic {header!r})")
        code, rank = header[2], header[3]
        if code not in _IDX_DTYPES:
            raise ValueError(f"{path}: unsupported IDX type code 0x{code:02x}")
        dims = struct.unpack(f">{rank}I", fh.read(4 * rank))
        dtype = _IDX_DTYPES[code]
        count = int(np.prod(dims)) if dims else 1
        raw = fh.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise ValueError(f"{path}: truncated IDX payload")
        data = np.frombuffer(raw, dtype=dtype).reshape(dims)
        return data.astype(dtype.newbyteorder("="))


def write_idx(path, array: np.ndarray) -> None:
    """Write an unsigned-byte IDX file (images or labels)."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    with _open(path, "wb") as fh:
        fh.write(bytes([0, 0, 0x08, arr.ndim]))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_idx_image_set(images_path, labels_path):
    """(N, H, W, 1) float images in [0, 1] plus integer labels."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise ValueError(f"{images_path}: expected rank-3 image IDX")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise ValueError("label file does not match image file")
    return images.astype(float)[..., None] / 255.0, labels.astype(np.int64)


def read_cifar_batch(path, channels: int = 3, side: int = 32):
    """Label byte + channels-first pixels per record -> images, labels."""
    with _open(path, "rb") as fh:
        raw = np.frombuffer(fh.read(), dtype=np.uint8)
    record = 1 + channels * side * side
    if raw.size == 0 or raw.size % record != 0:
        raise ValueError(f"{path}: size {raw.size} is not a multiple of {record}")
    raw = raw.reshape(-1, record)
    labels = raw[:, 0].astype(np.int64)
    images = (
        raw[:, 1:]
        .reshape(-1, channels, side, side)
        .transpose(0, 2, 3, 1)
        .astype(float)
        / 255.0
    )
    return images, labels


def write_cifar_batch(path, images: np.ndarray, labels: np.ndarray) -> None:
    imgs = np.ascontiguousarray(np.round(np.asarray(images) * 255.0), dtype=np.uint8)
    n, h, w, c = imgs.shape
    flat = imgs.transpose(0, 3, 1, 2).reshape(n, -1)
    rec = np.concatenate(
        [np.asarray(labels, dtype=np.uint8)[:, None], flat], axis=1
    )
    with _open(path, "wb") as fh:
        fh.write(rec.tobytes())
