"""Versioned checkpoints for both trainable models.

A checkpoint is an uncompressed ``.npz`` holding every parameter array
under its flat name plus a JSON metadata blob (format version, model kind,
config, seed).  Arrays round-trip bitwise; no pickling.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_params(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    meta = dict(meta)
    meta["format_version"] = FORMAT_VERSION
    payload = {f"param:{k}": v for k, v in arrays.items()}
    payload["meta"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
    )
    np.savez(Path(path), **payload)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {meta.get('format_version')}"
            )
        arrays = {
            k[len("param:") :]: data[k] for k in data.files if k.startswith("param:")
        }
    return arrays, meta


def save_mdn(path, model, config_meta: dict, seed: int) -> None:
    arrays = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    save_params(
        path,
        arrays,
        {"kind": "mdn", "n_layers": len(model.weights), "config": config_meta,
         "seed": seed},
    )


def load_mdn(path):
    from .mdn import MdnModel

    arrays, meta = load_params(path)
    if meta.get("kind") != "mdn":
        raise ValueError(f"checkpoint kind {meta.get('kind')!r} is not 'mdn'")
    n = meta["n_layers"]
    model = MdnModel(
        [arrays[f"w{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)]
    )
    return model, meta
