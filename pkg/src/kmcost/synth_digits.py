"""Deterministic rendered-digit dataset in the IDX container format.

Stand-in for handwritten-digit data on machines with no dataset access:
glyphs 0-9 from the system DejaVu families, rendered at 28x28 with seeded
affine jitter (shift, rotation, scale) and intensity variation, then
written as standard IDX image/label files so the ingestion path is
identical to the real thing.  Requires Pillow (the ``digits`` extra).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_FONT_DIRS = (
    "/usr/share/fonts/truetype/dejavu",
    "/usr/share/fonts/dejavu",
)
_FONT_FILES = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
)


def _find_fonts() -> list[str]:
    found = []
    for d in _FONT_DIRS:
        for f in _FONT_FILES:
            p = Path(d) / f
            if p.exists():
                found.append(str(p))
    if not found:
        raise FileNotFoundError("no DejaVu fonts found; cannot render digits")
    return found


def render_digits(n: int, seed: int, side: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """n jittered digit images (uint8, n x side x side) and their labels."""
    from PIL import Image, ImageDraw, ImageFont

    rng = np.random.default_rng(seed)
    fonts = _find_fonts()
    # Pre-load a few sizes per font; glyphs are centered afterwards anyway.
    sizes = (17, 19, 21)
    loaded = {
        (fp, sz): ImageFont.truetype(fp, sz) for fp in fonts for sz in sizes
    }
    images = np.zeros((n, side, side), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n)
    big = side * 2
    for i in range(n):
        digit = str(labels[i])
        font = loaded[(fonts[rng.integers(len(fonts))], sizes[rng.integers(len(sizes))])]
        canvas = Image.new("L", (big, big), 0)
        draw = ImageDraw.Draw(canvas)
        bbox = draw.textbbox((0, 0), digit, font=font)
        cx = (big - (bbox[2] - bbox[0])) / 2 - bbox[0]
        cy = (big - (bbox[3] - bbox[1])) / 2 - bbox[1]
        draw.text((cx, cy), digit, fill=255, font=font)
        canvas = canvas.rotate(
            float(rng.uniform(-10.0, 10.0)),
            resample=Image.BILINEAR,
            center=(big / 2, big / 2),
        )
        scale = float(rng.uniform(0.9, 1.1))
        dx = float(rng.uniform(-1.5, 1.5))
        dy = float(rng.uniform(-1.5, 1.5))
        # Affine maps output coords to input coords: zoom about center, shift.
        a = 1.0 / scale
        canvas = canvas.transform(
            (side, side),
            Image.AFFINE,
            (
                a,
                0.0,
                big / 2 - a * (side / 2 + dx),
                0.0,
                a,
                big / 2 - a * (side / 2 + dy),
            ),
            resample=Image.BILINEAR,
        )
        arr = np.asarray(canvas, dtype=float)
        arr *= float(rng.uniform(0.75, 1.0))
        images[i] = np.clip(arr, 0, 255).astype(np.uint8)
    return images, labels.astype(np.uint8)


def write_digit_dataset(
    out_dir,
    n_train: int = 10000,
    n_test: int = 2000,
    seed: int = 2024,
) -> dict[str, str]:
    """Render train/test splits and write the four IDX files."""
    from .idx_io import write_idx

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_images, train_labels = render_digits(n_train, seed)
    test_images, test_labels = render_digits(n_test, seed + 1)
    paths = {
        "train_images": out / "train-images-idx3-ubyte",
        "train_labels": out / "train-labels-idx1-ubyte",
        "test_images": out / "t10k-images-idx3-ubyte",
        "test_labels": out / "t10k-labels-idx1-ubyte",
    }
    write_idx(paths["train_images"], train_images)
    write_idx(paths["train_labels"], train_labels)
    write_idx(paths["test_images"], test_images)
    write_idx(paths["test_labels"], test_labels)
    return {k: str(v) for k, v in paths.items()}
