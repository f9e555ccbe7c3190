"""8-bit PPM/PGM image files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_bytes(values: np.ndarray) -> np.ndarray:
    return np.round(255.0 * np.clip(np.asarray(values, np.float64), 0.0, 1.0)).astype(np.uint8)


def write_ppm(path, rgb: np.ndarray) -> None:
    Image.fromarray(to_bytes(rgb)).save(Path(path), format="PPM")


def write_pgm(path, gray: np.ndarray) -> None:
    Image.fromarray(to_bytes(gray)).save(Path(path), format="PPM")


def read_image(path) -> np.ndarray:
    """Image as floats in [0, 1]: (H, W, 3) for PPM, (H, W) for PGM."""
    with Image.open(Path(path)) as im:
        return np.asarray(im, dtype=np.float64) / 255.0
