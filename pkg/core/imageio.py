"""Portable pixmap (P6) and graymap (P5) reading and writing through Pillow."""

import io
from pathlib import Path

import numpy as np
from PIL import Image


def _to_image(array: np.ndarray) -> Image.Image:
    return Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8))


def _ensure_parent(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def read_ppm(source: str | Path | bytes) -> np.ndarray:
    """
    Read a P6 (or P5) image as an ``(height, width, 3)`` uint8 array.

    Args:
        source: File path or raw file bytes.
    """
    handle = io.BytesIO(source) if isinstance(source, bytes | bytearray) else source
    with Image.open(handle) as image:
        return np.asarray(image.convert("RGB"), dtype=np.uint8).copy()


def write_ppm(path: str | Path, image: np.ndarray) -> Path:
    """Write an ``(height, width, 3)`` uint8 array as binary P6."""
    path = _ensure_parent(path)
    _to_image(image).save(path, format="PPM")
    return path


def encode_ppm(image: np.ndarray) -> bytes:
    """Binary P6 encoding of an RGB array."""
    buffer = io.BytesIO()
    _to_image(image).save(buffer, format="PPM")
    return buffer.getvalue()


def write_pgm(path: str | Path, image: np.ndarray) -> Path:
    """
    Write a single channel array as binary P5.

    Binary masks holding only 0 and 1 are stretched to 0 and 255.
    """
    data = np.asarray(image)
    if data.dtype == bool or (data.size and data.max() <= 1):
        data = data.astype(np.uint8) * 255
    path = _ensure_parent(path)
    _to_image(data).save(path, format="PPM")
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P5 image as an ``(height, width)`` uint8 array."""
    with Image.open(path) as image:
        return np.asarray(image.convert("L"), dtype=np.uint8).copy()
