"""Small array/image helpers used across stages."""
from __future__ import annotations

import hashlib
import io
from pathlib import Path

import numpy as np
from PIL import Image

from glyphforge.errors import ShapeError


def area_downsample(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Average-pool a 2-D array to ``out_hw``; input dims must be integer multiples."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    oh, ow = out_hw
    if (oh, ow) == (h, w):
        return img.copy()
    if h % oh or w % ow:
        raise ShapeError(f"cannot area-downsample {h}x{w} to {oh}x{ow}")
    return img.reshape(oh, h // oh, ow, w // ow).mean(axis=(1, 3))


def bilinear_resize(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    oh, ow = out_hw
    if (oh, ow) == (h, w):
        return img.copy()

    def coords(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = coords(h, oh)
    x0, x1, fx = coords(w, ow)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def minmax_normalize(a: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a flat array maps to all zeros."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi - lo <= 0.0:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def png_bytes(img: np.ndarray) -> bytes:
    arr = to_uint8(img)
    mode = "L" if arr.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: np.ndarray, path: str | Path) -> str:
    """Write an 8-bit PNG and return the sha256 of the written bytes."""
    data = png_bytes(img)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def decode_png_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def array_hash(a: np.ndarray) -> str:
    a = np.ascontiguousarray(a)
    h = hashlib.sha256()
    h.update(str(a.dtype).encode())
    h.update(str(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()
