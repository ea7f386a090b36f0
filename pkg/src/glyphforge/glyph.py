"""Glyph rasterization and control-image derivation.

Canonical polarity throughout the package is ink = 1 on background = 0.
"""
from __future__ import annotations

import os
import unicodedata
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from glyphforge.errors import FontNotFound, InvalidInput, MissingGlyph

DEFAULT_FONT = "DejaVuSans.ttf"
DEFAULT_SIZE = 512
MARGIN_FRACTION = 0.08
BINARY_THRESHOLD = 0.5
_SYSTEM_FONT_DIRS = (
    "/usr/share/fonts",
    "/usr/local/share/fonts",
    "~/.fonts",
    "~/.local/share/fonts",
    "/Library/Fonts",
    "/System/Library/Fonts",
    "C:/Windows/Fonts",
)


class ControlKind(str, Enum):
    DEPTH = "depth"
    SCRIBBLE = "scribble"
    SEGMENTATION = "segmentation"


@dataclass(frozen=True)
class GlyphImage:
    pixels: np.ndarray
    char: str
    font_id: str = DEFAULT_FONT
    size_px: int = DEFAULT_SIZE

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.size_px, self.size_px):
            raise InvalidInput(f"glyph pixels must be {self.size_px}x{self.size_px}, got {px.shape}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise InvalidInput("glyph pixels must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def ink_fraction(self) -> float:
        return float(self.pixels.mean())


@dataclass(frozen=True)
class ControlSignal:
    kind: ControlKind
    image: np.ndarray
    conditioning_scale: float = 1.0

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim != 2:
            raise InvalidInput("control image must be 2-D")
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise InvalidInput("control image must lie in [0, 1]")
        if self.conditioning_scale < 0:
            raise InvalidInput("conditioning scale must be >= 0")
        img.setflags(write=False)
        object.__setattr__(self, "kind", ControlKind(self.kind))
        object.__setattr__(self, "image", img)

    def with_image(self, image: np.ndarray) -> "ControlSignal":
        return ControlSignal(self.kind, image, self.conditioning_scale)

    def with_scale(self, scale: float) -> "ControlSignal":
        return ControlSignal(self.kind, self.image, scale)


def font_search_dirs(extra=None) -> list[Path]:
    dirs = []
    if extra:
        dirs.extend([extra] if isinstance(extra, (str, Path)) else extra)
    env = os.environ.get("GLYPHFORGE_FONT_DIR")
    if env:
        dirs.extend(env.split(os.pathsep))
    dirs.extend(_SYSTEM_FONT_DIRS)
    return [Path(d).expanduser() for d in dirs]


@lru_cache(maxsize=64)
def _resolve_cached(font_id: str, dirs: tuple[str, ...]) -> str:
    direct = Path(font_id).expanduser()
    if direct.is_file():
        return str(direct.resolve())
    wanted = font_id.lower()
    stems = {wanted, wanted + ".ttf", wanted + ".otf", wanted + ".ttc"}
    for d in dirs:
        root = Path(d)
        if not root.is_dir():
            continue
        for p in sorted(root.rglob("*")):
            if p.is_file() and p.name.lower() in stems:
                return str(p.resolve())
    raise FontNotFound(f"font {font_id!r} not found in {list(dirs)}")


def resolve_font(font_id: str = DEFAULT_FONT, font_dirs=None) -> str:
    """Map a font id (path or file name) to an absolute font file path."""
    return _resolve_cached(font_id, tuple(str(d) for d in font_search_dirs(font_dirs)))


@lru_cache(maxsize=16)
def _codepoints(path: str) -> frozenset[int]:
    from fontTools.ttLib import TTFont

    with TTFont(path, fontNumber=0, lazy=True) as tt:
        return frozenset(tt.getBestCmap() or {})


def rasterize(char: str, font_id: str = DEFAULT_FONT, size_px: int = DEFAULT_SIZE, font_dirs=None) -> GlyphImage:
    """Render ``char`` centered on a square canvas with an 8% margin, binarized at 0.5."""
    if not isinstance(char, str) or char == "":
        raise InvalidInput("character must be a non-empty string")
    if size_px < 64:
        raise InvalidInput("size_px must be >= 64")
    if any(unicodedata.category(c) in ("Cc", "Zl", "Zp") for c in char):
        raise InvalidInput("control characters and line breaks are not supported")
    if char.strip() == "":
        raise InvalidInput("blank character renders no ink")
    path = resolve_font(font_id, font_dirs)
    cmap = _codepoints(path)
    missing = [c for c in char if not c.isspace() and ord(c) not in cmap]
    if missing:
        raise MissingGlyph(f"font {Path(path).name} has no glyph for {''.join(missing)!r}")

    font = ImageFont.truetype(path, size=size_px)
    left, top, right, bottom = font.getbbox(char)
    pad = size_px // 4
    canvas = Image.new("L", (right - left + 2 * pad, bottom - top + 2 * pad), 0)
    ImageDraw.Draw(canvas).text((pad - left, pad - top), char, fill=255, font=font)
    ink_box = canvas.getbbox()
    if ink_box is None:
        raise InvalidInput(f"{char!r} renders no ink")
    crop = canvas.crop(ink_box)

    margin = int(round(MARGIN_FRACTION * size_px))
    inner = size_px - 2 * margin
    scale = min(inner / crop.width, inner / crop.height)
    nw = max(1, int(round(crop.width * scale)))
    nh = max(1, int(round(crop.height * scale)))
    crop = crop.resize((nw, nh), Image.Resampling.BILINEAR)
    out = Image.new("L", (size_px, size_px), 0)
    out.paste(crop, ((size_px - nw) // 2, (size_px - nh) // 2))

    gray = np.asarray(out, dtype=np.float64) / 255.0
    pixels = (gray >= BINARY_THRESHOLD).astype(np.float64)
    return GlyphImage(pixels=pixels, char=char, font_id=font_id, size_px=size_px)


def _pixels(g) -> np.ndarray:
    return g.pixels if isinstance(g, GlyphImage) else np.asarray(g, dtype=np.float64)


def to_depth(g, conditioning_scale: float = 1.0) -> ControlSignal:
    """Ink is near (1.0), background far (0.0)."""
    return ControlSignal(ControlKind.DEPTH, np.clip(_pixels(g), 0.0, 1.0), conditioning_scale)


def to_scribble(g, conditioning_scale: float = 1.0) -> ControlSignal:
    return ControlSignal(ControlKind.SCRIBBLE, np.clip(_pixels(g), 0.0, 1.0), conditioning_scale)


def to_segmentation(img, conditioning_scale: float = 1.0) -> ControlSignal:
    arr = _pixels(img)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InvalidInput("segmentation input must lie in [0, 1]")
    return ControlSignal(ControlKind.SEGMENTATION, (arr >= BINARY_THRESHOLD).astype(np.float64), conditioning_scale)
