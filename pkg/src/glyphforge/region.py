"""Subject-region selection: detection, filter-and-rank, and glyph splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from glyphforge.errors import InvalidInput
from glyphforge.glyph import GlyphImage

FALLBACK_AREA = 0.5
OVERLAP_REJECT = 0.10


@dataclass(frozen=True)
class DetectionBox:
    x0: float
    y0: float
    x1: float
    y1: float
    confidence: float
    phrase: str = ""

    def __post_init__(self):
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise InvalidInput(f"box coordinates out of order or range: {self.coords}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInput(f"confidence {self.confidence} outside [0, 1]")

    @property
    def coords(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @classmethod
    def from_json(cls, obj: dict) -> "DetectionBox":
        x0, y0, x1, y1 = (float(v) for v in obj["box"])
        return cls(x0, y0, x1, y1, float(obj.get("score", obj.get("confidence", 0.0))), str(obj.get("phrase", "")))

    def to_json(self) -> dict:
        return {"box": list(self.coords), "score": self.confidence, "phrase": self.phrase}


@dataclass(frozen=True)
class Thresholds:
    conf_min: float = 0.5
    area_lo: float = 0.4
    area_hi: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.area_lo < self.area_hi <= 1.0:
            raise InvalidInput("need 0 <= area_lo < area_hi <= 1")
        if not 0.0 <= self.conf_min <= 1.0:
            raise InvalidInput("conf_min must lie in [0, 1]")


@dataclass(frozen=True)
class RegionSplit:
    subject_image: np.ndarray
    surrounding_image: np.ndarray
    mask: np.ndarray
    box: DetectionBox
    fallback: str | None = None


@dataclass(frozen=True)
class MultiRegionSplit:
    splits: list[RegionSplit]
    gammas: list[float] = field(default_factory=list)

    @property
    def masks(self) -> list[np.ndarray]:
        return [s.mask for s in self.splits]


def _rank_key(b: DetectionBox):
    return (-b.confidence, -b.area, b.y0, b.x0)


def detect(image: GlyphImage, prompt: str, backend, box_threshold: float = 0.0) -> list[DetectionBox]:
    return list(backend.detect(image, prompt, box_threshold))


def filter_and_rank(boxes, area_lo: float = 0.4, area_hi: float = 0.6, conf_min: float = 0.5) -> list[DetectionBox]:
    """Keep boxes with area ratio in [area_lo, area_hi] and confidence >= conf_min,
    best first; ties go to the larger box, then reading order."""
    Thresholds(conf_min, area_lo, area_hi)
    keep = [b for b in boxes if area_lo <= b.area <= area_hi and b.confidence >= conf_min]
    return sorted(keep, key=_rank_key)


def _span(lo: float, hi: float, n: int) -> tuple[int, int]:
    a = int(math.floor(lo * n + 0.5))
    b = int(math.floor(hi * n + 0.5))
    a = min(max(a, 0), n - 1)
    return a, min(max(b, a + 1), n)


def box_mask(box: DetectionBox, hw: tuple[int, int]) -> np.ndarray:
    h, w = hw
    r0, r1 = _span(box.y0, box.y1, h)
    c0, c1 = _span(box.x0, box.x1, w)
    m = np.zeros((h, w), dtype=np.float64)
    m[r0:r1, c0:c1] = 1.0
    return m


def _split_with_mask(pixels: np.ndarray, mask: np.ndarray, box: DetectionBox, fallback=None) -> RegionSplit:
    sub = pixels * mask
    surr = pixels - sub
    for a in (sub, surr, mask):
        a.setflags(write=False)
    return RegionSplit(sub, surr, mask, box, fallback)


def split_regions(image: GlyphImage, box: DetectionBox) -> RegionSplit:
    pixels = image.pixels
    return _split_with_mask(pixels, box_mask(box, pixels.shape), box)


def clamp_box_area(box: DetectionBox, area_lo: float, area_hi: float) -> DetectionBox:
    """Scale ``box`` uniformly about its center until its area lies in range, staying on canvas."""
    target = min(max(box.area, area_lo), area_hi)
    w, h = box.x1 - box.x0, box.y1 - box.y0
    if target != box.area:
        k = math.sqrt(target / box.area)
        w, h = w * k, h * k
        if w > 1.0:
            w, h = 1.0, target
        if h > 1.0:
            w, h = target, 1.0
    cx, cy = (box.x0 + box.x1) / 2, (box.y0 + box.y1) / 2
    x0 = min(max(cx - w / 2, 0.0), 1.0 - w)
    y0 = min(max(cy - h / 2, 0.0), 1.0 - h)
    return DetectionBox(x0, y0, min(x0 + w, 1.0), min(y0 + h, 1.0), box.confidence, box.phrase)


def complement_box(claimed: np.ndarray, area: float = FALLBACK_AREA, grid: int = 32) -> DetectionBox:
    """Box of the given area ratio overlapping ``claimed`` least; centered when nothing is claimed."""
    h, w = claimed.shape
    integral = np.zeros((h + 1, w + 1))
    integral[1:, 1:] = np.cumsum(np.cumsum(claimed > 0, axis=0), axis=1)
    side = math.sqrt(area)
    shapes = [(side, side), (area, 1.0), (1.0, area)]
    best = None
    for si, (bw, bh) in enumerate(shapes):
        xs = np.linspace(0.0, 1.0 - bw, grid + 1) if bw < 1.0 else np.zeros(1)
        ys = np.linspace(0.0, 1.0 - bh, grid + 1) if bh < 1.0 else np.zeros(1)
        for y0 in ys:
            for x0 in xs:
                r0, r1 = _span(y0, y0 + bh, h)
                c0, c1 = _span(x0, x0 + bw, w)
                overlap = integral[r1, c1] - integral[r0, c1] - integral[r1, c0] + integral[r0, c0]
                frac = overlap / ((r1 - r0) * (c1 - c0))
                dist = math.hypot(x0 + bw / 2 - 0.5, y0 + bh / 2 - 0.5)
                key = (round(frac, 12), round(dist, 12), si)
                if best is None or key < best[0]:
                    best = (key, (x0, y0, x0 + bw, y0 + bh))
    x0, y0, x1, y1 = best[1]
    return DetectionBox(x0, y0, min(x1, 1.0), min(y1, 1.0), 0.0, "fallback")


def _overlap_fraction(box: DetectionBox, claimed: np.ndarray) -> float:
    m = box_mask(box, claimed.shape)
    return float((m * claimed).sum() / m.sum())


def _select_one(pixels, image, prompt, backend, th: Thresholds, claimed, overlap_reject=OVERLAP_REJECT) -> RegionSplit:
    query = image if not claimed.any() else GlyphImage(pixels * (1.0 - claimed), image.char, image.font_id, image.size_px)
    raw = detect(query, prompt, backend)
    if claimed.any():
        raw = [b for b in raw if _overlap_fraction(b, claimed) <= overlap_reject]
    ranked = filter_and_rank(raw, th.area_lo, th.area_hi, th.conf_min)
    if ranked:
        box, fallback = ranked[0], None
    elif raw:
        box, fallback = clamp_box_area(sorted(raw, key=_rank_key)[0], th.area_lo, th.area_hi), "clamped"
    else:
        box, fallback = complement_box(claimed), "default"
    mask = box_mask(box, pixels.shape) * (1.0 - claimed)
    return _split_with_mask(pixels, mask, box, fallback)


def select_region(image: GlyphImage, prompt: str, backend, thresholds: Thresholds | None = None) -> RegionSplit:
    """Detect, filter and rank, then split on the best box; falls back so a region always exists."""
    pixels = image.pixels
    return _select_one(pixels, image, prompt, backend, thresholds or Thresholds(), np.zeros_like(pixels))


def select_regions_multi(image: GlyphImage, prompts, backend, thresholds: Thresholds | None = None,
                         gammas=None, overlap_reject: float = OVERLAP_REJECT) -> MultiRegionSplit:
    """One region per prompt; later prompts only see and claim unclaimed pixels."""
    if not prompts:
        raise InvalidInput("need at least one subject prompt")
    th = thresholds or Thresholds()
    pixels = image.pixels
    claimed = np.zeros_like(pixels)
    splits = []
    for prompt in prompts:
        sp = _select_one(pixels, image, prompt, backend, th, claimed, overlap_reject)
        splits.append(sp)
        claimed = claimed + sp.mask
    return MultiRegionSplit(splits, list(gammas) if gammas is not None else [])
