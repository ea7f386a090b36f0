"""Offline detector backends."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from glyphforge import kernels
from glyphforge.errors import BackendUnavailable
from glyphforge.region import DetectionBox


class ComponentDetector:
    """Proposes one box per 8-connected ink component.

    Confidence is the component's ink density inside its bounding box.
    """

    backend_id = "toy-components"

    def __init__(self, min_pixels: int = 1):
        self.min_pixels = min_pixels

    def detect(self, image, prompt: str, box_threshold: float = 0.0) -> list[DetectionBox]:
        pixels = image.pixels if hasattr(image, "pixels") else np.asarray(image)
        h, w = pixels.shape
        labels, n = kernels.label_components(pixels >= 0.5, 8)
        boxes = []
        if n == 0:
            return boxes
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n + 1)
        rows = np.repeat(np.arange(h), w)
        cols = np.tile(np.arange(w), h)
        fg = flat > 0
        rmin = np.full(n + 1, h)
        rmax = np.full(n + 1, -1)
        cmin = np.full(n + 1, w)
        cmax = np.full(n + 1, -1)
        np.minimum.at(rmin, flat[fg], rows[fg])
        np.maximum.at(rmax, flat[fg], rows[fg])
        np.minimum.at(cmin, flat[fg], cols[fg])
        np.maximum.at(cmax, flat[fg], cols[fg])
        for lab in range(1, n + 1):
            if counts[lab] < self.min_pixels:
                continue
            bbox_px = (rmax[lab] - rmin[lab] + 1) * (cmax[lab] - cmin[lab] + 1)
            conf = float(counts[lab] / bbox_px)
            if conf < box_threshold:
                continue
            boxes.append(DetectionBox(cmin[lab] / w, rmin[lab] / h, (cmax[lab] + 1) / w, (rmax[lab] + 1) / h, conf, prompt))
        return boxes


class FixtureDetector:
    """Canned boxes keyed by ``"char|prompt"``; other queries go to ``fallback``."""

    backend_id = "toy-fixture-detector"

    def __init__(self, table: dict | None = None, fallback=None):
        self.table = {k: [DetectionBox.from_json(b) for b in v] for k, v in (table or {}).items()}
        self.fallback = fallback

    @classmethod
    def from_file(cls, path, fallback=None) -> "FixtureDetector":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), fallback)

    def detect(self, image, prompt: str, box_threshold: float = 0.0) -> list[DetectionBox]:
        key = f"{getattr(image, 'char', '')}|{prompt}"
        if key in self.table:
            return [b for b in self.table[key] if b.confidence >= box_threshold]
        if self.fallback is None:
            raise BackendUnavailable(f"no detector fixture for {key!r}")
        return self.fallback.detect(image, prompt, box_threshold)
