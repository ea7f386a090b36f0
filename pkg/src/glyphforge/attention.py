"""Cross-branch attention and attention-driven control fusion.

The surrounding branch's self-attention keys are replaced by an
``alpha``-blend of its own keys and the subject branch's keys. Its attention
maps are then aggregated into a smoothed "neural sketch" that is max-fused
into the pristine control image for the next denoising step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from glyphforge import kernels
from glyphforge.errors import InvalidInput, ShapeError
from glyphforge.glyph import ControlSignal
from glyphforge.imaging import area_downsample, bilinear_resize, minmax_normalize

DEFAULT_ALPHA = 0.5
DEFAULT_SIGMA = 2.0


@dataclass(frozen=True)
class AttentionCapture:
    """One self-attention evaluation: per-head q/k (heads, tokens, d_dim) and
    pre-softmax scaled scores (heads, tokens, tokens)."""

    layer_id: str
    step_t: int
    q: np.ndarray
    k: np.ndarray
    raw_scores: np.ndarray
    head_count: int
    d_dim: int
    grid_hw: tuple[int, int]

    def __post_init__(self):
        tokens = self.grid_hw[0] * self.grid_hw[1]
        if self.q.shape[-2] != tokens or self.k.shape[-2] != tokens:
            raise ShapeError(f"capture {self.layer_id}: q/k rows must equal token count {tokens}")
        if self.d_dim <= 0:
            raise InvalidInput("d_dim must be positive")


@dataclass(frozen=True)
class NeuralSketch:
    map: np.ndarray
    sigma: float = DEFAULT_SIGMA
    source_steps: tuple = field(default_factory=tuple)


def compute_qk(features: np.ndarray, w_q: np.ndarray, w_k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    w_q = np.asarray(w_q, dtype=np.float64)
    w_k = np.asarray(w_k, dtype=np.float64)
    if w_q.shape[0] != f.shape[-1] or w_k.shape[0] != f.shape[-1]:
        raise ShapeError(f"projection rows {w_q.shape[0]}/{w_k.shape[0]} != feature dim {f.shape[-1]}")
    return f @ w_q, f @ w_k


def mix_keys(k_surr: np.ndarray, k_sub: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    k_surr = np.asarray(k_surr, dtype=np.float64)
    k_sub = np.asarray(k_sub, dtype=np.float64)
    if k_surr.shape != k_sub.shape:
        raise ShapeError(f"key shapes differ: {k_surr.shape} vs {k_sub.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput("alpha must lie in [0, 1]")
    # exact at alpha = 1 and for equal keys
    return k_surr + (1.0 - alpha) * (k_sub - k_surr)


def cross_branch_scores(q: np.ndarray, k: np.ndarray, d_dim: int) -> np.ndarray:
    """Scaled dot-product scores ``q kᵀ / √d_dim`` (no softmax)."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    k = np.atleast_2d(np.asarray(k, dtype=np.float64))
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"inner dims differ: {q.shape[-1]} vs {k.shape[-1]}")
    return (q @ np.swapaxes(k, -1, -2)) / math.sqrt(d_dim)


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    s = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True)


def aggregate_attention(captures, latent_hw: tuple[int, int], layers=None) -> np.ndarray:
    """Attention received per token, averaged over heads and layers, on the latent grid.

    The result is min-max normalized; a flat map becomes all zeros.
    """
    selected = [c for c in captures if layers is None or c.layer_id in layers]
    if not selected:
        raise InvalidInput("no attention captures to aggregate")
    acc = np.zeros(latent_hw, dtype=np.float64)
    for cap in selected:
        scores = np.asarray(cap.raw_scores, dtype=np.float64)
        if scores.ndim == 2:
            scores = scores[None]
        received = kernels.attention_received(scores).reshape(cap.grid_hw)
        acc += bilinear_resize(received, latent_hw)
    return minmax_normalize(acc / len(selected))


def gaussian_kernel(sigma: float, truncate: float = 4.0) -> np.ndarray:
    radius = max(1, int(math.ceil(truncate * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with zero padding; mass-preserving away from borders."""
    if sigma <= 0:
        return np.asarray(img, dtype=np.float64).copy()
    return kernels.blur_separable(np.asarray(img, dtype=np.float64), gaussian_kernel(sigma))


def neural_sketch(raw_map: np.ndarray, sigma: float = DEFAULT_SIGMA, out_hw=None, source_steps=()) -> NeuralSketch:
    raw = np.asarray(raw_map, dtype=np.float64)
    if raw.size and (raw.min() < 0.0 or raw.max() > 1.0):
        raise InvalidInput("raw attention map must lie in [0, 1]")
    up = bilinear_resize(raw, tuple(out_hw) if out_hw is not None else raw.shape)
    if sigma <= 0:
        sketch = np.clip(up, 0.0, 1.0)
    else:
        sketch = minmax_normalize(gaussian_blur(up, sigma))
    return NeuralSketch(sketch, float(sigma), tuple(source_steps))


def fuse_control(sketch, control: ControlSignal) -> ControlSignal:
    s = sketch.map if isinstance(sketch, NeuralSketch) else np.asarray(sketch, dtype=np.float64)
    if s.shape != control.image.shape:
        raise ShapeError(f"sketch {s.shape} and control {control.image.shape} differ")
    return control.with_image(np.maximum(s, control.image))


def nearest_concept_assignment(masks, grid_hw: tuple[int, int]) -> np.ndarray:
    """Index of the subject mask nearest to each token of a ``grid_hw`` grid."""
    dists = []
    for m in masks:
        m = np.asarray(m, dtype=np.float64)
        cover = area_downsample(m, grid_hw) > 0 if m.shape != grid_hw else m > 0
        if not cover.any():
            dists.append(np.full(grid_hw, np.inf))
        else:
            dists.append(ndimage.distance_transform_edt(~cover))
    return np.argmin(np.stack(dists), axis=0).reshape(-1)
