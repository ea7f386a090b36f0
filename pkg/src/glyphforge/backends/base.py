"""Backend contracts and the attention hook registry."""
from __future__ import annotations

import contextlib
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from glyphforge.attention import AttentionCapture, cross_branch_scores, mix_keys
from glyphforge.errors import CapabilityError, ShapeError


@runtime_checkable
class DenoiserBackend(Protocol):
    backend_id: str
    supports_hooks: bool

    def latent_shape(self, image_hw: tuple[int, int]) -> tuple[int, int, int]: ...

    def encode(self, image: np.ndarray) -> np.ndarray: ...

    def decode(self, latent: np.ndarray) -> np.ndarray: ...

    def predict_noise(self, x_t, t: int, prompt: str, control=None, control_scale: float | None = None) -> np.ndarray: ...


@runtime_checkable
class DetectorBackend(Protocol):
    backend_id: str

    def detect(self, image, prompt: str, box_threshold: float = 0.0) -> list: ...


@runtime_checkable
class LLMBackend(Protocol):
    backend_id: str

    def complete(self, system_text: str, user_text: str) -> str: ...


class KeyMix:
    """Key substitution ``k_cross = α·k_own + (1−α)·k_subject``.

    ``sources`` holds one ``{layer_id: AttentionCapture}`` mapping per subject
    concept. With several concepts, ``assignment`` gives for every query token
    the concept whose keys it mixes with.
    """

    def __init__(self, alpha: float, sources: Sequence[Mapping[str, AttentionCapture]], assignment=None):
        self.alpha = float(alpha)
        self.sources = list(sources)
        self.assignment = None if assignment is None else np.asarray(assignment)

    def scores(self, layer_id: str, q: np.ndarray, k: np.ndarray, d_dim: int) -> np.ndarray | None:
        subject_keys = []
        for src in self.sources:
            cap = src.get(layer_id)
            if cap is None:
                return None
            if cap.k.shape != k.shape:
                raise ShapeError(f"layer {layer_id}: subject keys {cap.k.shape} vs surrounding {k.shape}")
            subject_keys.append(cap.k)
        if not subject_keys:
            return None
        per_source = [cross_branch_scores(q, mix_keys(k, ks, self.alpha), d_dim) for ks in subject_keys]
        if len(per_source) == 1 or self.assignment is None:
            return per_source[0]
        rows = self.assignment.reshape(-1)
        out = per_source[0].copy()
        for idx in range(1, len(per_source)):
            sel = rows == idx
            out[..., sel, :] = per_source[idx][..., sel, :]
        return out


class HookHandle:
    def __init__(self, registry: "HookRegistry", substitution=None, capture=False, layers=None, keep_history=False):
        self.registry = registry
        self.substitution = substitution
        self.capture = capture
        self.layers = None if layers is None else frozenset(layers)
        self.keep_history = keep_history
        self.latest: dict[str, AttentionCapture] = {}
        self.history: list[AttentionCapture] = []
        self._suspended = False

    def applies(self, layer_id: str) -> bool:
        return not self._suspended and (self.layers is None or layer_id in self.layers)

    def record(self, cap: AttentionCapture):
        self.latest[cap.layer_id] = cap
        if self.keep_history:
            self.history.append(cap)

    @property
    def captures(self) -> list[AttentionCapture]:
        return list(self.history) if self.keep_history else list(self.latest.values())

    @contextlib.contextmanager
    def suspended(self):
        prev = self._suspended
        self._suspended = True
        try:
            yield self
        finally:
            self._suspended = prev

    def remove(self):
        self.registry.discard(self)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.remove()
        return False


class HookRegistry:
    def __init__(self):
        self._handles: list[HookHandle] = []

    def add(self, handle: HookHandle):
        self._handles.append(handle)

    def discard(self, handle: HookHandle):
        if handle in self._handles:
            self._handles.remove(handle)

    def enabled(self) -> list[HookHandle]:
        return [h for h in self._handles if not h._suspended]

    def active(self, layer_id: str) -> list[HookHandle]:
        return [h for h in self._handles if h.applies(layer_id)]

    def __len__(self):
        return len(self._handles)


def install_hooks(backend, substitution: KeyMix | None = None, capture: bool = False, layers=None, keep_history=False) -> HookHandle:
    """Attach key substitution and/or capture to every (or the listed) attention layer."""
    if not getattr(backend, "supports_hooks", False):
        raise CapabilityError(f"{getattr(backend, 'backend_id', type(backend).__name__)} has no attention hooks")
    handle = HookHandle(backend.hooks, substitution, capture, layers, keep_history)
    backend.hooks.add(handle)
    return handle
