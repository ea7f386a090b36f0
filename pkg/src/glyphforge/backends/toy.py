"""Offline toy denoisers.

``AnalyticGaussianBackend`` returns the exact noise prediction for Gaussian
data, so sampler arithmetic can be checked against closed forms.
``MicroAttentionBackend`` is a tiny fixed-weight network with real
self-attention layers, used to exercise the hook machinery.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

from glyphforge.attention import AttentionCapture, compute_qk, cross_branch_scores, softmax
from glyphforge.backends.base import HookRegistry
from glyphforge.errors import InvalidInput, ShapeError
from glyphforge.glyph import ControlKind
from glyphforge.imaging import area_downsample, bilinear_resize
from glyphforge.sampler import UNCONDITIONAL, DiffusionSchedule, make_schedule


class IdentityCodec:
    """Image (H, W) <-> latent (H, W, 1)."""

    def latent_shape(self, image_hw):
        return (int(image_hw[0]), int(image_hw[1]), 1)

    def encode(self, image: np.ndarray) -> np.ndarray:
        return np.asarray(image, dtype=np.float64)[..., None].copy()

    def decode(self, latent: np.ndarray) -> np.ndarray:
        return np.asarray(latent, dtype=np.float64)[..., 0].copy()


def _control_latent(control, scale, hw):
    if control is None:
        return None, 0.0
    cs = control.conditioning_scale if scale is None else float(scale)
    if cs == 0.0:
        return None, 0.0
    return area_downsample(control.image, hw)[..., None], cs


class AnalyticGaussianBackend(IdentityCodec):
    """Exact denoiser for data ~ N(μ, σ0²·I) per prompt.

    ε̂ = (x_t − √ᾱ_t·m) / √(1−ᾱ_t) with m the posterior mean of x_0 given x_t,
    m = μ + √ᾱ_t·σ0²·(x_t − √ᾱ_t·μ) / (ᾱ_t·σ0² + 1 − ᾱ_t).
    A control shifts the target: μ_eff = μ + CS·(control − μ).
    """

    supports_hooks = False

    def __init__(self, schedule: DiffusionSchedule | None = None, mu_table=None, sigma0: float = 0.1, backend_id="toy-analytic"):
        if sigma0 < 0:
            raise InvalidInput("sigma0 must be >= 0")
        self.schedule = schedule or make_schedule()
        self.sigma0 = float(sigma0)
        self.backend_id = backend_id
        self.mu_table: dict[str, object] = {}
        for k, v in (mu_table or {}).items():
            self.register(k, v)

    def register(self, prompt: str, mu):
        if prompt == UNCONDITIONAL:
            raise InvalidInput("the unconditional target is fixed at zero")
        self.mu_table[prompt] = mu if np.isscalar(mu) else np.asarray(mu, dtype=np.float64)

    def target(self, x_t, prompt, control=None, control_scale=None) -> np.ndarray:
        if prompt == UNCONDITIONAL:
            mu = np.zeros_like(x_t)
        else:
            try:
                mu = self.mu_table[prompt]
            except KeyError:
                raise InvalidInput(f"no target registered for prompt {prompt!r}") from None
            mu = np.broadcast_to(mu, x_t.shape).astype(np.float64)
        if control is not None:
            c, cs = _control_latent(control, control_scale, x_t.shape[:2])
            if c is not None:
                mu = mu + cs * (c - mu)
        return mu

    def predict_noise(self, x_t, t, prompt, control=None, control_scale=None):
        x_t = np.asarray(x_t, dtype=np.float64)
        mu = self.target(x_t, prompt, control, control_scale)
        ab = float(self.schedule.alphas_bar[t])
        sa = math.sqrt(ab)
        denom = ab * self.sigma0**2 + 1.0 - ab
        posterior_mean = mu + sa * self.sigma0**2 * (x_t - sa * mu) / denom
        return (x_t - sa * posterior_mean) / math.sqrt(1.0 - ab)


def _prompt_seed(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


_KINDS = (ControlKind.DEPTH, ControlKind.SCRIBBLE, ControlKind.SEGMENTATION)


class MicroAttentionBackend(IdentityCodec):
    """Fixed-seed network: pool to a token grid, run self-attention layers, read out noise.

    ε̂ = √(1−ᾱ_t)·x_t + 0.1·tanh(upsampled readout); the linear part is the
    exact predictor for standard-normal data, which keeps sampling bounded.
    """

    supports_hooks = True

    def __init__(self, schedule: DiffusionSchedule | None = None, grid: int = 16, d_model: int = 32,
                 heads: int = 2, n_layers: int = 2, emb_dim: int = 8, seed: int = 0, backend_id=None):
        if d_model % heads:
            raise InvalidInput("d_model must be divisible by heads")
        self.schedule = schedule or make_schedule()
        self.grid = grid
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.emb_dim = emb_dim
        self.seed = seed
        self.backend_id = backend_id or f"toy-micro-{seed}"
        self.hooks = HookRegistry()
        rng = np.random.default_rng(seed)
        n_in = 2 + 4 + emb_dim + len(_KINDS)
        self.w_in = rng.standard_normal((n_in, d_model)) / math.sqrt(n_in)
        self.layers = []
        for i in range(n_layers):
            w = {name: rng.standard_normal((d_model, d_model)) / math.sqrt(d_model) for name in ("q", "k", "v", "o", "mlp")}
            self.layers.append((f"attn{i}", w))
        self.w_out = rng.standard_normal((d_model, 1)) / math.sqrt(d_model)

    @property
    def layer_ids(self) -> list[str]:
        return [lid for lid, _ in self.layers]

    def _embed(self, prompt: str) -> np.ndarray:
        if prompt == UNCONDITIONAL:
            return np.zeros(self.emb_dim)
        return np.random.default_rng(_prompt_seed(prompt)).standard_normal(self.emb_dim)

    def _split(self, a):
        return a.reshape(-1, self.heads, self.d_head).transpose(1, 0, 2)

    def _attention(self, layer_id, w, feats, t):
        q, k = compute_qk(feats, w["q"], w["k"])
        v = feats @ w["v"]
        qh, kh, vh = self._split(q), self._split(k), self._split(v)
        active = self.hooks.active(layer_id)
        scores = None
        for h in active:
            if h.substitution is not None:
                mixed = h.substitution.scores(layer_id, qh, kh, self.d_head)
                if mixed is not None:
                    scores = mixed
        if scores is None:
            scores = cross_branch_scores(qh, kh, self.d_head)
        for h in active:
            if h.capture:
                h.record(AttentionCapture(layer_id, int(t), qh, kh, scores, self.heads, self.d_head, (self.grid, self.grid)))
        out = softmax(scores) @ vh
        return out.transpose(1, 0, 2).reshape(-1, self.d_model) @ w["o"]

    def predict_noise(self, x_t, t, prompt, control=None, control_scale=None):
        x_t = np.asarray(x_t, dtype=np.float64)
        h, w, _ = x_t.shape
        g = self.grid
        if h % g or w % g:
            raise ShapeError(f"latent {h}x{w} not divisible by token grid {g}")
        ab = float(self.schedule.alphas_bar[t])
        n_tok = g * g
        tok_x = area_downsample(x_t.mean(axis=-1), (g, g)).reshape(-1)
        kind = np.zeros(len(_KINDS))
        tok_c = np.zeros(n_tok)
        if control is not None:
            c, cs = _control_latent(control, control_scale, (g, g))
            if c is not None:
                tok_c = cs * c.reshape(-1)
            kind[_KINDS.index(control.kind)] = 1.0
        phase = math.pi * t / self.schedule.T_train
        temb = np.array([math.sin(phase), math.cos(phase), math.sin(2 * phase), math.cos(2 * phase)])
        const = np.concatenate([temb, self._embed(prompt), kind])
        feats = np.column_stack([tok_x, tok_c, np.broadcast_to(const, (n_tok, const.size))]) @ self.w_in
        for layer_id, wts in self.layers:
            feats = feats + self._attention(layer_id, wts, feats, t)
            feats = feats + np.tanh(feats @ wts["mlp"])
        readout = (feats @ self.w_out).reshape(g, g)
        return math.sqrt(1.0 - ab) * x_t + 0.1 * np.tanh(bilinear_resize(readout, (h, w)))[..., None]
