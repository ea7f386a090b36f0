"""Compositional DDIM sampling engine.

One latent trajectory is shared by every branch. At each step the subject
branch(es), the surrounding branch and a single unconditional pass all see
the same ``x_t``; their noise predictions are mask-fused, guided against the
shared unconditional prediction and pushed through a deterministic (eta = 0)
DDIM update.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from glyphforge import kernels
from glyphforge.attention import (
    DEFAULT_ALPHA,
    DEFAULT_SIGMA,
    aggregate_attention,
    fuse_control,
    nearest_concept_assignment,
    neural_sketch,
)
from glyphforge.errors import InvalidInput, InvariantViolation, NumericalError, ShapeError
from glyphforge.glyph import ControlSignal, to_scribble, to_segmentation
from glyphforge.imaging import area_downsample

log = logging.getLogger(__name__)

UNCONDITIONAL = ""


@dataclass(frozen=True)
class DiffusionSchedule:
    T_train: int
    alphas_bar: np.ndarray
    inference_steps: int
    timestep_indices: np.ndarray
    beta_start: float = 0.00085
    beta_end: float = 0.012
    beta_schedule: str = "scaled_linear"

    def alpha_bar(self, t: int) -> float:
        return 1.0 if t < 0 else float(self.alphas_bar[t])

    def coefficients(self, t: int) -> tuple[float, float]:
        """(√ᾱ_t, √(1-ᾱ_t)); t = -1 is the clean endpoint."""
        ab = self.alpha_bar(t)
        return math.sqrt(ab), math.sqrt(1.0 - ab)

    def with_steps(self, steps: int) -> "DiffusionSchedule":
        return make_schedule(self.T_train, steps, self.beta_start, self.beta_end, self.beta_schedule)

    def as_dict(self) -> dict:
        return {
            "T_train": self.T_train,
            "inference_steps": self.inference_steps,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "beta_schedule": self.beta_schedule,
        }


def make_schedule(
    T_train: int = 1000,
    inference_steps: int = 50,
    beta_start: float = 0.00085,
    beta_end: float = 0.012,
    beta_schedule: str = "scaled_linear",
) -> DiffusionSchedule:
    if T_train < 1 or inference_steps < 1 or inference_steps > T_train:
        raise InvalidInput(f"need 1 <= inference_steps ({inference_steps}) <= T_train ({T_train})")
    if not 0 < beta_start < beta_end < 1:
        raise InvalidInput("need 0 < beta_start < beta_end < 1")
    if beta_schedule == "scaled_linear":
        betas = np.linspace(beta_start**0.5, beta_end**0.5, T_train, dtype=np.float64) ** 2
    elif beta_schedule == "linear":
        betas = np.linspace(beta_start, beta_end, T_train, dtype=np.float64)
    else:
        raise InvalidInput(f"unknown beta schedule {beta_schedule!r}")
    alphas_bar = np.cumprod(1.0 - betas)
    stride = T_train // inference_steps
    indices = (np.arange(inference_steps, dtype=np.int64) * stride)[::-1].copy()
    alphas_bar.setflags(write=False)
    indices.setflags(write=False)
    return DiffusionSchedule(T_train, alphas_bar, inference_steps, indices, beta_start, beta_end, beta_schedule)


def ddim_step(x_t, eps_hat, t: int, t_prev: int, schedule: DiffusionSchedule) -> np.ndarray:
    """Deterministic DDIM update; ``t_prev = -1`` returns the clean estimate."""
    if t_prev >= t:
        raise InvalidInput(f"t_prev ({t_prev}) must precede t ({t})")
    sa, sb = schedule.coefficients(t)
    x0 = (x_t - sb * eps_hat) / sa
    if t_prev < 0:
        return x0
    sap, sbp = schedule.coefficients(t_prev)
    return sap * x0 + sbp * eps_hat


def _check_mask(mask, eps_shape):
    m = np.asarray(mask, dtype=np.float64)
    if m.shape == tuple(eps_shape):
        return m
    if m.shape == tuple(eps_shape[:-1]):
        return m[..., None]
    raise ShapeError(f"mask {m.shape} does not match noise {tuple(eps_shape)}")


def fuse_noise(eps_sub, eps_surr, mask, gamma: float):
    """γ·M·ε_sub + (1−M)·ε_surr with M broadcast over channels."""
    eps_sub = np.asarray(eps_sub, dtype=np.float64)
    eps_surr = np.asarray(eps_surr, dtype=np.float64)
    if eps_sub.shape != eps_surr.shape:
        raise ShapeError(f"noise shapes differ: {eps_sub.shape} vs {eps_surr.shape}")
    m = np.asarray(mask, dtype=np.float64)
    _check_mask(m, eps_sub.shape)
    if m.ndim == eps_sub.ndim - 1:
        return (gamma * m)[..., None] * eps_sub + (1.0 - m)[..., None] * eps_surr
    return (gamma * m) * eps_sub + (1.0 - m) * eps_surr


def fuse_noise_multi(eps_subs: Sequence, masks: Sequence, gammas: Sequence[float], eps_surr):
    """Σ γⁱ·Mⁱ·εⁱ + (1 − Σ Mⁱ)·ε_surr for pairwise-disjoint masks."""
    if not (len(eps_subs) == len(masks) == len(gammas)) or not eps_subs:
        raise InvalidInput("need matching, non-empty lists of noises, masks and gammas")
    eps_surr = np.asarray(eps_surr, dtype=np.float64)
    ms = [np.asarray(m, dtype=np.float64) for m in masks]
    for e in eps_subs:
        if np.shape(e) != eps_surr.shape:
            raise ShapeError(f"noise shapes differ: {np.shape(e)} vs {eps_surr.shape}")
    for m in ms:
        _check_mask(m, eps_surr.shape)
    channel = ms[0].ndim == eps_surr.ndim - 1
    total = None
    msum = None
    for e, m, g in zip(eps_subs, ms, gammas):
        w = g * m
        term = (w[..., None] if channel else w) * np.asarray(e, dtype=np.float64)
        total = term if total is None else total + term
        msum = m if msum is None else msum + m
    if np.any(msum > 1.0):
        raise InvariantViolation("subject masks overlap")
    rest = 1.0 - msum
    return total + (rest[..., None] if channel else rest) * eps_surr


def harmonize(eps_uc, eps_overall, s: float):
    """Guidance against the one shared unconditional prediction.

    Written as ε + (s−1)(ε − ε_uc) so that s = 1 and ε = ε_uc are exact in floating point.
    """
    eps_uc = np.asarray(eps_uc, dtype=np.float64)
    eps_overall = np.asarray(eps_overall, dtype=np.float64)
    if eps_uc.shape != eps_overall.shape:
        raise ShapeError(f"noise shapes differ: {eps_uc.shape} vs {eps_overall.shape}")
    return eps_overall + (s - 1.0) * (eps_overall - eps_uc)


def latent_mask(mask: np.ndarray, latent_hw: tuple[int, int]) -> np.ndarray:
    """Area-average an image-space mask to latent resolution, then threshold at 0.5."""
    return (area_downsample(mask, latent_hw) >= 0.5).astype(np.float64)


def _assert_finite(x: np.ndarray, step_index: int, what: str = "latent"):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite {what} at step {step_index}", step_index)


def ddim_loop(x, timesteps, eps_fn: Callable, schedule: DiffusionSchedule, callback=None) -> np.ndarray:
    """Run DDIM over ``timesteps`` (descending); ``eps_fn(x, t)`` returns the guided noise."""
    ts = [int(t) for t in timesteps]
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else -1
        eps = eps_fn(x, t)
        _assert_finite(eps, i, "noise prediction")
        x = ddim_step(x, eps, t, t_prev, schedule)
        _assert_finite(x, i)
        if callback is not None:
            callback(StepInfo(i, t, x))
    return x


@dataclass
class FusionParams:
    gamma: float | list[float] = 0.8
    alpha: float = DEFAULT_ALPHA
    guidance_scale: float = 7.5
    seed: int = 0
    control_scale_sub: float = 1.0
    control_scale_surr: float = 1.0
    shared_noise: bool = True
    attention: bool = True
    sketch_sigma: float = DEFAULT_SIGMA
    attention_layers: list[str] | None = None

    def gammas(self, n: int) -> list[float]:
        g = list(self.gamma) if isinstance(self.gamma, (list, tuple)) else [float(self.gamma)] * n
        if len(g) != n:
            raise InvalidInput(f"{len(g)} gamma values for {n} subject concepts")
        return g

    def validate(self, n: int = 1):
        for g in self.gammas(n):
            if not 0.0 < g <= 1.0:
                raise InvalidInput(f"gamma {g} outside (0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInput(f"alpha {self.alpha} outside [0, 1]")
        if self.guidance_scale < 0:
            raise InvalidInput("guidance scale must be >= 0")
        if self.control_scale_sub < 0 or self.control_scale_surr < 0:
            raise InvalidInput("control scales must be >= 0")
        if self.sketch_sigma < 0:
            raise InvalidInput("sketch sigma must be >= 0")
        if self.seed < 0:
            raise InvalidInput("seed must be unsigned")


@dataclass
class StepInfo:
    step_index: int
    t: int
    latent: np.ndarray
    sketch: np.ndarray | None = None
    fused_control: np.ndarray | None = None


@dataclass
class SubjectBranch:
    prompt: str
    control: ControlSignal
    mask: np.ndarray
    gamma: float
    denoiser: object


@dataclass
class DualBranchResult:
    image: np.ndarray
    latent: np.ndarray
    attention_used: bool
    final_sketch: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def initial_noise(shape, seed: int, stream: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed if stream == 0 else [seed, stream])
    return rng.standard_normal(shape)


def sample_composite(
    subjects: Sequence[SubjectBranch],
    surrounding_prompt: str,
    surrounding_control: ControlSignal,
    surrounding_denoiser,
    schedule: DiffusionSchedule,
    params: FusionParams,
    image_hw: tuple[int, int],
    callback=None,
) -> DualBranchResult:
    """The per-step composition loop over prepared branches."""
    from glyphforge.backends.base import KeyMix, install_hooks

    if not subjects:
        raise InvalidInput("need at least one subject branch")
    latent_shape = tuple(surrounding_denoiser.latent_shape(image_hw))
    lat_hw = latent_shape[:2]
    masks = np.stack([latent_mask(b.mask, lat_hw) for b in subjects])
    if np.any(masks.sum(axis=0) > 1.0):
        raise InvariantViolation("subject masks overlap at latent resolution")
    gammas = np.array([b.gamma for b in subjects], dtype=np.float64)

    use_attention = params.attention and all(
        getattr(d, "supports_hooks", False) for d in [surrounding_denoiser, *(b.denoiser for b in subjects)]
    )
    if params.attention and not use_attention:
        log.info("attention hooks unsupported by backend; running noise-only composition")
    layers = set(params.attention_layers) if params.attention_layers else None

    x = initial_noise(latent_shape, params.seed)
    if not params.shared_noise:
        union = masks.sum(axis=0)[..., None]
        x = union * x + (1.0 - union) * initial_noise(latent_shape, params.seed, stream=1)

    assignment = None
    sources: list[dict] = [dict() for _ in subjects]
    pristine = surrounding_control
    control_now = pristine
    sketch_map = None
    ts = [int(t) for t in schedule.timestep_indices]
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else -1
        eps_subs = []
        for b, src in zip(subjects, sources):
            if use_attention:
                with install_hooks(b.denoiser, capture=True, layers=layers) as h:
                    eps_subs.append(b.denoiser.predict_noise(x, t, b.prompt, b.control))
                src.clear()
                src.update(h.latest)
            else:
                eps_subs.append(b.denoiser.predict_noise(x, t, b.prompt, b.control))
        if use_attention:
            if assignment is None and len(subjects) > 1:
                any_cap = next(iter(sources[0].values()))
                assignment = nearest_concept_assignment([b.mask for b in subjects], any_cap.grid_hw)
            mix = KeyMix(params.alpha, sources, assignment)
            with install_hooks(surrounding_denoiser, substitution=mix, capture=True, layers=layers) as h:
                eps_surr = surrounding_denoiser.predict_noise(x, t, surrounding_prompt, control_now)
            captures = list(h.latest.values())
        else:
            eps_surr = surrounding_denoiser.predict_noise(x, t, surrounding_prompt, control_now)
        eps_uc = surrounding_denoiser.predict_noise(x, t, UNCONDITIONAL, None)

        for e in (*eps_subs, eps_surr, eps_uc):
            _assert_finite(e, i, "noise prediction")
        sa, sb = schedule.coefficients(t)
        sap, sbp = schedule.coefficients(t_prev)
        x, _ = kernels.fused_step(
            x, np.stack(eps_subs), masks, gammas, eps_surr, eps_uc,
            float(params.guidance_scale), sa, sb, sap, sbp, t_prev < 0,
        )
        _assert_finite(x, i)

        if use_attention and captures:
            raw = aggregate_attention(captures, lat_hw)
            sketch = neural_sketch(raw, params.sketch_sigma, pristine.image.shape, source_steps=(t,))
            control_now = fuse_control(sketch, pristine)
            sketch_map = sketch.map
        if callback is not None:
            callback(StepInfo(i, t, x, sketch_map, control_now.image if use_attention else None))

    image = np.clip(surrounding_denoiser.decode(x), 0.0, 1.0)
    info = {
        "schedule": schedule.as_dict(),
        "timesteps": ts,
        "latent_shape": list(latent_shape),
        "attention_used": use_attention,
        "shared_noise": params.shared_noise,
    }
    return DualBranchResult(image, x, use_attention, sketch_map, info)


def run_dual_branch(
    glyph,
    subject_prompts: Sequence[str] | str,
    surrounding_prompt: str,
    splits,
    deformed: Sequence[np.ndarray] | np.ndarray,
    params: FusionParams,
    denoisers,
    schedule: DiffusionSchedule | None = None,
    callback=None,
) -> DualBranchResult:
    """Render the subject(s) and the surrounding with separate control-conditioned
    branches fused per step.

    ``denoisers`` is either one backend used for every branch, or a
    ``(subject, surrounding)`` pair; the subject entry may itself be a list
    with one backend per concept.
    """
    if isinstance(subject_prompts, str):
        subject_prompts = [subject_prompts]
    if not isinstance(splits, (list, tuple)):
        splits = [splits]
    if isinstance(deformed, np.ndarray):
        deformed = [deformed]
    n = len(subject_prompts)
    if not (len(splits) == len(deformed) == n):
        raise InvalidInput("need one region split and one deformed subject per concept")
    params.validate(n)
    if isinstance(denoisers, (tuple, list)):
        sub_den, surr_den = denoisers
    else:
        sub_den = surr_den = denoisers
    sub_dens = list(sub_den) if isinstance(sub_den, (tuple, list)) else [sub_den] * n
    schedule = schedule or surr_den.schedule

    pixels = glyph.pixels if hasattr(glyph, "pixels") else np.asarray(glyph, dtype=np.float64)
    union = np.zeros_like(pixels)
    for sp in splits:
        union = union + sp.mask
    if np.any(union > 1.0):
        raise InvariantViolation("subject masks overlap")
    surround_img = pixels * (1.0 - union)

    branches = [
        SubjectBranch(
            prompt=p,
            control=to_segmentation(np.clip(d, 0.0, 1.0), params.control_scale_sub),
            mask=sp.mask,
            gamma=g,
            denoiser=den,
        )
        for p, sp, d, g, den in zip(subject_prompts, splits, deformed, params.gammas(n), sub_dens)
    ]
    surr_control = to_scribble(surround_img, params.control_scale_surr)
    return sample_composite(branches, surrounding_prompt, surr_control, surr_den, schedule, params, pixels.shape, callback)


def run_single_branch(
    prompt: str,
    control: ControlSignal | None,
    denoiser,
    image_hw: tuple[int, int],
    guidance_scale: float = 7.5,
    seed: int = 0,
    schedule: DiffusionSchedule | None = None,
    callback=None,
) -> np.ndarray:
    """Plain guided DDIM with one conditional branch; the composition baseline."""
    schedule = schedule or denoiser.schedule
    x = initial_noise(tuple(denoiser.latent_shape(image_hw)), seed)

    def eps_fn(x_t, t):
        cond = denoiser.predict_noise(x_t, t, prompt, control)
        uc = denoiser.predict_noise(x_t, t, UNCONDITIONAL, None)
        return harmonize(uc, cond, guidance_scale)

    x = ddim_loop(x, schedule.timestep_indices, eps_fn, schedule, callback)
    return np.clip(denoiser.decode(x), 0.0, 1.0)

