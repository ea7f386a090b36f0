"""Subject geometry deformation by partial noising and depth-conditioned denoising."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from glyphforge.errors import InvalidInput
from glyphforge.glyph import to_depth
from glyphforge.sampler import UNCONDITIONAL, ddim_loop, harmonize


@dataclass(frozen=True)
class SemTypoParams:
    strength_DS: float = 0.85
    steps: int = 30
    seed: int = 0
    guidance_scale: float = 7.5
    control_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.strength_DS <= 1.0:
            raise InvalidInput(f"strength {self.strength_DS} outside [0, 1]")
        if self.steps < 1:
            raise InvalidInput("steps must be >= 1")
        if self.seed < 0:
            raise InvalidInput("seed must be unsigned")
        if self.control_scale < 0:
            raise InvalidInput("control scale must be >= 0")

    def steps_to_run(self) -> int:
        return math.ceil(round(self.strength_DS * self.steps, 9))


def sem_typo(i_sub: np.ndarray, p_sub: str, params: SemTypoParams, backend, callback=None) -> np.ndarray:
    """Noise ``i_sub`` to the strength-selected timestep and denoise it toward ``p_sub``.

    Strength 0 returns the codec round trip of the input.
    """
    if not isinstance(params, SemTypoParams):
        raise InvalidInput("params must be SemTypoParams")
    img = np.asarray(i_sub, dtype=np.float64)
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise InvalidInput("subject image must lie in [0, 1]")
    schedule = backend.schedule.with_steps(params.steps)
    z0 = backend.encode(img)
    n_run = params.steps_to_run()
    if n_run == 0:
        return np.clip(backend.decode(z0), 0.0, 1.0)

    timesteps = schedule.timestep_indices[params.steps - n_run :]
    sa, sb = schedule.coefficients(int(timesteps[0]))
    noise = np.random.default_rng(params.seed).standard_normal(z0.shape)
    x = sa * z0 + sb * noise
    control = to_depth(img, params.control_scale)

    def eps_fn(x_t, t):
        cond = backend.predict_noise(x_t, t, p_sub, control)
        uc = backend.predict_noise(x_t, t, UNCONDITIONAL, None)
        return harmonize(uc, cond, params.guidance_scale)

    x = ddim_loop(x, timesteps, eps_fn, schedule, callback)
    return np.clip(backend.decode(x), 0.0, 1.0)
