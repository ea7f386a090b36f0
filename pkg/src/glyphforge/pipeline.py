"""End-to-end orchestration: prompts -> regions -> deformation -> composition."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from glyphforge import kernels
from glyphforge.backends import (
    AnalyticGaussianBackend,
    ComponentDetector,
    FixtureDetector,
    FixtureLLM,
    HTTPDenoiser,
    HTTPDetector,
    HTTPLLM,
    MicroAttentionBackend,
)
from glyphforge.errors import GlyphForgeError, InvalidInput
from glyphforge.glyph import DEFAULT_FONT, rasterize
from glyphforge.imaging import array_hash, save_png
from glyphforge.knowledge import PromptPair, PromptSource, QueryTemplate, acquire_prompts
from glyphforge.region import MultiRegionSplit, Thresholds, filter_and_rank, select_regions_multi
from glyphforge.sampler import FusionParams, StepInfo, make_schedule, run_dual_branch
from glyphforge.semtypo import SemTypoParams, sem_typo

log = logging.getLogger(__name__)

BACKENDS = ("toy-analytic", "toy-micro", "external")
MANIFEST_VERSION = 1


@dataclass
class RunConfig:
    char: str = ""
    font_id: str = DEFAULT_FONT
    font_dir: str | None = None
    size_px: int = 512
    subject_prompt: str | None = None
    surrounding_prompt: str | None = None
    concepts: list[str] | None = None
    conf_min: float = 0.5
    area_lo: float = 0.4
    area_hi: float = 0.6
    strength: float = 0.85
    semtypo_steps: int = 30
    depth_scale: float = 1.0
    control_scale_sub: float = 1.0
    control_scale_surr: float = 1.0
    gamma: float | list[float] = 0.8
    alpha: float = 0.5
    guidance_scale: float = 7.5
    steps: int = 50
    seed: int = 0
    sketch_sigma: float = 2.0
    toy_sigma0: float = 0.1
    backend: str = "toy-analytic"
    llm_fixtures: str | None = None
    detector_fixtures: str | None = None
    out: str = "out"
    dump_intermediates: bool = False

    def validate(self) -> "RunConfig":
        if not self.char:
            raise InvalidInput("--char is required")
        if self.backend not in BACKENDS:
            raise InvalidInput(f"backend must be one of {BACKENDS}")
        Thresholds(self.conf_min, self.area_lo, self.area_hi)
        SemTypoParams(self.strength, self.semtypo_steps, self.seed, self.guidance_scale, self.depth_scale)
        self.fusion_params().validate(len(self.subject_prompts_hint()))
        if self.steps < 1 or self.steps > 1000:
            raise InvalidInput("steps must be in [1, 1000]")
        if self.size_px < 64:
            raise InvalidInput("size must be >= 64")
        if self.toy_sigma0 < 0:
            raise InvalidInput("toy sigma0 must be >= 0")
        if self.concepts is not None and len(self.concepts) == 0:
            raise InvalidInput("--concepts needs at least one entry")
        if (self.subject_prompt is None) != (self.surrounding_prompt is None) and self.concepts is None:
            raise InvalidInput("--subject-prompt and --surrounding-prompt must be given together")
        return self

    def subject_prompts_hint(self) -> list:
        if self.concepts:
            return list(self.concepts)
        return [None]

    def fusion_params(self) -> FusionParams:
        return FusionParams(
            gamma=list(self.gamma) if isinstance(self.gamma, (list, tuple)) else float(self.gamma),
            alpha=self.alpha,
            guidance_scale=self.guidance_scale,
            seed=self.seed,
            control_scale_sub=self.control_scale_sub,
            control_scale_surr=self.control_scale_surr,
            sketch_sigma=self.sketch_sigma,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class Backends:
    llm: object
    detector: object
    subject: object
    surrounding: object
    semtypo: object

    def ids(self) -> dict:
        names = ("llm", "detector", "subject", "surrounding", "semtypo")
        return {n: getattr(getattr(self, n), "backend_id", type(getattr(self, n)).__name__) for n in names}


def build_backends(cfg: RunConfig) -> Backends:
    schedule = make_schedule(1000, cfg.steps)
    if cfg.backend == "external":
        den = HTTPDenoiser(schedule=schedule)
        surr = HTTPDenoiser(schedule=schedule)
        return Backends(HTTPLLM(), HTTPDetector(), den, surr, den)
    llm = FixtureLLM.from_file(cfg.llm_fixtures) if cfg.llm_fixtures else FixtureLLM()
    fallback = ComponentDetector()
    detector = (
        FixtureDetector.from_file(cfg.detector_fixtures, fallback) if cfg.detector_fixtures else FixtureDetector({}, fallback)
    )
    if cfg.backend == "toy-analytic":
        den = AnalyticGaussianBackend(schedule, sigma0=cfg.toy_sigma0)
        return Backends(llm, detector, den, den, den)
    sub = MicroAttentionBackend(schedule, seed=0, backend_id="toy-micro-subject")
    surr = MicroAttentionBackend(schedule, seed=1, backend_id="toy-micro-surrounding")
    return Backends(llm, detector, sub, surr, sub)


def toy_level(prompt: str) -> float:
    """Deterministic flat target in [0.25, 0.75] for a prompt."""
    return 0.25 + 0.5 * hashlib.sha256(prompt.encode("utf-8")).digest()[0] / 255.0


def register_toy_targets(backends: Backends, prompts):
    for den in {id(d): d for d in (backends.subject, backends.surrounding, backends.semtypo)}.values():
        if isinstance(den, AnalyticGaussianBackend):
            for p in prompts:
                if p not in den.mu_table:
                    den.register(p, toy_level(p))


def _staged(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except GlyphForgeError as exc:
        exc.stage = exc.stage or stage
        raise


def resolve_prompts(cfg: RunConfig, backends: Backends) -> tuple[list[str], str, PromptSource]:
    if cfg.subject_prompt is not None and cfg.surrounding_prompt is not None and not cfg.concepts:
        pair = PromptPair(cfg.subject_prompt, cfg.surrounding_prompt, PromptSource.MANUAL)
        return [pair.subject_prompt], pair.surrounding_prompt, PromptSource.MANUAL
    if cfg.concepts:
        if cfg.surrounding_prompt is not None:
            return list(cfg.concepts), cfg.surrounding_prompt, PromptSource.MANUAL
        pair = acquire_prompts(cfg.char, backends.llm, QueryTemplate())
        return list(cfg.concepts), pair.surrounding_prompt, pair.source
    pair = acquire_prompts(cfg.char, backends.llm, QueryTemplate())
    return [pair.subject_prompt], pair.surrounding_prompt, pair.source


@dataclass
class RunResult:
    image: np.ndarray
    manifest: dict
    out_dir: Path
    regions: MultiRegionSplit = None
    deformed: list = field(default_factory=list)


def cmd_generate(cfg: RunConfig, backends: Backends | None = None) -> RunResult:
    cfg.validate()
    backends = backends or build_backends(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    glyph = _staged("raster", rasterize, cfg.char, cfg.font_id, cfg.size_px, cfg.font_dir)
    subjects, surrounding, source = _staged("prompts", resolve_prompts, cfg, backends)
    register_toy_targets(backends, [*subjects, surrounding])
    th = Thresholds(cfg.conf_min, cfg.area_lo, cfg.area_hi)
    regions = _staged("regions", select_regions_multi, glyph, subjects, backends.detector, th)

    st_params = SemTypoParams(cfg.strength, cfg.semtypo_steps, cfg.seed, cfg.guidance_scale, cfg.depth_scale)
    deformed = [
        _staged("semtypo", sem_typo, sp.subject_image, p, st_params, backends.semtypo)
        for sp, p in zip(regions.splits, subjects)
    ]

    params = cfg.fusion_params()
    callback = _dump_callback(out / "steps") if cfg.dump_intermediates else None
    result = _staged(
        "generate", run_dual_branch, glyph, subjects, surrounding, regions.splits, deformed, params,
        (backends.subject, backends.surrounding), None, callback,
    )

    artifacts = {"glyph": save_png(glyph.pixels, out / "glyph.png")}
    union = np.zeros_like(glyph.pixels)
    for i, (sp, d) in enumerate(zip(regions.splits, deformed)):
        artifacts[f"mask_{i}"] = save_png(sp.mask, out / f"mask_{i}.png")
        artifacts[f"subject_{i}"] = save_png(sp.subject_image, out / f"subject_{i}.png")
        artifacts[f"deformed_subject_{i}"] = save_png(d, out / f"deformed_subject_{i}.png")
        union = union + sp.mask
    artifacts["surrounding"] = save_png(glyph.pixels * (1.0 - union), out / "surrounding.png")
    artifacts["final"] = save_png(result.image, out / "final.png")

    manifest = {
        "version": MANIFEST_VERSION,
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "prompts": {"subject": subjects, "surrounding": surrounding, "source": PromptSource(source).value},
        "thresholds": dataclasses.asdict(th),
        "regions": [
            {"box": sp.box.to_json(), "fallback": sp.fallback, "mask_pixels": int(sp.mask.sum())} for sp in regions.splits
        ],
        "params": {
            "gamma": params.gammas(len(subjects)),
            "alpha": params.alpha,
            "guidance_scale": params.guidance_scale,
            "strength_DS": cfg.strength,
            "semtypo_steps": cfg.semtypo_steps,
            "control_scale": {"depth": cfg.depth_scale, "subject": cfg.control_scale_sub, "surrounding": cfg.control_scale_surr},
            "sketch_sigma": params.sketch_sigma,
            "seed": cfg.seed,
        },
        "sampler": result.info,
        "backends": backends.ids(),
        "kernels": kernels.BACKEND,
        "artifacts": {name: {"file": f"{name}.png", "sha256": digest} for name, digest in artifacts.items()},
        "array_hashes": {
            "glyph": array_hash(glyph.pixels),
            "final_latent": array_hash(result.latent),
            **{f"deformed_subject_{i}": array_hash(d) for i, d in enumerate(deformed)},
        },
    }
    write_manifest(manifest, out / "manifest.json")
    return RunResult(result.image, manifest, out, regions, deformed)


def write_manifest(manifest: dict, path: Path):
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dump_callback(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)

    def cb(info: StepInfo):
        stem = f"step_{info.step_index:03d}"
        lat = info.latent.mean(axis=-1)
        lo, hi = float(lat.min()), float(lat.max())
        save_png((lat - lo) / (hi - lo) if hi > lo else np.zeros_like(lat), directory / f"{stem}_latent.png")
        if info.sketch is not None:
            save_png(info.sketch, directory / f"{stem}_sketch.png")
        if info.fused_control is not None:
            save_png(info.fused_control, directory / f"{stem}_fused.png")

    return cb


def cmd_regions(cfg: RunConfig, backends: Backends | None = None, echo=print) -> MultiRegionSplit:
    """Print ranked detections per subject prompt and write mask previews."""
    cfg.validate()
    backends = backends or build_backends(cfg)
    glyph = _staged("raster", rasterize, cfg.char, cfg.font_id, cfg.size_px, cfg.font_dir)
    subjects, _, _ = _staged("prompts", resolve_prompts, cfg, backends)
    th = Thresholds(cfg.conf_min, cfg.area_lo, cfg.area_hi)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    regions = _staged("regions", select_regions_multi, glyph, subjects, backends.detector, th)
    for i, (prompt, sp) in enumerate(zip(subjects, regions.splits)):
        raw = backends.detector.detect(glyph, prompt, 0.0)
        ranked = filter_and_rank(raw, th.area_lo, th.area_hi, th.conf_min)
        echo(f"concept {i}: {prompt}")
        echo(f"{'rank':>4}  {'conf':>6}  {'area':>6}  box")
        for r, b in enumerate(ranked, 1):
            echo(f"{r:>4}  {b.confidence:6.3f}  {b.area:6.3f}  [{b.x0:.3f}, {b.y0:.3f}, {b.x1:.3f}, {b.y1:.3f}]")
        if sp.fallback:
            echo(f"no box passed the filters; fallback ({sp.fallback}) box "
                 f"[{sp.box.x0:.3f}, {sp.box.y0:.3f}, {sp.box.x1:.3f}, {sp.box.y1:.3f}]")
        save_png(sp.mask, out / f"mask_{i}.png")
    return regions


def cmd_prompts(char: str, backends: Backends | None = None, cfg: RunConfig | None = None) -> PromptPair:
    cfg = cfg or RunConfig(char=char)
    backends = backends or build_backends(cfg)
    return _staged("prompts", acquire_prompts, char, backends.llm, QueryTemplate())


def cmd_semtypo(cfg: RunConfig, subject_image: np.ndarray | None = None, backends: Backends | None = None) -> np.ndarray:
    """Deform one subject; with ``subject_image`` the region stage is skipped."""
    cfg.validate()
    backends = backends or build_backends(cfg)
    subjects, surrounding, _ = _staged("prompts", resolve_prompts, cfg, backends)
    register_toy_targets(backends, [*subjects, surrounding])
    if subject_image is None:
        glyph = _staged("raster", rasterize, cfg.char, cfg.font_id, cfg.size_px, cfg.font_dir)
        th = Thresholds(cfg.conf_min, cfg.area_lo, cfg.area_hi)
        subject_image = _staged("regions", select_regions_multi, glyph, subjects[:1], backends.detector, th).splits[0].subject_image
    params = SemTypoParams(cfg.strength, cfg.semtypo_steps, cfg.seed, cfg.guidance_scale, cfg.depth_scale)
    deformed = _staged("semtypo", sem_typo, subject_image, subjects[0], params, backends.semtypo)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_png(deformed, out / "deformed_subject_0.png")
    return deformed

