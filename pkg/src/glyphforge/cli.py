"""Command line entry point: ``glyphforge generate|regions|prompts|semtypo``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from glyphforge.errors import GlyphForgeError
from glyphforge.imaging import load_png
from glyphforge.pipeline import BACKENDS, RunConfig, cmd_generate, cmd_prompts, cmd_regions, cmd_semtypo

# flag dest -> RunConfig field
_FLAG_FIELDS = {
    "char": "char",
    "font": "font_id",
    "font_dir": "font_dir",
    "size": "size_px",
    "subject_prompt": "subject_prompt",
    "surrounding_prompt": "surrounding_prompt",
    "concepts": "concepts",
    "gamma": "gamma",
    "alpha": "alpha",
    "guidance_scale": "guidance_scale",
    "strength": "strength",
    "semtypo_steps": "semtypo_steps",
    "depth_scale": "depth_scale",
    "steps": "steps",
    "seed": "seed",
    "backend": "backend",
    "out": "out",
    "conf_min": "conf_min",
    "area_lo": "area_lo",
    "area_hi": "area_hi",
    "sketch_sigma": "sketch_sigma",
    "llm_fixtures": "llm_fixtures",
    "detector_fixtures": "detector_fixtures",
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON RunConfig (or a run manifest to replay)")
    p.add_argument("--char", help="character or word to render")
    p.add_argument("--font", help="font file path or name")
    p.add_argument("--font-dir", help="extra directory searched for fonts")
    p.add_argument("--size", type=int, help="canvas size in pixels")
    p.add_argument("--subject-prompt")
    p.add_argument("--surrounding-prompt")
    p.add_argument("--concepts", nargs="+", help="subject prompts for multi-concept generation")
    p.add_argument("--gamma", type=float, nargs="+", help="subject prominence, one value or one per concept")
    p.add_argument("--alpha", type=float, help="cross-branch key blend weight")
    p.add_argument("--guidance-scale", type=float)
    p.add_argument("--strength", type=float, help="deformation noise strength in [0, 1]")
    p.add_argument("--semtypo-steps", type=int)
    p.add_argument("--depth-scale", type=float, help="depth control scale during deformation")
    p.add_argument("--control-scale", type=float, nargs="+", metavar="CS",
                   help="control scale: one value for both branches or SUBJECT SURROUNDING")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--out", help="output directory")
    p.add_argument("--conf-min", type=float)
    p.add_argument("--area-lo", type=float)
    p.add_argument("--area-hi", type=float)
    p.add_argument("--sketch-sigma", type=float)
    p.add_argument("--llm-fixtures")
    p.add_argument("--detector-fixtures")
    p.add_argument("--dump-intermediates", action="store_true", default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glyphforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("generate", help="run the full pipeline"))
    _add_common(sub.add_parser("regions", help="print ranked subject boxes and write mask previews"))
    _add_common(sub.add_parser("prompts", help="acquire subject/surrounding prompts"))
    st = sub.add_parser("semtypo", help="deform the subject region only")
    _add_common(st)
    st.add_argument("--subject-image", help="PNG of the subject region; skips region selection")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = dataclasses.asdict(RunConfig())
    if args.config:
        data.update(RunConfig.from_file(args.config).to_dict())
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "gamma":
            value = value[0] if len(value) == 1 else list(value)
        data[name] = value
    if args.control_scale is not None:
        cs = args.control_scale
        if len(cs) > 2:
            raise GlyphForgeError("--control-scale takes one or two values")
        data["control_scale_sub"] = cs[0]
        data["control_scale_surr"] = cs[-1]
    if args.dump_intermediates:
        data["dump_intermediates"] = True
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "generate":
            res = cmd_generate(cfg)
            print(f"wrote {res.out_dir / 'final.png'} and {res.out_dir / 'manifest.json'}")
        elif args.command == "regions":
            cmd_regions(cfg)
        elif args.command == "prompts":
            if not cfg.char:
                raise GlyphForgeError("--char is required")
            pair = cmd_prompts(cfg.char, cfg=cfg)
            print(json.dumps({"subject prompt": pair.subject_prompt, "surrounding prompt": pair.surrounding_prompt,
                              "source": pair.source.value}, ensure_ascii=False))
        elif args.command == "semtypo":
            img = load_png(args.subject_image) if args.subject_image else None
            cmd_semtypo(cfg, img)
            print(f"wrote {cfg.out}/deformed_subject_0.png")
    except GlyphForgeError as exc:
        stage = exc.stage or "config"
        print(f"error [{stage}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
