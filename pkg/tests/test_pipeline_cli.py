import json

import numpy as np
import pytest

from glyphforge.cli import build_parser, config_from_args, main
from glyphforge.imaging import load_png, save_png
from glyphforge.pipeline import RunConfig, cmd_generate, cmd_regions

FAST = ["--size", "128", "--steps", "10", "--semtypo-steps", "10"]


def run(argv, capsys=None):
    code = main(argv)
    out = capsys.readouterr() if capsys else None
    return code, out


def test_generate_is_byte_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["generate", "--char", "rose", "--seed", "7", "--out", str(tmp_path / name), *FAST]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"final.png", "manifest.json", "mask_0.png", "deformed_subject_0.png"} <= set(files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_manifest_contents(tmp_path):
    assert main(["generate", "--char", "rose", "--seed", "3", "--out", str(tmp_path), *FAST]) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["prompts"]["source"] == "fixture"
    assert m["prompts"]["subject"] == ["a blooming red rose flower"]
    assert m["params"]["seed"] == 3 and m["params"]["gamma"] == [0.8]
    assert m["thresholds"] == {"conf_min": 0.5, "area_lo": 0.4, "area_hi": 0.6}
    assert m["sampler"]["schedule"]["beta_start"] == 0.00085
    assert len(m["sampler"]["timesteps"]) == 10
    assert "out" not in m["config"]


def test_manual_prompts_override(tmp_path):
    argv = ["generate", "--char", "A", "--subject-prompt", "a tent", "--surrounding-prompt", "a meadow",
            "--out", str(tmp_path), *FAST]
    assert main(argv) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["prompts"] == {"subject": ["a tent"], "surrounding": "a meadow", "source": "manual"}


def test_concepts_give_disjoint_masks(tmp_path):
    argv = ["generate", "--char", "rose", "--concepts", "a rose", "a leaf", "--out", str(tmp_path), *FAST]
    assert main(argv) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert len(m["regions"]) == 2
    m0, m1 = load_png(tmp_path / "mask_0.png"), load_png(tmp_path / "mask_1.png")
    assert m0.any() and m1.any() and not (m0 * m1).any()


def test_manifest_replay(tmp_path):
    assert main(["generate", "--char", "rose", "--seed", "5", "--out", str(tmp_path / "a"), *FAST]) == 0
    assert main(["generate", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


def test_stage_chaining_matches_generate(tmp_path, capsys):
    assert main(["generate", "--char", "rose", "--seed", "2", "--out", str(tmp_path / "g"), *FAST]) == 0
    argv = ["semtypo", "--char", "rose", "--seed", "2", "--subject-image", str(tmp_path / "g" / "subject_0.png"),
            "--out", str(tmp_path / "s"), *FAST]
    code, _ = run(argv, capsys)
    assert code == 0
    assert (tmp_path / "s" / "deformed_subject_0.png").read_bytes() == (tmp_path / "g" / "deformed_subject_0.png").read_bytes()


def test_flags_override_config(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"char": "A", "seed": 4, "gamma": 0.6}))
    args = build_parser().parse_args(["generate", "--config", str(cfg_path), "--seed", "9", "--control-scale", "0.5", "0.7"])
    cfg = config_from_args(args)
    assert (cfg.char, cfg.seed, cfg.gamma) == ("A", 9, 0.6)
    assert (cfg.control_scale_sub, cfg.control_scale_surr) == (0.5, 0.7)


def test_regions_table_order(tmp_path, capsys):
    fixtures = tmp_path / "det.json"
    fixtures.write_text(json.dumps({"A|apex": [
        {"box": [0, 0, 0.5, 0.9], "score": 0.6},
        {"box": [0, 0, 1, 0.5], "score": 0.9},
        {"box": [0, 0, 0.2, 0.2], "score": 0.95},
    ]}))
    argv = ["regions", "--char", "A", "--subject-prompt", "apex", "--surrounding-prompt", "sky",
            "--detector-fixtures", str(fixtures), "--size", "64", "--out", str(tmp_path / "r")]
    code, out = run(argv, capsys)
    assert code == 0
    rows = [line.split() for line in out.out.splitlines() if line.strip()[:1].isdigit()]
    assert [r[1] for r in rows] == ["0.900", "0.600"]
    assert "fallback" not in out.out
    assert (tmp_path / "r" / "mask_0.png").exists()


def test_regions_fallback_notice(tmp_path, capsys):
    fixtures = tmp_path / "det.json"
    fixtures.write_text(json.dumps({"A|apex": []}))
    argv = ["regions", "--char", "A", "--subject-prompt", "apex", "--surrounding-prompt", "sky",
            "--detector-fixtures", str(fixtures), "--size", "64", "--out", str(tmp_path)]
    code, out = run(argv, capsys)
    assert code == 0 and "fallback" in out.out


def test_regions_widened_thresholds_raw_order(tmp_path):
    scores = [0.3, 0.9, 0.1, 0.6]
    fixtures = tmp_path / "det.json"
    fixtures.write_text(json.dumps({"A|apex": [{"box": [0, 0, 0.5, 1], "score": s} for s in scores]}))
    lines = []
    cfg = RunConfig(char="A", subject_prompt="apex", surrounding_prompt="sky", size_px=64, conf_min=0.0,
                    area_lo=0.0, area_hi=1.0, detector_fixtures=str(fixtures), out=str(tmp_path))
    cmd_regions(cfg, echo=lines.append)
    printed = [float(l.split()[1]) for l in lines if l.strip()[:1].isdigit()]
    assert printed == sorted(scores, reverse=True)


def test_prompts_command(capsys):
    code, out = run(["prompts", "--char", "rose"], capsys)
    assert code == 0
    data = json.loads(out.out)
    assert data["subject prompt"] == "a blooming red rose flower"
    assert data["source"] == "fixture"


def test_semtypo_from_subject_image_zero_strength(tmp_path, capsys):
    img = np.zeros((64, 64))
    img[10:30, 20:40] = 1
    save_png(img, tmp_path / "sub.png")
    argv = ["semtypo", "--char", "rose", "--subject-image", str(tmp_path / "sub.png"), "--strength", "0",
            "--out", str(tmp_path / "o")]
    code, _ = run(argv, capsys)
    assert code == 0
    assert np.array_equal(load_png(tmp_path / "o" / "deformed_subject_0.png"), img)


def test_dump_intermediates(tmp_path):
    argv = ["generate", "--char", "rose", "--dump-intermediates", "--out", str(tmp_path), *FAST]
    assert main(argv) == 0
    assert len(list((tmp_path / "steps").glob("*.png"))) >= 10


def test_toy_micro_backend_runs(tmp_path):
    argv = ["generate", "--char", "rose", "--backend", "toy-micro", "--out", str(tmp_path), "--size", "128",
            "--steps", "4", "--semtypo-steps", "4"]
    assert main(argv) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["sampler"]["attention_used"] is True
    assert np.isfinite(load_png(tmp_path / "final.png")).all()


@pytest.mark.parametrize("argv,stage", [
    (["generate", "--char", "rose", "--strength", "1.5"], "config"),
    (["generate", "--char", "口"], "raster"),
    (["generate", "--char", "rose", "--font", "NoSuchFont.ttf"], "raster"),
    (["generate", "--char", "zzz"], "prompts"),
    (["generate"], "config"),
])
def test_error_exit_codes(argv, stage, tmp_path, capsys):
    code, out = run([*argv, "--out", str(tmp_path)], capsys)
    assert code == 1
    assert out.err.startswith(f"error [{stage}]")


def test_config_unknown_key(tmp_path):
    with pytest.raises(Exception):
        RunConfig.from_dict({"char": "A", "bogus": 1})
