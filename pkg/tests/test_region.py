import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glyphforge.backends import ComponentDetector, FixtureDetector
from glyphforge.glyph import GlyphImage, rasterize
from glyphforge.region import (
    DetectionBox,
    Thresholds,
    box_mask,
    clamp_box_area,
    detect,
    filter_and_rank,
    select_region,
    select_regions_multi,
    split_regions,
)


def box_with_area(conf, area, x0=0.0, y0=0.0, height=1.0):
    return DetectionBox(x0, y0, x0 + area / height, y0 + height, conf)


def two_blobs(n=64):
    px = np.zeros((n, n))
    px[8:56, 4:28] = 1
    px[8:56, 36:60] = 1
    return GlyphImage(px, "II", size_px=n)


def test_filter_example():
    a, b, c = box_with_area(0.9, 0.3), box_with_area(0.7, 0.5), box_with_area(0.55, 0.45)
    assert filter_and_rank([a, b, c]) == [b, c]


def test_filter_all_low_confidence():
    assert filter_and_rank([box_with_area(0.49, 0.5), box_with_area(0.1, 0.45)]) == []


def test_tie_break_prefers_larger_area():
    small, large = box_with_area(0.8, 0.41), box_with_area(0.8, 0.59)
    assert filter_and_rank([small, large]) == [large, small]


def test_tie_break_reading_order():
    lower = DetectionBox(0.0, 0.5, 0.5, 1.0, 0.8)
    upper = DetectionBox(0.5, 0.0, 1.0, 0.5, 0.8)
    ranked = filter_and_rank([lower, upper], area_lo=0.2, area_hi=0.3)
    assert ranked == [upper, lower]


def test_thresholds_validated():
    with pytest.raises(ValueError):
        filter_and_rank([], area_lo=0.6, area_hi=0.4)


def test_widened_thresholds_give_raw_confidence_order(rng):
    boxes = [box_with_area(float(c), 0.5) for c in rng.uniform(0, 1, 12)]
    ranked = filter_and_rank(boxes, 0.0, 1.0, 0.0)
    assert [b.confidence for b in ranked] == sorted((b.confidence for b in boxes), reverse=True)


boxes_st = st.lists(
    st.builds(
        lambda x0, y0, w, h, c: DetectionBox(x0, y0, min(1.0, x0 + w), min(1.0, y0 + h), c),
        st.floats(0, 0.9), st.floats(0, 0.9), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0, 1),
    ),
    max_size=20,
)


@settings(max_examples=200, deadline=None)
@given(boxes_st)
def test_filter_soundness_and_rank1_dominance(boxes):
    ranked = filter_and_rank(boxes)
    for b in ranked:
        assert 0.4 <= b.area <= 0.6 and b.confidence >= 0.5
    assert [b.confidence for b in ranked] == sorted((b.confidence for b in ranked), reverse=True)
    passing = [b for b in boxes if 0.4 <= b.area <= 0.6 and b.confidence >= 0.5]
    assert len(ranked) == len(passing)
    if ranked:
        assert all(ranked[0].confidence >= b.confidence for b in passing)


def test_split_full_canvas():
    g = rasterize("A", size_px=64)
    sp = split_regions(g, DetectionBox(0, 0, 1, 1, 1.0))
    assert sp.mask.all() and not sp.surrounding_image.any()


def test_split_left_half_uniform_ink():
    g = GlyphImage(np.ones((64, 64)), "x", size_px=64)
    sp = split_regions(g, DetectionBox(0, 0, 0.5, 1, 1.0))
    assert sp.subject_image.sum() == 64 * 32
    assert sp.subject_image[:, :32].all() and not sp.subject_image[:, 32:].any()


def test_split_blank():
    g = GlyphImage(np.zeros((64, 64)), "x", size_px=64)
    box = DetectionBox(0.25, 0.25, 0.75, 0.75, 1.0)
    sp = split_regions(g, box)
    assert not sp.subject_image.any() and not sp.surrounding_image.any()
    assert np.array_equal(sp.mask, box_mask(box, (64, 64)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 0.8), st.floats(0, 0.8), st.floats(0.05, 0.2), st.floats(0.05, 0.2))
def test_partition_invariant(x0, y0, w, h):
    g = rasterize("R", size_px=64)
    sp = split_regions(g, DetectionBox(x0, y0, x0 + w, y0 + h, 0.9))
    assert np.array_equal(sp.subject_image + sp.surrounding_image, g.pixels)
    assert not (sp.subject_image * sp.surrounding_image).any()
    assert np.array_equal(sp.subject_image, g.pixels * sp.mask)


def test_fixture_passthrough():
    boxes = [{"box": [0.1, 0.2, 0.7, 0.9], "score": 0.8, "phrase": "snowman"}]
    det = FixtureDetector({"snow|snowman": boxes})
    g = rasterize("snow", size_px=64)
    assert detect(g, "snowman", det) == [DetectionBox(0.1, 0.2, 0.7, 0.9, 0.8, "snowman")]


def test_component_detector_blank_and_two_blobs():
    assert ComponentDetector().detect(GlyphImage(np.zeros((64, 64)), "x", size_px=64), "p") == []
    boxes = ComponentDetector().detect(two_blobs(), "p")
    assert len(boxes) == 2
    # solid rectangles: ink density inside each box is exactly 1
    assert [b.confidence for b in boxes] == [1.0, 1.0]
    assert boxes[0].coords == (4 / 64, 8 / 64, 28 / 64, 56 / 64)


def test_component_confidence_is_density():
    px = np.zeros((32, 32))
    px[4:12, 4:12] = 1
    px[4:12, 4] = 1
    px[6:10, 6:10] = 0  # 64 - 16 = 48 ink in an 8x8 box
    (b,) = ComponentDetector().detect(GlyphImage(px, "o", size_px=32), "p")
    assert b.confidence == pytest.approx(48 / 64)


def test_select_region_passing_box():
    g = rasterize("A", size_px=64)
    det = FixtureDetector({"A|apex": [{"box": [0, 0, 1, 0.5], "score": 0.9}]})
    sp = select_region(g, "apex", det)
    assert sp.fallback is None and sp.box.coords == (0, 0, 1, 0.5)


def test_select_region_clamp_fallback():
    g = rasterize("A", size_px=64)
    det = FixtureDetector({"A|apex": [{"box": [0.1, 0.1, 0.6, 0.7], "score": 0.45},
                                     {"box": [0.0, 0.0, 0.2, 0.2], "score": 0.3}]})
    sp = select_region(g, "apex", det)
    assert sp.fallback == "clamped"
    # area 0.3 scaled about (0.35, 0.4) up to the lower bound 0.4
    k = math.sqrt(0.4 / 0.3)
    w, h = 0.5 * k, 0.6 * k
    expected = (0.35 - w / 2, 0.4 - h / 2, 0.35 + w / 2, 0.4 + h / 2)
    np.testing.assert_allclose(sp.box.coords, expected, atol=1e-12)
    assert sp.box.area == pytest.approx(0.4)


def test_clamp_stays_on_canvas():
    b = clamp_box_area(DetectionBox(0.9, 0.9, 1.0, 1.0, 0.2), 0.4, 0.6)
    assert b.area == pytest.approx(0.4)
    assert b.x1 <= 1.0 and b.y1 <= 1.0 and b.x0 >= 0 and b.y0 >= 0


def test_select_region_default_fallback():
    g = GlyphImage(np.zeros((64, 64)), "x", size_px=64)
    sp = select_region(g, "anything", ComponentDetector())
    assert sp.fallback == "default"
    assert sp.box.area == pytest.approx(0.5)
    assert (sp.box.x0 + sp.box.x1) / 2 == pytest.approx(0.5)
    assert (sp.box.y0 + sp.box.y1) / 2 == pytest.approx(0.5)


def test_multi_n1_equals_single():
    g = rasterize("A", size_px=64)
    det = FixtureDetector({"A|apex": [{"box": [0, 0, 1, 0.5], "score": 0.9}]}, ComponentDetector())
    single = select_region(g, "apex", det)
    multi = select_regions_multi(g, ["apex"], det)
    assert np.array_equal(single.mask, multi.splits[0].mask)
    assert np.array_equal(single.subject_image, multi.splits[0].subject_image)
    assert single.box == multi.splits[0].box


def test_multi_two_components():
    g = two_blobs()
    det = FixtureDetector({"II|left": [{"box": [0, 0, 0.5, 1], "score": 0.9}],
                           "II|right": [{"box": [0.5, 0, 1, 1], "score": 0.8}]})
    multi = select_regions_multi(g, ["left", "right"], det)
    m0, m1 = multi.masks
    assert not (m0 * m1).any()
    assert m0[:, :32].all() and m1[:, 32:].all()
    assert multi.splits[0].subject_image[:, 4:28].any() and multi.splits[1].subject_image[:, 36:60].any()


def test_multi_same_box_second_takes_complement():
    g = two_blobs()
    same = [{"box": [0, 0, 0.5, 1], "score": 0.9}]
    det = FixtureDetector({"II|a": same, "II|b": same})
    multi = select_regions_multi(g, ["a", "b"], det)
    m0, m1 = multi.masks
    assert multi.splits[1].fallback == "default"
    assert not (m0 * m1).any()
    assert m1[:, 32:].all() and not m1[:, :32].any()


def test_multi_erases_claimed_pixels_before_detection():
    g = two_blobs()
    multi = select_regions_multi(g, ["p", "q"], ComponentDetector(), Thresholds(0.5, 0.1, 0.6))
    # the component detector sees only the remaining blob on the second pass
    assert multi.splits[0].box.x0 == 4 / 64
    assert multi.splits[1].box.x0 == 36 / 64


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0.3, 0.5), st.floats(0.3, 0.5),
                          st.floats(0, 1)), min_size=1, max_size=4), st.integers(1, 4))
def test_multi_masks_disjoint(raw, n):
    g = two_blobs()
    table = {f"II|c{i}": [{"box": [x, y, x + w, y + h], "score": c} for x, y, w, h, c in raw[i:] + raw[:i]]
             for i in range(n)}
    multi = select_regions_multi(g, [f"c{i}" for i in range(n)], FixtureDetector(table))
    total = sum(multi.masks)
    assert total.max() <= 1.0
    for sp in multi.splits:
        assert np.array_equal(sp.subject_image + sp.surrounding_image, g.pixels)


def test_region_deterministic():
    g = rasterize("snow", size_px=128)
    a = select_region(g, "snowman", ComponentDetector())
    b = select_region(g, "snowman", ComponentDetector())
    assert a.box == b.box and np.array_equal(a.mask, b.mask)
