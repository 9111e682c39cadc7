import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiredefect.imagecore import load_annotated
from tiredefect.synthgen import (
    GenerationError,
    SynthConfig,
    generate_corpus,
    generate_image,
    generate_texture,
    inject_defects,
    load_corpus,
)
from tiredefect.windowing import ioma

from .oracles import dft2_naive

SMALL = SynthConfig(width=384, height=256)


def test_config_validation():
    for bad in [dict(width=0), dict(cord_period=0), dict(noise_std=-1), dict(n_wires=-1),
                dict(n_blisters=3, max_blisters=2)]:
        with pytest.raises(ValueError):
            SynthConfig(**bad)
    assert SynthConfig.from_dict(SMALL.to_dict()) == SMALL


def test_flat_texture_without_noise_or_contrast():
    img = generate_texture(replace(SMALL, noise_std=0, cord_contrast=0))
    assert np.ptp(img) == 0


def test_texture_deterministic():
    np.testing.assert_array_equal(generate_texture(SMALL), generate_texture(SMALL))
    assert not np.array_equal(generate_texture(SMALL), generate_texture(replace(SMALL, seed=1)))


@pytest.mark.parametrize("period", [8.0, 12.0, 16.0])
def test_dominant_frequency_is_cord_period(period):
    cfg = SynthConfig(width=192, height=16, cord_period=period, seed=2)
    spec = np.abs(dft2_naive(generate_texture(cfg) - generate_texture(cfg).mean()))
    row = spec[0]  # zero vertical frequency
    peak = int(np.argmax(row[1:96])) + 1
    assert abs(peak - 192 / period) <= 1


def test_no_defects_leaves_image():
    tex = generate_texture(SMALL)
    out = inject_defects(tex, replace(SMALL, n_blisters=0, n_wires=0))
    assert out.annotations == []
    np.testing.assert_array_equal(out.image, tex)


def test_three_blisters_do_not_overlap():
    im = generate_image(replace(SMALL, n_blisters=3, n_wires=0))
    boxes = [a.box for a in im.annotations]
    assert [a.label for a in im.annotations] == ["blister"] * 3
    for i in range(3):
        for j in range(i):
            assert ioma(boxes[i], boxes[j]) == 0


@given(st.integers(0, 2 ** 31), st.integers(0, 4), st.integers(0, 3))
@settings(max_examples=30, deadline=None)
def test_boxes_inside_and_counts_exact(seed, nb, nw):
    cfg = replace(SMALL, seed=seed, n_blisters=nb, n_wires=nw)
    im = generate_image(cfg)
    assert sum(a.label == "blister" for a in im.annotations) == nb
    assert sum(a.label == "wire" for a in im.annotations) == nw
    for a in im.annotations:
        assert a.box.area > 0 and a.box.inside(cfg.width, cfg.height)
    assert im.image.min() >= 0 and im.image.max() <= 255


@pytest.mark.parametrize("seed", range(6))
def test_blister_is_bright_against_background(seed):
    cfg = replace(SMALL, seed=seed, n_blisters=1, n_wires=0, noise_std=2)
    tex = generate_texture(cfg)
    im = inject_defects(tex, cfg)
    b = im.annotations[0].box
    # the sizing profile is flat-topped, so the box mean clears half the contrast
    lift = im.image[b.y:b.y2, b.x:b.x2].mean() - tex[b.y:b.y2, b.x:b.x2].mean()
    assert lift >= 0.5 * cfg.defect_contrast


def test_wire_is_dark():
    cfg = replace(SMALL, seed=3, n_blisters=0, n_wires=1)
    tex = generate_texture(cfg)
    im = inject_defects(tex, cfg)
    b = im.annotations[0].box
    assert im.image[b.y:b.y2, b.x:b.x2].min() < tex[b.y:b.y2, b.x:b.x2].min()


def test_placement_failure_raises():
    with pytest.raises(GenerationError):
        generate_image(SynthConfig(width=40, height=40, n_blisters=6, max_tries=20))
    with pytest.raises(ValueError):
        inject_defects(np.zeros((10, 10)), SMALL)


def test_corpus_layout_and_determinism(tmp_path):
    cfg = replace(SMALL, n_blisters=2, n_wires=1)
    m1 = generate_corpus(4, cfg, 9, tmp_path / "a")
    generate_corpus(4, cfg, 9, tmp_path / "b", jobs=2)
    for rel in ["manifest.json"] + [e["image"] for e in m1["images"]] + [e["annotations"] for e in m1["images"]]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert m1["class_counts"] == {"blister": 8, "wire": 4}
    doc = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert doc["config"]["width"] == 384 and len(doc["images"]) == 4
    imgs = load_corpus(tmp_path / "a")
    assert len(imgs) == 4 and imgs[0].annotations == load_annotated(
        tmp_path / "a" / "images/0000.png", tmp_path / "a" / "annotations/0000.json").annotations


def test_load_corpus_without_manifest(tmp_path):
    generate_corpus(2, SMALL, 1, tmp_path)
    (tmp_path / "manifest.json").unlink()
    assert [im.source_id for im in load_corpus(tmp_path)] == ["0000", "0001"]
    (tmp_path / "annotations" / "0001.json").unlink()
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path)
