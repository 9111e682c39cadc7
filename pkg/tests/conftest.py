from dataclasses import replace

import pytest

from tiredefect.forest import TrainConfig, train_forest
from tiredefect.synthgen import SynthConfig, generate_image, image_seed
from tiredefect.windowing import DatasetConfig, WindowSpec, build_dataset, detector_meta

# Small scenes with 0-2 blisters and 0-2 wires, so the model also sees defect-free images.
SMALL_SCENE = SynthConfig(width=640, height=384, n_blisters=0, max_blisters=2, n_wires=0, max_wires=2,
                          defect_contrast=80)
SMALL_DATASET = DatasetConfig(window=WindowSpec(64, 16), background_keep_fraction=0.3, flags="GFW")


def small_scene(seed: int, index: int, **overrides):
    return generate_image(replace(SMALL_SCENE, seed=image_seed(seed, index), **overrides), f"{index:04d}")


@pytest.fixture(scope="session")
def small_detector():
    """Forest trained on 16 small synthetic scenes at window 64 / step 16."""
    images = [small_scene(11, i) for i in range(16)]
    ds = build_dataset(images, SMALL_DATASET)
    return train_forest(ds, TrainConfig(n_trees=20, seed=0), meta=detector_meta(SMALL_DATASET))


# (criterion number, PASS/FAIL, detail) recorded by test_acceptance.py
ACCEPTANCE: list[tuple[int, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, status, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {detail}")
