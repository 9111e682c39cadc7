"""Synthetic tire-like radiographs: vertical cord texture with bright blisters and
dark wire defects, written as an annotated corpus."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .imagecore import (
    AnnotatedImage,
    Annotation,
    BoundingBox,
    load_annotated,
    save_image,
    to_uint8,
    write_annotations,
)

BLISTER_MEDIAN = (48, 39)  # width, height
WIRE_MEDIAN_LENGTH = 64


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    width: int = 2048
    height: int = 1024
    cord_period: float = 12.0
    cord_contrast: float = 40.0
    noise_std: float = 6.0
    n_blisters: int = 2
    n_wires: int = 1
    defect_contrast: float = 60.0
    seed: int = 0
    base_level: float = 110.0
    drift_fraction: float = 0.4  # drift amplitude relative to cord_contrast
    max_blisters: int | None = None  # when set, the count is drawn from [n_blisters, max_blisters]
    max_wires: int | None = None
    size_sigma: float = 0.35
    tall_probability: float = 0.1
    placement_margin: int = 8
    max_tries: int = 500

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.cord_period <= 0:
            raise ValueError("cord_period must be > 0")
        if min(self.cord_contrast, self.noise_std, self.defect_contrast, self.drift_fraction) < 0:
            raise ValueError("contrasts and noise must be >= 0")
        if self.n_blisters < 0 or self.n_wires < 0:
            raise ValueError("defect counts must be >= 0")
        for lo, hi in ((self.n_blisters, self.max_blisters), (self.n_wires, self.max_wires)):
            if hi is not None and hi < lo:
                raise ValueError("count maximum below its minimum")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        return cls(**d)


def _rng(cfg: SynthConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


def generate_texture(cfg: SynthConfig) -> np.ndarray:
    """Vertical cords (luminance periodic along x), a slow horizontal drift and Gaussian noise."""
    rng = _rng(cfg, 0)
    x = np.arange(cfg.width, dtype=np.float64)
    phase, drift_phase = rng.uniform(0, 2 * np.pi, 2)
    drift_period = rng.uniform(0.6, 1.4) * cfg.width
    profile = (
        cfg.base_level
        + 0.5 * cfg.cord_contrast * np.sin(2 * np.pi * x / cfg.cord_period + phase)
        + cfg.drift_fraction * cfg.cord_contrast * np.sin(2 * np.pi * x / drift_period + drift_phase)
    )
    img = np.broadcast_to(profile, (cfg.height, cfg.width)).copy()
    if cfg.noise_std > 0:
        img += rng.normal(0.0, cfg.noise_std, img.shape)
    return np.clip(img, 0.0, 255.0)


def _size_limit(cfg: SynthConfig) -> tuple[int, int]:
    return max(16, cfg.width // 4), max(16, cfg.height // 4)


def _blister_size(rng: np.random.Generator, cfg: SynthConfig) -> tuple[int, int]:
    w = BLISTER_MEDIAN[0] * np.exp(rng.normal(0, cfg.size_sigma))
    h = BLISTER_MEDIAN[1] * np.exp(rng.normal(0, cfg.size_sigma))
    if rng.random() < cfg.tall_probability:
        h *= rng.uniform(3.0, 6.0)
        w *= 0.6
    wmax, hmax = _size_limit(cfg)
    return int(np.clip(round(w), 16, wmax)), int(np.clip(round(h), 16, hmax))


def _place(rng, cfg: SynthConfig, w: int, h: int, taken: list[BoundingBox]) -> BoundingBox:
    m = cfg.placement_margin
    if w + 2 * m > cfg.width or h + 2 * m > cfg.height:
        raise GenerationError(f"a {w}x{h} defect does not fit a {cfg.width}x{cfg.height} image")
    for _ in range(cfg.max_tries):
        x = int(rng.integers(m, cfg.width - w - m + 1))
        box = BoundingBox(x, int(rng.integers(m, cfg.height - h - m + 1)), w, h)
        grown = BoundingBox(box.x - m, box.y - m, w + 2 * m, h + 2 * m)
        if all(grown.intersection_area(t) == 0 for t in taken):
            return box
    raise GenerationError(f"could not place a {w}x{h} defect after {cfg.max_tries} tries")


def _blister_profile(w: int, h: int, edge: float = 0.3, power: int = 4) -> np.ndarray:
    """Flat-topped elliptical bump filling a ``h x w`` box, 1 at the center and 0 at the rim."""
    y = (np.arange(h) + 0.5 - h / 2) / (h / 2)
    x = (np.arange(w) + 0.5 - w / 2) / (w / 2)
    r2 = y[:, None] ** 2 + x[None, :] ** 2
    f = (np.exp(np.log(edge) * r2 ** power) - edge) / (1 - edge)
    return np.where(r2 <= 1, f, 0.0)


def _segment_coverage(h: int, w: int, p0, p1, half_width: float) -> np.ndarray:
    """Anti-aliased coverage of a thick segment from ``p0`` to ``p1`` (x, y) over a ``h x w`` patch."""
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    d = np.subtract(p1, p0)
    t = np.clip(((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / max(d @ d, 1e-12), 0, 1)
    dist = np.hypot(xx - (p0[0] + t * d[0]), yy - (p0[1] + t * d[1]))
    return np.clip(half_width + 0.5 - dist, 0.0, 1.0)


def _warp_rows(img: np.ndarray, box: BoundingBox, shift: np.ndarray) -> None:
    """Resample ``img`` inside ``box`` along x by a per-pixel ``shift`` (linear interpolation)."""
    ys = np.arange(box.y, box.y2)
    xs = np.arange(box.x, box.x2) + shift
    x0 = np.clip(np.floor(xs).astype(int), 0, img.shape[1] - 1)
    x1 = np.clip(x0 + 1, 0, img.shape[1] - 1)
    a = xs - np.floor(xs)
    rows = ys[:, None]
    img[box.y:box.y2, box.x:box.x2] = (1 - a) * img[rows, x0] + a * img[rows, x1]


def _wire(rng, cfg: SynthConfig):
    length = WIRE_MEDIAN_LENGTH * np.exp(rng.normal(0, cfg.size_sigma))
    angle = rng.uniform(0, np.pi)
    half = rng.uniform(1.0, 2.0)
    dx, dy = length * np.cos(angle), length * np.sin(angle)
    pad = int(np.ceil(half)) + 2
    wmax, hmax = _size_limit(cfg)
    w = int(np.clip(np.ceil(abs(dx)) + 2 * pad, 16, wmax))
    h = int(np.clip(np.ceil(abs(dy)) + 2 * pad, 16, hmax))
    # endpoints relative to the box, centered
    cx, cy = w / 2, h / 2
    ex, ey = min(abs(dx), w - 2 * pad) / 2 * np.sign(dx or 1), min(abs(dy), h - 2 * pad) / 2
    return w, h, (cx - ex, cy - ey), (cx + ex, cy + ey), half


def _count(rng, lo: int, hi: int | None) -> int:
    return lo if hi is None or hi == lo else int(rng.integers(lo, hi + 1))


def inject_defects(img: np.ndarray, cfg: SynthConfig, source_id: str = "") -> AnnotatedImage:
    """Add non-overlapping blisters and wires to ``img`` and record their exact boxes."""
    rng = _rng(cfg, 1)
    out = np.array(img, dtype=np.float64, copy=True)
    if out.shape != (cfg.height, cfg.width):
        raise ValueError(f"image is {out.shape[1]}x{out.shape[0]}, config says {cfg.width}x{cfg.height}")
    n_b = _count(rng, cfg.n_blisters, cfg.max_blisters)
    n_w = _count(rng, cfg.n_wires, cfg.max_wires)
    taken: list[BoundingBox] = []
    anns: list[Annotation] = []
    for _ in range(n_b):
        w, h = _blister_size(rng, cfg)
        box = _place(rng, cfg, w, h, taken)
        out[box.y:box.y2, box.x:box.x2] += cfg.defect_contrast * _blister_profile(w, h)
        taken.append(box)
        anns.append(Annotation(box, "blister"))
    for _ in range(n_w):
        w, h, p0, p1, half = _wire(rng, cfg)
        box = _place(rng, cfg, w, h, taken)
        cover = _segment_coverage(h, w, p0, p1, half)
        # cords bend towards the wire: a smooth x-shift peaking on the segment
        near = _segment_coverage(h, w, p0, p1, half + 4.0)
        shift = rng.choice([-1.0, 1.0]) * 0.25 * cfg.cord_period * near
        _warp_rows(out, box, shift)
        out[box.y:box.y2, box.x:box.x2] -= cfg.defect_contrast * cover
        taken.append(box)
        anns.append(Annotation(box, "wire"))
    return AnnotatedImage(np.clip(out, 0.0, 255.0), anns, source_id)


def generate_image(cfg: SynthConfig, source_id: str = "") -> AnnotatedImage:
    return inject_defects(generate_texture(cfg), cfg, source_id)


def image_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _write_one(cfg: SynthConfig, seed: int, index: int, out: Path) -> dict:
    name = f"{index:04d}"
    s = image_seed(seed, index)
    ann = generate_image(replace(cfg, seed=s), name)
    ann = AnnotatedImage(to_uint8(ann.image).astype(np.float64), ann.annotations, name)
    save_image(ann.image, out / "images" / f"{name}.png")
    write_annotations(ann, out / "annotations" / f"{name}.json")
    counts = {"blister": 0, "wire": 0}
    for a in ann.annotations:
        counts[a.label] += 1
    return {"image": f"images/{name}.png", "annotations": f"annotations/{name}.json", "seed": s, "counts": counts}


def generate_corpus(n_images: int, cfg: SynthConfig, seed: int, out_dir, jobs: int = 1) -> dict:
    """Write ``n_images`` annotated images plus ``manifest.json``; returns the manifest.

    Image ``i`` is generated from a seed derived from ``(seed, i)`` so the
    corpus does not depend on ``jobs``.
    """
    if n_images < 0:
        raise ValueError("n_images must be >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and n_images > 1:
        from joblib import Parallel, delayed

        entries = Parallel(n_jobs=jobs)(delayed(_write_one)(cfg, seed, i, out) for i in range(n_images))
    else:
        entries = [_write_one(cfg, seed, i, out) for i in range(n_images)]
    totals = {c: sum(e["counts"][c] for e in entries) for c in ("blister", "wire")}
    manifest = {"seed": seed, "n_images": n_images, "config": cfg.to_dict(), "class_counts": totals, "images": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def load_corpus(corpus_dir) -> list[AnnotatedImage]:
    """Images listed in a corpus manifest, or every ``images/*.png`` with a matching annotation file."""
    d = Path(corpus_dir)
    mf = d / "manifest.json"
    if mf.exists():
        entries = json.loads(mf.read_text())["images"]
        return [load_annotated(d / e["image"], d / e["annotations"]) for e in entries]
    return load_image_dirs(d / "images", d / "annotations")


def load_image_dirs(images_dir, annotations_dir) -> list[AnnotatedImage]:
    images_dir, annotations_dir = Path(images_dir), Path(annotations_dir)
    if not images_dir.is_dir():
        raise FileNotFoundError(f"image directory {images_dir} does not exist")
    out = []
    for p in sorted(images_dir.iterdir()):
        if p.suffix.lower() not in (".png", ".pgm"):
            continue
        ann = annotations_dir / f"{p.stem}.json"
        if not ann.exists():
            raise FileNotFoundError(f"no annotation file {ann} for image {p}")
        out.append(load_annotated(p, ann))
    return out
