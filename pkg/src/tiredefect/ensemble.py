"""Probability-map ensemble: window confidences accumulated per pixel, sharpened,
background-subtracted, quantile-thresholded and turned into boxes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imagecore import (
    BACKGROUND,
    DEFAULT_SIGMA,
    AnnotatedImage,
    BoundingBox,
    GridTransform,
    as_gray,
    preprocess,
    save_image,
)
from .texfeat import FeatureConfig, WindowFeaturizer, feature_names, flags_str
from .windowing import WindowSpec, slide


class FlagMismatchError(ValueError):
    """Model was trained on a different feature space than requested."""


@dataclass(frozen=True)
class EnsembleConfig:
    gamma: float = 2.8
    quantile: float = 0.98
    min_region_area: int = 64
    normalize: bool = True  # divide sums by window counts before sharpening
    pooled: bool = False  # one quantile over all defect planes instead of one per class

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not 0 < self.quantile < 1:
            raise ValueError(f"quantile must lie in (0, 1), got {self.quantile}")
        if self.min_region_area < 1:
            raise ValueError("min_region_area must be >= 1")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "quantile": self.quantile, "min_region_area": self.min_region_area,
            "normalize": self.normalize, "pooled": self.pooled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EnsembleConfig:
        return cls(**d)


class ProbabilityMask:
    """Per-class confidence sums plus the number of windows covering each pixel."""

    def __init__(self, width: int, height: int, classes):
        classes = list(classes)
        if BACKGROUND in classes and classes[0] != BACKGROUND:
            raise ValueError("background must be the first class")
        self.width, self.height = int(width), int(height)
        self.classes = classes
        self.accum = np.zeros((len(classes), self.height, self.width))
        self.counts = np.zeros((self.height, self.width), dtype=np.int64)

    def plane(self, label: str) -> np.ndarray:
        return self.accum[self.classes.index(label)]

    @property
    def defect_classes(self) -> list[str]:
        return [c for c in self.classes if c != BACKGROUND]


def accumulate(mask: ProbabilityMask, origin: tuple[int, int], spec: WindowSpec | int, dist) -> ProbabilityMask:
    """Add ``dist`` to every pixel of the window at ``origin`` and bump its coverage count."""
    size = spec.size if isinstance(spec, WindowSpec) else int(spec)
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (len(mask.classes),):
        raise ValueError(f"distribution has {dist.size} entries, mask has {len(mask.classes)} classes")
    if (dist < 0).any() or abs(dist.sum() - 1) > 1e-9:
        raise ValueError("distribution must be non-negative and sum to 1")
    x, y = origin
    if x < 0 or y < 0 or x + size > mask.width or y + size > mask.height:
        raise ValueError(f"window ({x}, {y}, {size}) outside {mask.width}x{mask.height} mask")
    mask.accum[:, y:y + size, x:x + size] += dist[:, None, None]
    mask.counts[y:y + size, x:x + size] += 1
    return mask


def accumulate_all(mask: ProbabilityMask, origins, size: int, proba: np.ndarray) -> ProbabilityMask:
    for (x, y), dist in zip(origins, proba):
        accumulate(mask, (x, y), size, dist)
    return mask


def sharpen(mask: ProbabilityMask, cfg: EnsembleConfig) -> np.ndarray:
    """Per-class planes after averaging (if ``cfg.normalize``) and the power step."""
    if (mask.counts < 1).any():
        raise ValueError("every pixel must be covered by at least one window")
    if cfg.normalize:
        return (mask.accum / mask.counts) ** cfg.gamma
    raw = mask.accum ** cfg.gamma
    top = raw.max()
    return raw / top if top > 0 else raw


def _threshold(values: np.ndarray, q: float) -> float:
    pos = values[values > 0]
    return float(np.quantile(pos, q)) if pos.size else np.inf


def _planes_and_cuts(mask: ProbabilityMask, cfg: EnsembleConfig):
    sharp = sharpen(mask, cfg)
    bg = sharp[mask.classes.index(BACKGROUND)] if BACKGROUND in mask.classes else 0.0
    planes = {c: np.maximum(sharp[mask.classes.index(c)] - bg, 0.0) for c in mask.defect_classes}
    if cfg.pooled and planes:
        t = _threshold(np.concatenate([p.ravel() for p in planes.values()]), cfg.quantile)
        return planes, dict.fromkeys(planes, t)
    return planes, {c: _threshold(p, cfg.quantile) for c, p in planes.items()}


def finalize(mask: ProbabilityMask, cfg: EnsembleConfig | None = None) -> dict[str, np.ndarray]:
    """Defect heatmaps in [0, 1]: sharpened defect minus sharpened background, rectified,
    with everything below the ``cfg.quantile`` quantile of positive values zeroed."""
    planes, cuts = _planes_and_cuts(mask, cfg or EnsembleConfig())
    for c, p in planes.items():
        p[p < cuts[c]] = 0.0
    return planes


def thresholds(mask: ProbabilityMask, cfg: EnsembleConfig | None = None) -> dict[str, float]:
    """The per-class cut-offs :func:`finalize` applies (inf for an all-zero plane)."""
    return _planes_and_cuts(mask, cfg or EnsembleConfig())[1]


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    label: str
    score: float

    def to_dict(self) -> dict:
        b = self.box
        return {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "label": self.label, "score": self.score}


@dataclass
class DetectionSet:
    source_id: str
    detections: list[Detection] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.detections)

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "detections": [d.to_dict() for d in self.detections]}

    @classmethod
    def from_dict(cls, doc: dict) -> DetectionSet:
        dets = [
            Detection(BoundingBox(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"])), d["label"], float(d["score"]))
            for d in doc.get("detections", [])
        ]
        return cls(str(doc["source_id"]), dets)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> DetectionSet:
        return cls.from_dict(json.loads(Path(path).read_text()))


_EIGHT = np.ones((3, 3), dtype=bool)


def extract_detections(heatmaps: dict[str, np.ndarray], cfg: EnsembleConfig | None = None,
                       source_id: str = "") -> DetectionSet:
    """One box per 8-connected nonzero component of at least ``cfg.min_region_area`` pixels.

    Coordinates are those of the heatmaps. Detections are ordered by class,
    then by the raster position of each component's first pixel.
    """
    cfg = cfg or EnsembleConfig()
    out = []
    for label, hm in heatmaps.items():
        comp, n = ndimage.label(hm > 0, structure=_EIGHT)
        if n == 0:
            continue
        ids = np.arange(1, n + 1)
        areas = ndimage.sum_labels(np.ones_like(hm), comp, ids)
        peaks = ndimage.maximum(hm, comp, ids)
        for i, sl in enumerate(ndimage.find_objects(comp)):
            if areas[i] < cfg.min_region_area:
                continue
            ys, xs = sl
            box = BoundingBox(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start)
            out.append(Detection(box, label, float(peaks[i])))
    return DetectionSet(source_id, out)


def model_flags(model) -> str | None:
    return model.meta.get("flags")


def check_model_features(model, flags, fcfg: FeatureConfig) -> None:
    expected = feature_names(flags, fcfg)
    if list(model.feature_names) != expected:
        trained = model_flags(model) or "unknown"
        raise FlagMismatchError(
            f"model was trained on feature flags {trained!r} ({model.n_features} features) "
            f"but detection requested flags {flags_str(flags)!r} ({len(expected)} features)"
        )


def scan_image(prepared: np.ndarray, model, spec: WindowSpec, flags, fcfg: FeatureConfig | None = None):
    """Class probabilities of every sliding window of a preprocessed image.

    Returns ``(origins, proba)`` with ``proba`` of shape ``(n_windows, n_classes)``.
    """
    fcfg = fcfg or FeatureConfig()
    check_model_features(model, flags, fcfg)
    h, w = prepared.shape
    origins = slide(w, h, spec)
    X = WindowFeaturizer(prepared, flags, fcfg).extract(origins, spec.size)
    return origins, model.predict_proba(X), X


@dataclass
class DetectionResult:
    detections: DetectionSet
    heatmaps: dict[str, np.ndarray]
    transform: GridTransform
    origins: list[tuple[int, int]]
    proba: np.ndarray
    features: np.ndarray


def run_detection(img, model, spec: WindowSpec | None = None, flags=None, ecfg: EnsembleConfig | None = None,
                  fcfg: FeatureConfig | None = None, sigma: float | None = None) -> DetectionResult:
    """Full pipeline with the intermediate window scores kept. See :func:`detect_image`."""
    meta = model.meta
    if spec is None:
        spec = WindowSpec(**meta["window"]) if "window" in meta else WindowSpec()
    if flags is None:
        flags = meta.get("flags")
        if flags is None:
            raise ValueError("model carries no feature flags; pass flags explicitly")
    if fcfg is None:
        fcfg = FeatureConfig.from_dict(meta["features"]) if "features" in meta else FeatureConfig()
    if sigma is None:
        sigma = meta.get("sigma", DEFAULT_SIGMA)
    ecfg = ecfg or EnsembleConfig()
    if isinstance(img, AnnotatedImage):
        raw, source_id = img.image, img.source_id
    else:
        raw, source_id = as_gray(img), ""
    h, w = raw.shape
    tf = GridTransform.for_image(w, h, spec.size, spec.step)
    prepared = preprocess(raw, spec.size, spec.step, sigma)
    origins, proba, X = scan_image(prepared, model, spec, flags, fcfg)
    mask = accumulate_all(ProbabilityMask(tf.width, tf.height, model.classes), origins, spec.size, proba)
    heatmaps = finalize(mask, ecfg)
    grid_dets = extract_detections(heatmaps, ecfg, source_id)
    dets = DetectionSet(source_id, [Detection(tf.inverse_box(d.box), d.label, d.score) for d in grid_dets.detections])
    return DetectionResult(dets, heatmaps, tf, origins, proba, X)


def detect_image(img, model, spec: WindowSpec | None = None, flags=None, ecfg: EnsembleConfig | None = None,
                 fcfg: FeatureConfig | None = None, sigma: float | None = None):
    """Preprocess, score every window, fuse the scores and extract boxes.

    ``img`` is an :class:`AnnotatedImage` or a raw gray array. Window spec,
    flags, feature config and blur default to what the model was trained
    with. Returns ``(DetectionSet, heatmaps)``; boxes are in original image
    coordinates, heatmaps at the grid-fitted resolution.
    """
    res = run_detection(img, model, spec, flags, ecfg, fcfg, sigma)
    return res.detections, res.heatmaps


def heatmap_to_uint8(hm: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(hm, 0, 1) * 255).astype(np.uint8)


def write_heatmaps(heatmaps: dict[str, np.ndarray], out_dir, stem: str) -> list[Path]:
    """One 8-bit PNG per defect class, ``<stem>_<class>.png``."""
    paths = []
    for label, hm in heatmaps.items():
        p = Path(out_dir) / f"{stem}_{label}.png"
        save_image(heatmap_to_uint8(hm).astype(np.float64), p)
        paths.append(p)
    return paths
