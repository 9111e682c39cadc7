"""Sliding windows, IoMA ground-truth labels and labeled window datasets."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .imagecore import BACKGROUND, DEFAULT_SIGMA, AnnotatedImage, Annotation, BoundingBox, preprocess_annotated
from .texfeat import FeatureConfig, WindowFeaturizer, feature_names, flags_str, parse_flags

DEFAULT_WINDOW = 128
DEFAULT_STEP = 32
DEFAULT_IOMA = 0.1
DEFAULT_KEEP = 0.15
DEFAULT_FLAGS = "GFW"


@dataclass(frozen=True)
class WindowSpec:
    size: int = DEFAULT_WINDOW
    step: int = DEFAULT_STEP

    def __post_init__(self):
        if not 1 <= self.step <= self.size:
            raise ValueError(f"need 1 <= step <= size, got size={self.size}, step={self.step}")


def _axis_origins(length: int, size: int, step: int) -> list[int]:
    out = list(range(0, length - size + 1, step))
    if out[-1] + size < length:
        out.append(length - size)
    return out


def slide(width: int, height: int, spec: WindowSpec) -> list[tuple[int, int]]:
    """Row-major window origins ``(x, y)`` covering the whole image.

    A trailing row/column that does not land on the step grid is clamped so
    the last window ends exactly at the image edge.
    """
    if width < spec.size or height < spec.size:
        raise ValueError(f"image {width}x{height} is smaller than the {spec.size}px window")
    xs = _axis_origins(width, spec.size, spec.step)
    ys = _axis_origins(height, spec.size, spec.step)
    return [(x, y) for y in ys for x in xs]


def ioma(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over the smaller of the two areas."""
    return a.intersection_area(b) / min(a.area, b.area)


def label_window(window: BoundingBox, annotations: list[Annotation], threshold: float = DEFAULT_IOMA) -> str:
    """Label of the best-IoMA annotation if it reaches ``threshold``, else background.

    Ties go to the annotation listed first.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"IoMA threshold must lie in (0, 1], got {threshold}")
    best, best_label = 0.0, BACKGROUND
    for ann in annotations:
        v = ioma(window, ann.box)
        if v > best:
            best, best_label = v, ann.label
    return best_label if best >= threshold else BACKGROUND


@dataclass(frozen=True)
class DatasetConfig:
    window: WindowSpec = field(default_factory=WindowSpec)
    ioma_threshold: float = DEFAULT_IOMA
    background_keep_fraction: float = DEFAULT_KEEP
    flags: str = DEFAULT_FLAGS
    seed: int = 0
    sigma: float = DEFAULT_SIGMA
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def __post_init__(self):
        if not 0 < self.ioma_threshold <= 1:
            raise ValueError(f"ioma_threshold must lie in (0, 1], got {self.ioma_threshold}")
        if not 0 < self.background_keep_fraction <= 1:
            raise ValueError(f"background_keep_fraction must lie in (0, 1], got {self.background_keep_fraction}")
        object.__setattr__(self, "flags", flags_str(self.flags))

    def to_dict(self) -> dict:
        return {
            "window": asdict(self.window),
            "ioma_threshold": self.ioma_threshold,
            "background_keep_fraction": self.background_keep_fraction,
            "flags": self.flags,
            "seed": self.seed,
            "sigma": self.sigma,
            "features": self.features.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DatasetConfig:
        d = dict(d)
        if "window" in d:
            d["window"] = WindowSpec(**d["window"])
        if "features" in d:
            d["features"] = FeatureConfig.from_dict(d["features"])
        return cls(**d)


@dataclass
class WindowDataset:
    """Table of labeled windows: one feature row per window plus provenance."""

    X: np.ndarray
    labels: np.ndarray
    source_ids: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    window: int
    feature_names: list[str]
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> dict[str, int]:
        names, counts = np.unique(self.labels, return_counts=True)
        return {str(k): int(v) for k, v in zip(names, counts)}

    def subset(self, idx) -> WindowDataset:
        idx = np.asarray(idx)
        return WindowDataset(
            self.X[idx], self.labels[idx], self.source_ids[idx], self.xs[idx], self.ys[idx],
            self.window, self.feature_names, self.config,
        )

    def select_columns(self, cols, names: list[str]) -> WindowDataset:
        return WindowDataset(
            np.ascontiguousarray(self.X[:, cols]), self.labels, self.source_ids, self.xs, self.ys,
            self.window, names, self.config,
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X, dtype=np.float64).tobytes())
        h.update("\x00".join(map(str, self.labels)).encode())
        return h.hexdigest()

    # JSON-lines dump: one record per window, plus feature_names.json and manifest.json
    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "windows.jsonl", "w") as fh:
            for i in range(len(self)):
                rec = {
                    "source_id": str(self.source_ids[i]),
                    "x": int(self.xs[i]),
                    "y": int(self.ys[i]),
                    "window": self.window,
                    "label": str(self.labels[i]),
                    "features": [float(v) for v in self.X[i]],
                }
                fh.write(json.dumps(rec) + "\n")
        (out / "feature_names.json").write_text(json.dumps(self.feature_names) + "\n")
        manifest = {
            "config": self.config,
            "rows": len(self),
            "class_counts": self.class_counts(),
            "feature_names": self.feature_names,
            "fingerprint": self.fingerprint(),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, in_dir) -> WindowDataset:
        d = Path(in_dir)
        names = json.loads((d / "feature_names.json").read_text())
        manifest = json.loads((d / "manifest.json").read_text())
        with open(d / "windows.jsonl") as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        X = np.array([r["features"] for r in recs], dtype=np.float64).reshape(len(recs), len(names))
        window = recs[0]["window"] if recs else manifest["config"].get("window", {}).get("size", 0)
        return cls(
            X,
            np.array([r["label"] for r in recs], dtype=object),
            np.array([r["source_id"] for r in recs], dtype=object),
            np.array([r["x"] for r in recs], dtype=np.int64),
            np.array([r["y"] for r in recs], dtype=np.int64),
            int(window),
            names,
            manifest.get("config", {}),
        )


def detector_meta(config: DatasetConfig | dict) -> dict:
    """Dataset settings a trained model must carry so detection can rebuild the same features."""
    d = config.to_dict() if isinstance(config, DatasetConfig) else config
    return {k: d[k] for k in ("flags", "features", "window", "sigma", "ioma_threshold")}


def concat_datasets(parts: list[WindowDataset]) -> WindowDataset:
    first = parts[0]
    return WindowDataset(
        np.concatenate([p.X for p in parts]) if parts else np.empty((0, 0)),
        np.concatenate([p.labels for p in parts]),
        np.concatenate([p.source_ids for p in parts]),
        np.concatenate([p.xs for p in parts]),
        np.concatenate([p.ys for p in parts]),
        first.window,
        first.feature_names,
        first.config,
    )


def image_rng(seed: int, source_id: str) -> np.random.Generator:
    """Generator keyed by (global seed, source id) so per-image work is order independent."""
    digest = hashlib.sha256(source_id.encode()).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "little")])


def label_image_windows(
    prepared: AnnotatedImage, spec: WindowSpec, thresholds, keep_fraction: float, seed: int
) -> tuple[list[tuple[int, int]], dict[float, list[str]], dict[float, np.ndarray]]:
    """Labels and retention masks of every window of a preprocessed image, per threshold.

    One uniform draw per window decides background retention, so the kept
    set for each threshold is consistent across thresholds and feature flags.
    """
    h, w = prepared.image.shape
    origins = slide(w, h, spec)
    draws = image_rng(seed, prepared.source_id).random(len(origins))
    labels, keep = {}, {}
    for t in thresholds:
        lab = [label_window(BoundingBox(x, y, spec.size, spec.size), prepared.annotations, t) for x, y in origins]
        labels[t] = lab
        keep[t] = np.array([lb != BACKGROUND for lb in lab]) | (draws < keep_fraction)
    return origins, labels, keep


def _image_rows(ann_img: AnnotatedImage, cfg: DatasetConfig) -> WindowDataset:
    spec = cfg.window
    prepared, _ = preprocess_annotated(ann_img, spec.size, spec.step, cfg.sigma)
    origins, labels, keep = label_image_windows(
        prepared, spec, [cfg.ioma_threshold], cfg.background_keep_fraction, cfg.seed
    )
    sel = np.flatnonzero(keep[cfg.ioma_threshold])
    chosen = [origins[i] for i in sel]
    names = feature_names(cfg.flags, cfg.features)
    if chosen:
        X = WindowFeaturizer(prepared.image, cfg.flags, cfg.features).extract(chosen, spec.size)
    else:
        X = np.empty((0, len(names)))
    return WindowDataset(
        X,
        np.array([labels[cfg.ioma_threshold][i] for i in sel], dtype=object),
        np.array([ann_img.source_id] * len(sel), dtype=object),
        np.array([o[0] for o in chosen], dtype=np.int64),
        np.array([o[1] for o in chosen], dtype=np.int64),
        spec.size,
        names,
        cfg.to_dict(),
    )


def build_dataset(images: list[AnnotatedImage], cfg: DatasetConfig, jobs: int = 1) -> WindowDataset:
    """Label every window of every image and extract features for the retained ones.

    Images are given raw; each is run through the preprocessing chain with
    the configured window/step and its annotations rescaled alongside.
    Defect windows are always kept; background windows with probability
    ``background_keep_fraction``.
    """
    parse_flags(cfg.flags)
    if jobs > 1 and len(images) > 1:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=jobs)(delayed(_image_rows)(im, cfg) for im in images)
    else:
        parts = [_image_rows(im, cfg) for im in images]
    if not parts:
        names = feature_names(cfg.flags, cfg.features)
        return WindowDataset(
            np.empty((0, len(names))), np.array([], dtype=object), np.array([], dtype=object),
            np.array([], dtype=np.int64), np.array([], dtype=np.int64), cfg.window.size, names, cfg.to_dict(),
        )
    return concat_datasets(parts)
