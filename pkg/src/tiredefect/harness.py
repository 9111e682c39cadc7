"""Feature-subset ablation and window/step/threshold sweeps over a labeled corpus.

Every row uses the same protocol: build the window dataset, hold out a
stratified 20 % seeded by (seed, row index), train on the rest and report
macro precision/recall/F1 on the holdout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from itertools import product

import numpy as np

from .forest import TrainConfig, train_forest
from .imagecore import AnnotatedImage, preprocess_annotated
from .metrics import window_classification_report
from .texfeat import FAMILIES, WindowFeaturizer, family_slices, feature_names, flags_str
from .windowing import DatasetConfig, WindowDataset, WindowSpec, label_image_windows


def ablation_rows() -> list[str]:
    """All 15 non-empty family subsets, largest-first in L > G > F > W binary order."""
    rows = []
    for mask in range(15, 0, -1):
        bits = [(mask >> (3 - i)) & 1 for i in range(4)]
        rows.append("".join(f for f, b in zip(FAMILIES, bits) if b))
    return rows


def stratified_holdout(labels, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Indices (train, test); each class contributes ``round(fraction * n_c)`` test rows (at least 1 if n_c >= 2)."""
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    test = []
    for c in sorted(set(labels.tolist()), key=str):
        members = rng.permutation(np.flatnonzero(labels == c))
        n_test = int(round(fraction * len(members)))
        if len(members) >= 2:
            n_test = min(max(n_test, 1), len(members) - 1)
        test.append(members[:n_test])
    test = np.sort(np.concatenate(test)) if test else np.array([], dtype=np.int64)
    train = np.setdiff1d(np.arange(len(labels)), test)
    return train, test


@dataclass
class HarnessRow:
    key: dict
    n_train: int
    n_test: int
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self) -> dict:
        return {
            **self.key, "n_train": self.n_train, "n_test": self.n_test,
            "macro_precision": self.macro_precision, "macro_recall": self.macro_recall, "macro_f1": self.macro_f1,
        }


def evaluate_rows(ds: WindowDataset, train_cfg: TrainConfig, seed: int, row: int, test_fraction: float = 0.2):
    if len(set(ds.labels.tolist())) < 2:
        raise ValueError("harness needs at least two classes among the windows")
    tr, te = stratified_holdout(ds.labels, test_fraction, [seed, row])
    model = train_forest(ds.subset(tr), train_cfg)
    wm = window_classification_report(ds.labels[te], model.predict(ds.X[te]))
    return len(tr), len(te), wm


def _prepared(images, spec: WindowSpec, sigma: float):
    return [preprocess_annotated(im, spec.size, spec.step, sigma)[0] for im in images]


def _windows(prepared: list[AnnotatedImage], spec: WindowSpec, thresholds, keep: float, flags, cfg: DatasetConfig):
    """Features of every window kept under any threshold, plus per-threshold labels/masks."""
    X, labels, masks = [], {t: [] for t in thresholds}, {t: [] for t in thresholds}
    for im in prepared:
        origins, lab, kp = label_image_windows(im, spec, thresholds, keep, cfg.seed)
        any_keep = np.logical_or.reduce([kp[t] for t in thresholds])
        idx = np.flatnonzero(any_keep)
        X.append(WindowFeaturizer(im.image, flags, cfg.features).extract([origins[i] for i in idx], spec.size))
        for t in thresholds:
            labels[t] += [lab[t][i] for i in idx]
            masks[t].append(kp[t][idx])
    X = np.concatenate(X) if X else np.empty((0, len(feature_names(flags, cfg.features))))
    labels = {t: np.array(v, dtype=object) for t, v in labels.items()}
    return X, labels, {t: np.concatenate(v) for t, v in masks.items()}


def _dataset(X, labels, names, spec: WindowSpec, cfg: DatasetConfig) -> WindowDataset:
    n = len(labels)
    empty = np.zeros(n, dtype=np.int64)
    return WindowDataset(X, labels, np.array([""] * n, dtype=object), empty, empty, spec.size, names, cfg.to_dict())


def ablation_harness(images: list[AnnotatedImage], base_cfg: DatasetConfig, train_cfg: TrainConfig,
                     test_fraction: float = 0.2) -> list[HarnessRow]:
    """One row per feature subset; features of all four families are extracted once and sliced."""
    spec = base_cfg.window
    full = "".join(FAMILIES)
    prepared = _prepared(images, spec, base_cfg.sigma)
    X, labels, masks = _windows(prepared, spec, [base_cfg.ioma_threshold], base_cfg.background_keep_fraction,
                                full, base_cfg)
    t = base_cfg.ioma_threshold
    X, y = X[masks[t]], labels[t][masks[t]]
    slices = family_slices(full, base_cfg.features)
    rows = []
    for i, flags in enumerate(ablation_rows()):
        cols = np.concatenate([np.arange(slices[f].start, slices[f].stop) for f in flags])
        ds = _dataset(np.ascontiguousarray(X[:, cols]), y, feature_names(flags, base_cfg.features), spec,
                      replace(base_cfg, flags=flags))
        n_tr, n_te, wm = evaluate_rows(ds, train_cfg, base_cfg.seed, i, test_fraction)
        key = {"flags": flags, **{f: f in flags for f in FAMILIES}}
        rows.append(HarnessRow(key, n_tr, n_te, wm.macro_precision, wm.macro_recall, wm.macro_f1))
    return rows


def _dedup(values) -> list:
    out = []
    for v in values:
        if v not in out:
            out.append(v)
    return out


def grid_harness(images: list[AnnotatedImage], windows, steps, thresholds, flags, train_cfg: TrainConfig,
                 base_cfg: DatasetConfig | None = None, test_fraction: float = 0.2) -> list[HarnessRow]:
    """Rows over the window x step x threshold cross product (duplicates dropped, order kept)."""
    base_cfg = base_cfg or DatasetConfig()
    flags = flags_str(flags)
    windows, steps, thresholds = _dedup(windows), _dedup(steps), _dedup(thresholds)
    for w, s in product(windows, steps):
        if s > w:
            raise ValueError(f"step {s} exceeds window {w}")
    names = feature_names(flags, base_cfg.features)
    rows = []
    i = 0
    for w, s in product(windows, steps):
        spec = WindowSpec(w, s)
        cfg = replace(base_cfg, window=spec, flags=flags)
        X, labels, masks = _windows(_prepared(images, spec, cfg.sigma), spec, thresholds,
                                    cfg.background_keep_fraction, flags, cfg)
        for t in thresholds:
            ds = _dataset(X[masks[t]], labels[t][masks[t]], names, spec, replace(cfg, ioma_threshold=t))
            n_tr, n_te, wm = evaluate_rows(ds, train_cfg, base_cfg.seed, i, test_fraction)
            rows.append(HarnessRow({"window": w, "step": s, "threshold": t}, n_tr, n_te,
                                   wm.macro_precision, wm.macro_recall, wm.macro_f1))
            i += 1
    return rows


def format_ablation(rows: list[HarnessRow]) -> str:
    head = " ".join(f"{f:^3}" for f in FAMILIES) + f" {'precision':>10} {'recall':>8} {'f1':>8}"
    lines = [head]
    for r in rows:
        marks = " ".join(f"{'x' if r.key[f] else '':^3}" for f in FAMILIES)
        lines.append(f"{marks} {r.macro_precision:>10.4f} {r.macro_recall:>8.4f} {r.macro_f1:>8.4f}")
    return "\n".join(lines)


def format_sweep(rows: list[HarnessRow]) -> str:
    lines = [f"{'window':>6} {'step':>5} {'threshold':>9} {'precision':>10} {'recall':>8} {'f1':>8}"]
    for r in rows:
        k = r.key
        lines.append(
            f"{k['window']:>6} {k['step']:>5} {k['threshold']:>9g} "
            f"{r.macro_precision:>10.4f} {r.macro_recall:>8.4f} {r.macro_f1:>8.4f}"
        )
    return "\n".join(lines)


def rows_json(rows: list[HarnessRow], **extra) -> str:
    return json.dumps({**extra, "rows": [r.to_dict() for r in rows]}, indent=1, sort_keys=True)
