"""Random forest of CART trees with soft voting, stratified k-fold grid search and JSON model files."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .metrics import window_classification_report

MODEL_FORMAT = "tiredefect.forest"
MODEL_VERSION = 1


class TrainingError(ValueError):
    pass


class ModelLoadError(ValueError):
    pass


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    criterion: str = "gini"
    max_features: str | float = "sqrt"
    max_depth: int | None = None
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"criterion must be gini or entropy, got {self.criterion!r}")
        mf = self.max_features
        if isinstance(mf, str):
            if mf not in ("sqrt", "log2", "all"):
                raise ValueError(f"max_features must be sqrt, log2, all or a fraction, got {mf!r}")
        elif not 0 < float(mf) <= 1:
            raise ValueError(f"max_features fraction must lie in (0, 1], got {mf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def n_split_features(self, d: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            k = int(math.sqrt(d))
        elif mf == "log2":
            k = int(math.log2(d)) if d > 1 else 1
        elif mf == "all":
            k = d
        else:
            k = int(float(mf) * d)
        return min(max(k, 1), d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return cls(**d)


@dataclass
class DecisionTree:
    """Flattened binary tree; ``feature[i] < 0`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class frequencies at each node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> DecisionTree:
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


@njit(cache=True)
def _scan_splits(v, y, n_classes, entropy):
    """Best cut over the rows of ``v`` (candidate features x node rows).

    Returns (column, threshold, weighted child impurity); column is -1 when
    no row has two distinct values. Strict improvement keeps the first
    feature and the lowest cut on ties.
    """
    k, n = v.shape
    total = np.zeros(n_classes)
    for i in range(n):
        total[y[i]] += 1.0
    best_imp = np.inf
    best_col = -1
    best_thr = 0.0
    left = np.zeros(n_classes)
    for j in range(k):
        col = v[j]
        order = np.argsort(col, kind="mergesort")
        left[:] = 0.0
        for p in range(n - 1):
            left[y[order[p]]] += 1.0
            lo = col[order[p]]
            hi = col[order[p + 1]]
            if not lo < hi:
                continue
            nl = p + 1.0
            nr = n - nl
            imp = 0.0
            if entropy:
                for c in range(n_classes):
                    a = left[c]
                    b = total[c] - a
                    if a > 0:
                        imp -= a * np.log2(a / nl)
                    if b > 0:
                        imp -= b * np.log2(b / nr)
            else:
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    a = left[c]
                    b = total[c] - a
                    sl += a * a
                    sr += b * b
                imp = (nl - sl / nl) + (nr - sr / nr)
            if imp < best_imp:
                best_imp = imp
                best_col = j
                thr = (lo + hi) / 2
                if not (lo <= thr and thr < hi):
                    thr = lo
                best_thr = thr
    return best_col, best_thr, best_imp


def _pick_features(X: np.ndarray, idx: np.ndarray, feature_order: np.ndarray, k: int) -> np.ndarray:
    """First ``k`` features of ``feature_order`` that are not constant on rows ``idx``."""
    chosen = []
    for start in range(0, len(feature_order), k):
        block = feature_order[start:start + k]
        v = X[np.ix_(idx, block)]
        varying = block[(v != v[:1]).any(axis=0)]
        chosen.extend(varying[:k - len(chosen)].tolist())
        if len(chosen) >= k:
            break
    return np.asarray(chosen, dtype=np.int64)


def _best_split(X, y, idx, n_classes, feature_order, k, criterion):
    """Best (feature, threshold, impurity) among the first ``k`` non-constant features in ``feature_order``.

    Ties go to the feature evaluated first, then to the lower cut.
    """
    feats = _pick_features(X, idx, feature_order, k)
    if len(feats) == 0:
        return None, None, np.inf
    col, thr, imp = _scan_splits(np.ascontiguousarray(X[np.ix_(idx, feats)].T), y[idx], n_classes,
                                 criterion == "entropy")
    if col < 0:
        return None, None, np.inf
    return int(feats[col]), float(thr), float(imp)


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, cfg: TrainConfig, rng: np.random.Generator,
              sample_idx: np.ndarray | None = None) -> DecisionTree:
    """Grow one CART tree on rows ``sample_idx`` (duplicates allowed) of ``X``."""
    n, d = X.shape
    k = cfg.n_split_features(d)
    idx0 = np.arange(n) if sample_idx is None else np.asarray(sample_idx)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / counts.sum())
        return len(feature) - 1

    stack = [(new_node(idx0), idx0, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if (
            len(idx) < cfg.min_samples_split
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
            or np.count_nonzero(value[node]) <= 1
        ):
            continue
        f, thr, _ = _best_split(X, y, idx, n_classes, rng.permutation(d), k, cfg.criterion)
        if f is None:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64).reshape(len(feature), n_classes),
    )


def _train_one(X, y, n_classes, cfg: TrainConfig, tree_index: int):
    rng = np.random.default_rng([cfg.seed, tree_index])
    n = len(y)
    sample = rng.integers(0, n, n) if cfg.bootstrap else np.arange(n)
    tree = grow_tree(X, y, n_classes, cfg, rng, sample)
    oob = None
    if cfg.bootstrap:
        mask = np.ones(n, dtype=bool)
        mask[sample] = False
        oob_rows = np.flatnonzero(mask)
        oob = (oob_rows, tree.predict_proba(X[oob_rows]))
    return tree, oob


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    classes: list[str]
    feature_names: list[str]
    config: TrainConfig
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict_proba(self, X) -> np.ndarray:
        """Mean of per-tree leaf distributions; ``(n, n_classes)`` for a matrix, 1-D for one vector."""
        X = np.asarray(getattr(X, "values", X), dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"feature vector has {X.shape[1]} values, model expects {self.n_features}")
        acc = np.zeros((len(X), len(self.classes)))
        for t in self.trees:
            acc += t.predict_proba(X)
        acc /= len(self.trees)
        return acc[0] if single else acc

    def predict(self, X) -> np.ndarray:
        """Most probable class (ties resolved by class order)."""
        proba = np.atleast_2d(self.predict_proba(X))
        return np.array(self.classes, dtype=object)[np.argmax(proba, axis=1)]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "classes": list(self.classes),
            "feature_names": list(self.feature_names),
            "config": self.config.to_dict(),
            "fingerprint": self.fingerprint,
            "meta": self.meta,
            "trees": [t.to_dict() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)


def _dataset_arrays(dataset):
    X = np.asarray(dataset.X, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=object)
    return X, labels


def _class_order(labels, classes=None) -> list[str]:
    if classes is not None:
        return list(classes)
    found = sorted({str(v) for v in labels})
    if "background" in found:
        found.remove("background")
        found.insert(0, "background")
    return found


def train_forest(dataset, cfg: TrainConfig | None = None, classes=None, jobs: int = 1,
                 meta: dict | None = None) -> ForestModel:
    """Fit ``cfg.n_trees`` trees, each from its own generator seeded by (seed, tree index).

    ``dataset`` is anything with ``X``, ``labels`` and ``feature_names``
    (e.g. :class:`~tiredefect.windowing.WindowDataset`). Results do not
    depend on ``jobs``.
    """
    cfg = cfg or TrainConfig()
    X, labels = _dataset_arrays(dataset)
    if len(labels) == 0:
        raise TrainingError("cannot train on an empty dataset")
    classes = _class_order(labels, classes)
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        y = np.array([lookup[str(v)] for v in labels], dtype=np.int64)
    except KeyError as exc:
        raise TrainingError(f"label {exc.args[0]!r} not among declared classes {classes}") from None
    n_classes = len(classes)

    if jobs > 1 and cfg.n_trees > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs)(delayed(_train_one)(X, y, n_classes, cfg, i) for i in range(cfg.n_trees))
    else:
        results = [_train_one(X, y, n_classes, cfg, i) for i in range(cfg.n_trees)]
    trees = [r[0] for r in results]

    info = dict(meta or {})
    present = np.unique(y)
    info["single_class"] = bool(len(present) == 1)
    info["class_counts"] = {c: int(np.sum(y == i)) for i, c in enumerate(classes)}
    if cfg.bootstrap:
        votes = np.zeros((len(y), n_classes))
        hits = np.zeros(len(y))
        for _, (rows, proba) in results:
            votes[rows] += proba
            hits[rows] += 1
        seen = hits > 0
        if seen.any():
            info["oob_accuracy"] = float(np.mean(np.argmax(votes[seen], axis=1) == y[seen]))
    names = list(getattr(dataset, "feature_names", [f"f{i}" for i in range(X.shape[1])]))
    fp = dataset.fingerprint() if hasattr(dataset, "fingerprint") else _fingerprint(X, labels)
    return ForestModel(trees, classes, names, cfg, fp, info)


def _fingerprint(X, labels) -> str:
    h = hashlib.sha256(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update("\x00".join(map(str, labels)).encode())
    return h.hexdigest()


def predict_proba(model: ForestModel, features) -> np.ndarray:
    return model.predict_proba(features)


def save_model(model: ForestModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.dumps() + "\n")


def load_model(path) -> ForestModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelLoadError(f"{path} is not a {MODEL_FORMAT} model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelLoadError(f"{path}: model version {doc.get('version')} != supported {MODEL_VERSION}")
    try:
        trees = [DecisionTree.from_dict(t) for t in doc["trees"]]
        model = ForestModel(
            trees, list(doc["classes"]), list(doc["feature_names"]), TrainConfig.from_dict(doc["config"]),
            doc.get("fingerprint", ""), doc.get("meta", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"{path}: corrupt model file ({exc})") from exc
    for t in trees:
        if t.value.shape[1:] != (len(model.classes),) or (t.feature >= model.n_features).any():
            raise ModelLoadError(f"{path}: tree shape does not match the declared classes/features")
    return model


# --------------------------------------------------------------------------- #
# cross-validated grid search
# --------------------------------------------------------------------------- #

def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold id per sample: each class is shuffled then dealt round-robin over the folds."""
    labels = np.asarray(labels, dtype=object)
    if len(labels) < k:
        raise StratificationError(f"need at least {k} samples for {k}-fold CV, got {len(labels)}")
    rng = np.random.default_rng(seed)
    order = []
    for c in sorted(set(labels.tolist()), key=str):
        members = np.flatnonzero(labels == c)
        if len(members) < k:
            raise StratificationError(f"class {c!r} has {len(members)} samples, fewer than k={k}")
        order.append(rng.permutation(members))
    order = np.concatenate(order)
    folds = np.empty(len(labels), dtype=np.int64)
    folds[order] = np.arange(len(order)) % k
    return folds


@dataclass
class CVReport:
    candidates: list[dict]
    selected: int
    k: int
    seed: int

    @property
    def best_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.candidates[self.selected]["config"])

    @property
    def n_cells(self) -> int:
        return sum(len(c["folds"]) for c in self.candidates)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "selected": self.selected, "candidates": self.candidates}


def grid_search_cv(dataset, grid: list[TrainConfig], k: int = 5, seed: int = 0, classes=None,
                   jobs: int = 1) -> tuple[TrainConfig, CVReport]:
    """Score every config on every stratified fold; pick the best mean macro-F1.

    Ties prefer fewer trees, then earlier position in ``grid``.
    """
    if not grid:
        raise ValueError("grid must contain at least one config")
    X, labels = _dataset_arrays(dataset)
    classes = _class_order(labels, classes)
    folds = stratified_folds(labels, k, seed)
    names = list(getattr(dataset, "feature_names", [f"f{i}" for i in range(X.shape[1])]))
    candidates = []
    for cfg in grid:
        cells = []
        for f in range(k):
            tr, va = np.flatnonzero(folds != f), np.flatnonzero(folds == f)
            part = _Table(X[tr], labels[tr], names)
            model = train_forest(part, cfg, classes=classes, jobs=jobs)
            wm = window_classification_report(labels[va], model.predict(X[va]))
            cells.append({
                "fold": f, "n_train": int(len(tr)), "n_val": int(len(va)),
                "macro_precision": wm.macro_precision, "macro_recall": wm.macro_recall, "macro_f1": wm.macro_f1,
            })
        candidates.append({
            "config": cfg.to_dict(),
            "folds": cells,
            "mean_macro_precision": float(np.mean([c["macro_precision"] for c in cells])),
            "mean_macro_recall": float(np.mean([c["macro_recall"] for c in cells])),
            "mean_macro_f1": float(np.mean([c["macro_f1"] for c in cells])),
        })
    selected = min(
        range(len(grid)), key=lambda i: (-candidates[i]["mean_macro_f1"], grid[i].n_trees, i)
    )
    return grid[selected], CVReport(candidates, selected, k, seed)


def default_grid(seed: int = 0) -> list[TrainConfig]:
    return [
        TrainConfig(n_trees=n, criterion=c, max_features=m, seed=seed)
        for n in (100, 200, 400)
        for c in ("gini", "entropy")
        for m in ("sqrt", "log2")
    ]


@dataclass
class _Table:
    X: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
