"""Detection-level matching and per-window classification scores."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .imagecore import Annotation, BoundingBox


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _f1(p: float, r: float) -> float:
    return _safe_div(2 * p * r, p + r)


@dataclass
class ClassMatch:
    tp_weighted: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return _safe_div(self.tp_weighted, self.tp_weighted + self.fp)

    @property
    def recall(self) -> float:
        return _safe_div(self.tp_weighted, self.tp_weighted + self.fn)

    @property
    def f1(self) -> float:
        return _f1(self.precision, self.recall)

    def to_dict(self) -> dict:
        return {
            "tp_weighted": self.tp_weighted, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


@dataclass
class MatchReport:
    per_class: dict[str, ClassMatch] = field(default_factory=dict)

    @property
    def overall(self) -> ClassMatch:
        tot = ClassMatch()
        for m in self.per_class.values():
            tot.tp_weighted += m.tp_weighted
            tot.fp += m.fp
            tot.fn += m.fn
        return tot

    def __iadd__(self, other: MatchReport) -> MatchReport:
        for label, m in other.per_class.items():
            acc = self.per_class.setdefault(label, ClassMatch())
            acc.tp_weighted += m.tp_weighted
            acc.fp += m.fp
            acc.fn += m.fn
        return self

    def to_dict(self) -> dict:
        return {
            "per_class": {k: v.to_dict() for k, v in sorted(self.per_class.items())},
            "overall": self.overall.to_dict(),
        }

    def format(self) -> str:
        lines = [f"{'class':<10} {'tp_w':>6} {'fp':>6} {'fn':>6} {'prec':>7} {'recall':>7} {'f1':>7}"]
        rows = sorted(self.per_class.items()) + [("overall", self.overall)]
        for name, m in rows:
            lines.append(
                f"{name:<10} {m.tp_weighted:>6d} {m.fp:>6d} {m.fn:>6d} "
                f"{m.precision:>7.3f} {m.recall:>7.3f} {m.f1:>7.3f}"
            )
        return "\n".join(lines)


def _covered_fraction(truth: BoundingBox, preds: list[BoundingBox]) -> float:
    """Fraction of ``truth``'s area inside the union of ``preds``."""
    mask = np.zeros((truth.h, truth.w), dtype=bool)
    for p in preds:
        x0, x1 = max(p.x, truth.x), min(p.x2, truth.x2)
        y0, y1 = max(p.y, truth.y), min(p.y2, truth.y2)
        if x1 > x0 and y1 > y0:
            mask[y0 - truth.y:y1 - truth.y, x0 - truth.x:x1 - truth.x] = True
    return mask.mean()


def match_detections(preds, truths: list[Annotation], coverage: float = 0.4, mode: str = "defect") -> MatchReport:
    """Operator-assist matching of predicted boxes against ground truth, per class.

    ``preds`` is a sequence of objects with ``box`` and ``label`` (detections
    or annotations). A prediction touching ``k >= 1`` same-class truths is a
    true positive of weight ``k``; one touching none is a false positive. A
    truth is missed (false negative) unless the union of same-class
    predictions covers at least ``coverage`` of its area. With
    ``mode="prediction"`` a truth instead counts as found when some single
    same-class prediction has at least ``coverage`` of *its own* area on the
    truth.
    """
    if not 0 < coverage <= 1:
        raise ValueError(f"coverage must lie in (0, 1], got {coverage}")
    if mode not in ("defect", "prediction"):
        raise ValueError(f"unknown coverage mode {mode!r}")
    preds = list(getattr(preds, "detections", preds))
    report = MatchReport()
    labels = sorted({p.label for p in preds} | {t.label for t in truths})
    for label in labels:
        cp = [p.box for p in preds if p.label == label]
        ct = [t.box for t in truths if t.label == label]
        m = ClassMatch()
        for pb in cp:
            hits = sum(1 for tb in ct if pb.intersection_area(tb) > 0)
            if hits:
                m.tp_weighted += hits
            else:
                m.fp += 1
        for tb in ct:
            if mode == "defect":
                found = _covered_fraction(tb, cp) >= coverage
            else:
                found = any(pb.intersection_area(tb) / pb.area >= coverage for pb in cp)
            if not found:
                m.fn += 1
        report.per_class[label] = m
    return report


@dataclass
class WindowMetrics:
    classes: list[str]
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self) -> dict:
        return asdict(self)


def window_classification_report(true_labels, predicted_labels) -> WindowMetrics:
    """One-vs-rest precision/recall/F1 per class; macro means over classes present in the truth."""
    t = np.asarray(list(true_labels), dtype=object)
    p = np.asarray(list(predicted_labels), dtype=object)
    if len(t) != len(p):
        raise ValueError(f"label sequences differ in length: {len(t)} vs {len(p)}")
    classes = sorted(set(t.tolist()) | set(p.tolist()))
    prec, rec, f1, support = {}, {}, {}, {}
    for c in classes:
        tp = int(np.sum((t == c) & (p == c)))
        fp = int(np.sum((t != c) & (p == c)))
        fn = int(np.sum((t == c) & (p != c)))
        prec[c] = _safe_div(tp, tp + fp)
        rec[c] = _safe_div(tp, tp + fn)
        f1[c] = _f1(prec[c], rec[c])
        support[c] = tp + fn
    present = [c for c in classes if support[c] > 0]
    return WindowMetrics(
        classes, prec, rec, f1, support,
        float(np.mean([prec[c] for c in present])) if present else 0.0,
        float(np.mean([rec[c] for c in present])) if present else 0.0,
        float(np.mean([f1[c] for c in present])) if present else 0.0,
    )
