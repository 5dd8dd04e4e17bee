"""Confusion matrices, per-class and macro metrics, baseline comparison, reports."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .data import ClassLabel, NUM_CLASSES

CLASS_NAMES = [c.display_name for c in ClassLabel]

# Combined-system confusion matrix on the development test split
# (rows: true class, columns: predicted; AB CO DW EA OT SA VC WT WO).
REFERENCE_CONFUSION = np.array([
    [201, 0, 0, 0, 7, 1, 0, 0, 12],
    [0, 217, 7, 0, 1, 0, 0, 0, 1],
    [0, 0, 215, 3, 0, 1, 0, 0, 1],
    [2, 0, 2, 200, 8, 0, 0, 0, 4],
    [35, 3, 0, 6, 156, 1, 0, 0, 11],
    [0, 0, 2, 1, 3, 220, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 222, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 214, 0],
    [17, 1, 2, 4, 15, 0, 0, 0, 173],
], dtype=np.int64)
REFERENCE_F1 = np.array([84.45, 97.09, 95.98, 93.02, 77.61, 97.99, 100.0, 100.0, 83.57])
REFERENCE_MACRO_F1 = 92.19
BASELINE_F1 = np.array([85.41, 95.14, 76.73, 83.64, 44.76, 93.92, 99.31, 99.59, 82.03])
BASELINE_MACRO_F1 = 84.50

ACCURACY_DEFINITION = "mean per-class recall (balanced accuracy)"


class ConfusionMatrix:
    """Square count matrix, rows = true class, columns = predicted class."""

    def __init__(self, counts=None, n_classes=NUM_CLASSES):
        if counts is None:
            counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        counts = np.array(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        self.counts = counts

    @classmethod
    def from_labels(cls, y_true, y_pred, n_classes=NUM_CLASSES):
        cm = cls(n_classes=n_classes)
        np.add.at(cm.counts, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
        return cm

    @property
    def n_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    def accumulate(self, true, pred):
        self.counts[int(true), int(pred)] += 1
        return self

    def merge(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    __add__ = merge

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"ConfusionMatrix(total={self.total})"


def _safe_div(num, den):
    num, den = np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def per_class_f1(cm):
    """Per-class ``(precision, recall, f1)`` in percent; 0/0 counts as 0."""
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    if counts.sum() == 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(counts).astype(np.float64)
    precision = _safe_div(tp, counts.sum(axis=0))
    recall = _safe_div(tp, counts.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return 100 * precision, 100 * recall, 100 * f1


def macro_f1(f1_scores):
    return float(np.mean(f1_scores))


def macro_accuracy(cm):
    """Unweighted mean of per-class recall, in percent."""
    return float(np.mean(per_class_f1(cm)[1]))


@dataclass
class MetricReport:
    classes: list
    precision: list
    recall: list
    f1: list
    macro_f1: float
    macro_accuracy: float
    baseline_delta: list = None
    macro_delta: float = None
    metadata: dict = field(default_factory=lambda: {"macro_accuracy_definition": ACCURACY_DEFINITION})

    @classmethod
    def from_confusion(cls, cm, classes=None, with_baseline=True):
        p, r, f = per_class_f1(cm)
        rep = cls(list(classes or CLASS_NAMES), p.tolist(), r.tolist(), f.tolist(),
                  macro_f1(f), float(np.mean(r)))
        if with_baseline and len(rep.f1) == len(BASELINE_F1):
            deltas = compare_to_baseline(rep)
            rep.baseline_delta, rep.macro_delta = deltas["per_class"], deltas["macro"]
        return rep

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def compare_to_baseline(report):
    """Percentage-point differences against the baseline system's F1 scores."""
    f1 = np.asarray(report.f1 if isinstance(report, MetricReport) else report, dtype=np.float64)
    macro = report.macro_f1 if isinstance(report, MetricReport) else float(np.mean(f1))
    return {"per_class": (f1 - BASELINE_F1).tolist(), "macro": float(macro - BASELINE_MACRO_F1)}


def fmt_pct(x):
    """Two decimals, round-half-up; non-finite values render as 0.00."""
    if x is None or not np.isfinite(x):
        x = 0.0
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_report(report, fmt="text"):
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1"])
        for row in zip(report.classes, report.precision, report.recall, report.f1):
            w.writerow([row[0]] + [fmt_pct(v) for v in row[1:]])
        w.writerow(["macro", "", fmt_pct(report.macro_accuracy), fmt_pct(report.macro_f1)])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    has_base = report.baseline_delta is not None
    lines = []
    head = f"{'Activity':<26}{'Precision':>10}{'Recall':>10}{'F1':>10}"
    if has_base:
        head += f"{'Baseline':>10}{'Delta':>10}"
    lines.append(head)
    lines.append("-" * len(head))
    for i, name in enumerate(report.classes):
        line = (f"{name:<26}{fmt_pct(report.precision[i]):>10}{fmt_pct(report.recall[i]):>10}"
                f"{fmt_pct(report.f1[i]):>10}")
        if has_base:
            line += f"{fmt_pct(BASELINE_F1[i]):>10}{fmt_pct(report.baseline_delta[i]):>10}"
        lines.append(line)
    lines.append("-" * len(head))
    line = f"{'Macro-averaged F1-score':<26}{'':>10}{'':>10}{fmt_pct(report.macro_f1):>10}"
    if has_base:
        line += f"{fmt_pct(BASELINE_MACRO_F1):>10}{fmt_pct(report.macro_delta):>10}"
    lines.append(line)
    lines.append(f"{'Macro-averaged accuracy':<26}{'':>10}{fmt_pct(report.macro_accuracy):>10}")
    lines.append(f"(accuracy = {report.metadata.get('macro_accuracy_definition', ACCURACY_DEFINITION)})")
    return "\n".join(lines) + "\n"


def oracle_check(counts=REFERENCE_CONFUSION, expected_f1=REFERENCE_F1,
                 expected_macro=REFERENCE_MACRO_F1, tol=0.01):
    """Recompute per-class and macro F1 from ``counts`` and compare with the reference column.

    Returns ``(ok, failures)``; each failure is a dict naming the class.
    """
    _, _, f1 = per_class_f1(counts)
    failures = []
    for name, got, want in zip(CLASS_NAMES, f1, expected_f1):
        if abs(got - want) > tol + 1e-9:
            failures.append({"class": name, "computed": float(got), "expected": float(want)})
    got_macro = macro_f1(f1)
    if abs(got_macro - expected_macro) > tol + 1e-9:
        failures.append({"class": "macro", "computed": got_macro, "expected": expected_macro})
    return not failures, failures
