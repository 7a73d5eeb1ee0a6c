"""Classification metrics and the evaluation report."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(y_true, y_pred, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=int)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def average_precision(scores, positive):
    """All-point AP: mean of the precision at the rank of every positive.

    Items are ranked by descending score; equal scores keep input order.
    Returns NaN when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = positive[order]
    ranks = np.flatnonzero(hits) + 1
    precision_at_hits = np.cumsum(hits)[hits] / ranks
    return float(precision_at_hits.sum() / n_pos)


def per_class_ap(probs, y_true):
    probs = np.asarray(probs)
    y_true = np.asarray(y_true)
    return [average_precision(probs[:, c], y_true == c) for c in range(probs.shape[1])]


@dataclass
class EvalReport:
    classifier: str
    class_names: list
    accuracy: float
    per_class_accuracy: list
    per_class_ap: list
    mAP: float
    confusion: list
    n_train: int
    n_test: int
    fusion: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    hashes: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, classifier, class_names, y_true, probs, n_train, **extra):
        probs = np.asarray(probs, dtype=np.float64)
        y_true = np.asarray(y_true, dtype=int)
        k = len(class_names)
        y_pred = probs.argmax(axis=1)
        cm = confusion_matrix(y_true, y_pred, k)
        per_class = [float(cm[c, c] / cm[c].sum()) if cm[c].sum() else float("nan")
                     for c in range(k)]
        aps = per_class_ap(probs, y_true)
        defined = [a for a in aps if not math.isnan(a)]
        return cls(classifier, list(class_names), float(np.trace(cm) / cm.sum()), per_class,
                   aps, float(np.mean(defined)) if defined else float("nan"), cm.tolist(),
                   n_train, len(y_true), **extra)

    def to_dict(self):
        return {
            "classifier": self.classifier, "class_names": self.class_names,
            "accuracy": self.accuracy, "mAP": self.mAP,
            "per_class_accuracy": dict(zip(self.class_names, self.per_class_accuracy)),
            "per_class_ap": dict(zip(self.class_names, self.per_class_ap)),
            "confusion": self.confusion, "n_train": self.n_train, "n_test": self.n_test,
            "fusion": self.fusion, "config": self.config, "hashes": self.hashes,
            "notes": self.notes,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "accuracy", "average_precision"])
        for name, acc, ap in zip(self.class_names, self.per_class_accuracy, self.per_class_ap):
            w.writerow([name, f"{acc:.6f}", f"{ap:.6f}"])
        w.writerow(["overall", f"{self.accuracy:.6f}", f"{self.mAP:.6f}"])
        return buf.getvalue()


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")
