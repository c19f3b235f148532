"""Evaluation: confusion matrix, per-class precision/recall/F1 (percent),
macro averages, accuracy, and serializers for report.json / confusion.csv.

Convention: confusion rows are true classes, columns are predictions;
precision_c = diag_c / column-sum_c, recall_c = diag_c / row-sum_c, both 0
when the denominator is 0. Reports round percentages to 0.1; in-memory
values keep full precision.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyError, ShapeError


def f1_score_pct(precision: float, recall: float) -> float:
    """Harmonic mean of precision/recall given in percent; 0 at (0, 0)."""
    if precision < 0 or recall < 0 or precision > 100 or recall > 100:
        raise ShapeError("precision/recall must be percentages in [0, 100]")
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ShapeError("y_true and y_pred must align")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass
class EvalReport:
    class_names: tuple
    confusion: np.ndarray
    support: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float


def report_from_predictions(y_true, y_pred, class_names) -> EvalReport:
    class_names = tuple(class_names)
    n = len(class_names)
    y_true = np.asarray(y_true, dtype=np.int64)
    if y_true.size == 0:
        raise EmptyError("nothing to evaluate")
    cm = confusion_matrix(y_true, y_pred, n)
    diag = np.diag(cm).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(diag, col, out=np.zeros(n), where=col > 0) * 100.0
    recall = np.divide(diag, row, out=np.zeros(n), where=row > 0) * 100.0
    f1 = np.array([f1_score_pct(p, r) for p, r in zip(precision, recall)])
    return EvalReport(
        class_names=class_names,
        confusion=cm,
        support=cm.sum(axis=1),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        accuracy=float(diag.sum() / cm.sum() * 100.0),
    )


def evaluate(model, X, y, class_names) -> EvalReport:
    """Confusion-matrix evaluation of argmax predictions (ties go to the
    lowest class index)."""
    from .model import predict

    if len(X) == 0:
        raise EmptyError("empty evaluation set")
    probs = predict(model, X)
    y_pred = probs.argmax(axis=1)
    return report_from_predictions(y, y_pred, class_names)


def _round1(x: float) -> float:
    return round(float(x), 1)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "classes": list(report.class_names),
        "support": [int(s) for s in report.support],
        "precision": [_round1(v) for v in report.precision],
        "recall": [_round1(v) for v in report.recall],
        "f1": [_round1(v) for v in report.f1],
        "macro_precision": _round1(report.macro_precision),
        "macro_recall": _round1(report.macro_recall),
        "macro_f1": _round1(report.macro_f1),
        "accuracy": _round1(report.accuracy),
        "confusion": [[int(v) for v in row] for row in report.confusion],
    }


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def confusion_to_csv(report: EvalReport) -> str:
    lines = ["," + ",".join(report.class_names)]
    for name, row in zip(report.class_names, report.confusion):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"
