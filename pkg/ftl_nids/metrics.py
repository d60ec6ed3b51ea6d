"""
Evaluation metrics: confusion matrix, accuracy and macro-averaged
precision / recall / F1.

Any 0/0 (a class never predicted, or never present) is defined as 0 and still
counted in the macro mean.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import EmptyInputError, LabelRangeError, LengthMismatchError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows = true class, columns = predicted class"""
    matrix: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def to_list(self) -> List[List[int]]:
        return [[int(v) for v in row] for row in self.matrix]


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    precision: List[float]
    recall: List[float]
    f1: List[float]
    support: List[int]
    confusion: ConfusionMatrix

    def to_dict(self, label_names: Optional[Sequence[str]] = None) -> Dict:
        """JSON-ready dict; per-class entries keyed by label name when given"""
        names = list(label_names) if label_names is not None else [
            str(k) for k in range(len(self.support))
        ]
        per_class = {
            name: {
                'precision': self.precision[k],
                'recall': self.recall[k],
                'f1': self.f1[k],
                'support': self.support[k],
            }
            for k, name in enumerate(names)
        }
        return {
            'accuracy': self.accuracy,
            'macro_precision': self.macro_precision,
            'macro_recall': self.macro_recall,
            'macro_f1': self.macro_f1,
            'per_class': per_class,
            'confusion_matrix': self.confusion.to_list(),
        }


def confusion(true_labels, predicted_labels, n_classes: int) -> ConfusionMatrix:
    """Tally (true, predicted) pairs into an n_classes × n_classes matrix"""
    y_true = np.asarray(true_labels, dtype=np.int64).ravel()
    y_pred = np.asarray(predicted_labels, dtype=np.int64).ravel()

    if y_true.shape[0] != y_pred.shape[0]:
        raise LengthMismatchError(
            f"true labels ({y_true.shape[0]}) and predictions ({y_pred.shape[0]}) differ in length"
        )
    if y_true.shape[0] == 0:
        raise EmptyInputError("cannot build a confusion matrix from empty inputs")
    for name, arr in (('true', y_true), ('predicted', y_pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise LabelRangeError(f"{name} labels must lie in [0, {n_classes})")

    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return ConfusionMatrix(matrix=matrix)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def macro_report(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy plus per-class and macro precision / recall / F1"""
    if cm.total <= 0:
        raise EmptyInputError("confusion matrix is empty")

    m = cm.matrix.astype(np.float64)
    tp = np.diag(m)
    col_sums = m.sum(axis=0)
    row_sums = m.sum(axis=1)

    precision = _safe_ratio(tp, col_sums)
    recall = _safe_ratio(tp, row_sums)
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)

    return MetricsReport(
        accuracy=float(tp.sum() / cm.total),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        precision=[float(v) for v in precision],
        recall=[float(v) for v in recall],
        f1=[float(v) for v in f1],
        support=[int(v) for v in cm.matrix.sum(axis=1)],
        confusion=cm,
    )


def evaluate(true_labels, predicted_labels, n_classes: int) -> MetricsReport:
    return macro_report(confusion(true_labels, predicted_labels, n_classes))
