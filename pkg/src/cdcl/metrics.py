"""Classification agreement metrics: overall/average accuracy and kappa."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class MetricsReport:
    """Confusion matrix (rows = truth, columns = prediction) and summaries.

    `per_class_accuracy` holds NaN for classes absent from the truth; those
    classes are excluded from the average accuracy.
    """

    confusion: np.ndarray  # (C, C) int counts
    oa: float
    aa: float
    kappa: float
    per_class_accuracy: np.ndarray  # (C,) float, NaN when truth-empty

    def as_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "oa": self.oa,
            "aa": self.aa,
            "kappa": self.kappa,
            "per_class_accuracy": [
                None if np.isnan(v) else float(v) for v in self.per_class_accuracy
            ],
        }


def compute_metrics(truth: np.ndarray, predicted: np.ndarray, classes: int) -> MetricsReport:
    """Confusion counts plus OA, AA, and the chance-corrected kappa statistic."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape or truth.ndim != 1:
        raise DataError("truth and prediction must be equal-length vectors")
    if truth.size == 0:
        raise DataError("empty input")
    for name, arr in (("truth", truth), ("prediction", predicted)):
        if arr.min() < 1 or arr.max() > classes:
            raise DataError(f"{name} labels must lie in 1..{classes}")

    confusion = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(confusion, (truth - 1, predicted - 1), 1)
    total = confusion.sum()
    oa = float(np.trace(confusion)) / total

    row_sums = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(
            row_sums > 0, np.diag(confusion) / np.maximum(row_sums, 1), np.nan
        )
    present = row_sums > 0
    if not present.any():
        raise DataError("truth covers no class")
    aa = float(np.mean(per_class[present]))

    col_sums = confusion.sum(axis=0)
    p_e = float(np.sum(row_sums * col_sums)) / (total * total)
    if abs(1.0 - p_e) < 1e-15:
        kappa = 1.0 if abs(oa - 1.0) < 1e-15 else 0.0
    else:
        kappa = (oa - p_e) / (1.0 - p_e)
    return MetricsReport(confusion, oa, aa, float(kappa), per_class)
