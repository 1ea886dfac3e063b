from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatch, ValidationError


@dataclass(frozen=True)
class SegMetrics:
    dsc: float
    jsc: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num, den):
    return num / den if den else 0.0


def metrics_from_counts(inter: int, n_true: int, n_pred: int) -> SegMetrics:
    """Overlap metrics from pixel counts.

    Two empty masks agree perfectly (all metrics 1). When only one is empty
    every metric is 0, undefined ratios included.
    """
    if n_true == 0 and n_pred == 0:
        return SegMetrics(1.0, 1.0, 1.0, 1.0, 1.0)
    union = n_true + n_pred - inter
    dsc = 2 * inter / (n_true + n_pred)
    # harmonic mean of precision and recall reduces to the same count ratio
    return SegMetrics(
        dsc=dsc,
        jsc=_ratio(inter, union),
        precision=_ratio(inter, n_pred),
        recall=_ratio(inter, n_true),
        f1=dsc,
    )


def seg_metrics(y_true, y_pred) -> SegMetrics:
    """DSC, Jaccard, precision, recall and F1 of two binary masks (any shape)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"y_true {y_true.shape} vs y_pred {y_pred.shape}")
    for m in (y_true, y_pred):
        if not np.isin(m, (0, 1)).all():
            raise ValidationError("masks must be binary")
    t, p = y_true.astype(bool), y_pred.astype(bool)
    return metrics_from_counts(int((t & p).sum()), int(t.sum()), int(p.sum()))
