"""Volume/EF error metrics, heart-failure class confusion and report files."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, InvalidBands, LengthMismatch, OutOfRangeClass, StudyIOError

# reduced / borderline / preserved ejection fraction
DEFAULT_BANDS = ((0.0, 0.4), (0.4, 0.5), (0.5, 1.0))

VOLUME_FIELDS = ("patient_id", "esv_actual", "esv_pred", "edv_actual", "edv_pred", "ef_actual",
                 "ef_pred", "esv_residual", "edv_residual", "ef_residual", "ef_class_actual",
                 "ef_class_pred", "flags")


def rmse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape:
        raise LengthMismatch(f"{pred.size} predictions for {actual.size} actual values")
    if pred.size == 0:
        raise EmptyInput("rmse of an empty list")
    return math.sqrt(math.fsum((pred - actual) ** 2) / pred.size)


def check_bands(bands):
    bands = [tuple(float(v) for v in b) for b in bands]
    if not bands:
        raise InvalidBands("need at least one band")
    if bands[0][0] != 0.0 or bands[-1][1] != 1.0:
        raise InvalidBands("bands must cover [0, 1]")
    for lo, hi in bands:
        if not lo < hi:
            raise InvalidBands(f"empty band [{lo}, {hi})")
    for (_, hi), (lo, _) in zip(bands, bands[1:]):
        if hi != lo:
            raise InvalidBands("bands must be ordered, disjoint and contiguous")
    return bands


def ef_class(ef: float, bands=DEFAULT_BANDS) -> int:
    """Index of the band holding ``ef``; bands are [lo, hi) except the last, [lo, hi]."""
    bands = check_bands(bands)
    if not 0.0 <= ef <= 1.0:
        raise OutOfRangeClass(f"ejection fraction {ef} outside [0, 1]")
    for k, (lo, hi) in enumerate(bands):
        if lo <= ef < hi:
            return k
    return len(bands) - 1


def confusion(pred_classes, actual_classes, n_classes: int) -> np.ndarray:
    """``M[actual][pred]`` counts."""
    pred = list(pred_classes)
    actual = list(actual_classes)
    if len(pred) != len(actual):
        raise LengthMismatch("class lists differ in length")
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, a in zip(pred, actual):
        if not (0 <= p < n_classes and 0 <= a < n_classes):
            raise OutOfRangeClass(f"class pair ({a}, {p}) outside 0..{n_classes - 1}")
        m[a, p] += 1
    return m


def accuracy(matrix) -> float:
    matrix = np.asarray(matrix)
    total = int(matrix.sum())
    if total == 0:
        raise EmptyInput("accuracy of an empty confusion matrix")
    return int(np.trace(matrix)) / total


@dataclass
class PatientRow:
    patient_id: str
    esv_actual: float
    esv_pred: float
    edv_actual: float
    edv_pred: float
    ef_actual: float
    ef_pred: float
    flags: tuple = ()


@dataclass
class EvalReport:
    rows: list
    bands: tuple = DEFAULT_BANDS
    esv_rmse_ml: float | None = None
    edv_rmse_ml: float | None = None
    ef_rmse_fraction: float | None = None
    matrix: np.ndarray = field(default=None)
    accuracy: float | None = None

    @classmethod
    def build(cls, rows, bands=DEFAULT_BANDS) -> "EvalReport":
        bands = tuple(check_bands(bands))
        rows = sorted(rows, key=lambda r: r.patient_id)
        rep = cls(rows, bands)
        rep.matrix = np.zeros((len(bands), len(bands)), dtype=np.int64)
        if rows:
            col = lambda name: [getattr(r, name) for r in rows]  # noqa: E731
            rep.esv_rmse_ml = rmse(col("esv_pred"), col("esv_actual"))
            rep.edv_rmse_ml = rmse(col("edv_pred"), col("edv_actual"))
            rep.ef_rmse_fraction = rmse(col("ef_pred"), col("ef_actual"))
            rep.matrix = confusion([ef_class(r.ef_pred, bands) for r in rows],
                                   [ef_class(r.ef_actual, bands) for r in rows], len(bands))
            rep.accuracy = accuracy(rep.matrix)
        return rep

    def summary(self) -> dict:
        return {
            "n_patients": len(self.rows),
            "esv_rmse_ml": self.esv_rmse_ml,
            "edv_rmse_ml": self.edv_rmse_ml,
            "ef_rmse_fraction": self.ef_rmse_fraction,
            "ef_bands": [list(b) for b in self.bands],
            "confusion_matrix": self.matrix.tolist(),
            "accuracy": self.accuracy,
        }


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    return repr(float(v))


def _write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def emit_report(report: EvalReport, directory) -> list[Path]:
    """Write the per-patient table, aggregate summary and plot-ready CSVs."""
    d = Path(directory)
    files: dict[str, str] = {}
    vol_rows = []
    for r in report.rows:
        vol_rows.append([r.patient_id, _num(r.esv_actual), _num(r.esv_pred), _num(r.edv_actual),
                         _num(r.edv_pred), _num(r.ef_actual), _num(r.ef_pred),
                         _num(r.esv_pred - r.esv_actual), _num(r.edv_pred - r.edv_actual),
                         _num(r.ef_pred - r.ef_actual), ef_class(r.ef_actual, report.bands),
                         ef_class(r.ef_pred, report.bands), ";".join(sorted(r.flags))])
    files["volumes.csv"] = _csv_text(VOLUME_FIELDS, vol_rows)
    for q in ("esv", "edv", "ef"):
        pairs = [(r.patient_id, getattr(r, f"{q}_actual"), getattr(r, f"{q}_pred")) for r in report.rows]
        files[f"scatter_{q}.csv"] = _csv_text(
            ("patient_id", "actual", "predicted"), [(p, _num(a), _num(b)) for p, a, b in pairs])
        files[f"residuals_{q}.csv"] = _csv_text(
            ("patient_id", "actual", "residual"), [(p, _num(a), _num(b - a)) for p, a, b in pairs])
    files["summary.json"] = json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"
    try:
        d.mkdir(parents=True, exist_ok=True)
        out = []
        for name in sorted(files):
            _write(d / name, files[name])
            out.append(d / name)
    except OSError as exc:
        raise StudyIOError(f"cannot write report to {d}: {exc}") from exc
    return out
