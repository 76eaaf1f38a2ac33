"""Index extraction, rejection logic, and evaluation metrics.

Regression-mode extraction scans the per-frame signal for zero crossings:
an ED is the argmax of a positive run bounded by crossings on both sides,
an ES the argmin of a bounded negative run. Lone tail extrema (runs touching
the sequence ends) are discarded as edge artifacts. A video is rejected when
either extremum kind yields no index. Classification mode takes the centers
of maximal argmax-class runs instead.

Full videos carry one label per kind but the network predicts every beat, so
frame distances use the nearest predicted index; reports also count how many
videos produced multiple beats, since nearest-match is a choice the distance
depends on.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .heads import CLASS_ED, CLASS_ES


@dataclass
class ExtractedIndices:
    es_indices: list[int]
    ed_indices: list[int]
    rejected: bool


@dataclass
class VideoResult:
    """Per-video evaluation row."""

    video_id: str
    pred_es: int | None
    pred_ed: int | None
    gt_es: int
    gt_ed: int
    afd_es: float | None
    afd_ed: float | None
    ef_pred: float
    ef_gt: float
    rejected: bool
    multi_beat: bool = False
    bpm: float | None = None


@dataclass
class MetricsReport:
    afd_es: float | None
    afd_ed: float | None
    std_es: float | None
    std_ed: float | None
    mae: float | None
    rmse: float | None
    r2: float | None
    rejected_count: int
    bpm_mean: float | None
    multi_beat_count: int = 0
    rows: list[VideoResult] = field(default_factory=list)


def _bounded_runs(signs: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal same-sign runs as (start, end, sign), ends inclusive."""
    runs = []
    start = 0
    for i in range(1, len(signs) + 1):
        if i == len(signs) or signs[i] != signs[start]:
            runs.append((start, i - 1, int(signs[start])))
            start = i
    return runs


def extract_indices(sd_output: np.ndarray, mask: np.ndarray | None = None,
                    mode: str = "regression") -> ExtractedIndices:
    """Locate predicted ES/ED frame indices in an SD branch output.

    Regression: sd_output is the per-frame signal. Classification: sd_output
    is the (3, n) probability matrix. Indices refer to positions in the full
    sequence; masked positions are skipped. Rejection is a result, never an
    error.
    """
    sd_output = np.asarray(sd_output)
    n = sd_output.shape[-1]
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    positions = mask.nonzero()[0]

    es: list[int] = []
    ed: list[int] = []
    if mode == "regression":
        signal = sd_output[positions]
        signs = np.where(signal >= 0.0, 1, -1)
        runs = _bounded_runs(signs)
        for k in range(1, len(runs) - 1):     # interior runs have crossings both sides
            start, end, sign = runs[k]
            seg = signal[start:end + 1]
            if sign > 0:
                ed.append(int(positions[start + int(np.argmax(seg))]))
            else:
                es.append(int(positions[start + int(np.argmin(seg))]))
    elif mode == "classification":
        classes = np.argmax(sd_output[:, positions], axis=0)
        runs = _bounded_runs(classes)
        for start, end, cls in runs:
            center = int(positions[(start + end) // 2])
            if cls == CLASS_ES:
                es.append(center)
            elif cls == CLASS_ED:
                ed.append(center)
    else:
        raise ValidationError(f"unknown extraction mode {mode!r}")

    rejected = len(es) == 0 or len(ed) == 0
    return ExtractedIndices(es_indices=es, ed_indices=ed, rejected=rejected)


def nearest_match(predicted: list[int], gt_index: int) -> tuple[float, int]:
    """(frame distance, matched predicted index); ties go to the lower index."""
    if not predicted:
        raise ValidationError("nearest_match: empty prediction list")
    best = min(predicted, key=lambda p: (abs(p - gt_index), p))
    return float(abs(best - gt_index)), best


def afd_summary(distances: list[float]) -> tuple[float | None, float | None]:
    """Mean and population standard deviation of the per-video frame distances."""
    if not distances:
        return None, None
    arr = np.asarray(distances, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def ef_metrics(pairs: list[tuple[float, float]]):
    """(MAE, RMSE, R^2) for (prediction, ground truth) pairs on the 0-100 scale.

    R^2 is None when the ground truth has zero variance (undefined).
    """
    if not pairs:
        return None, None, None
    p = np.array([a for a, _ in pairs], dtype=np.float64)
    y = np.array([b for _, b in pairs], dtype=np.float64)
    err = p - y
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err * err).mean()))
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = None if ss_tot == 0.0 else float(1.0 - (err * err).sum() / ss_tot)
    return mae, rmse, r2


def heart_rate(ed_indices: list[int], fps: float) -> float | None:
    """Beats per minute from consecutive predicted ED spacings; None if < 2 EDs."""
    if len(ed_indices) < 2:
        return None
    spacing = np.diff(np.sort(np.asarray(ed_indices, dtype=np.float64))).mean()
    return float(60.0 * fps / spacing)


def lvef_from_volumes(edv: float, esv: float, divisor: str = "EDV") -> float:
    """EF percent from volumes. divisor 'EDV' is the standard clinical
    definition; 'ESV' reproduces the alternative stroke/ESV ratio."""
    if not edv > esv > 0:
        raise ValidationError(f"need edv > esv > 0, got edv={edv}, esv={esv}")
    if divisor == "EDV":
        den = edv
    elif divisor == "ESV":
        den = esv
    else:
        raise ValidationError(f"divisor must be 'EDV' or 'ESV', got {divisor!r}")
    return (edv - esv) / den * 100.0


def summarize(rows: list[VideoResult]) -> MetricsReport:
    """Aggregate per-video rows into the dataset-level report."""
    scored = [r for r in rows if not r.rejected]
    afd_es, std_es = afd_summary([r.afd_es for r in scored if r.afd_es is not None])
    afd_ed, std_ed = afd_summary([r.afd_ed for r in scored if r.afd_ed is not None])
    mae, rmse, r2 = ef_metrics([(r.ef_pred, r.ef_gt) for r in rows])
    bpms = [r.bpm for r in rows if r.bpm is not None]
    return MetricsReport(
        afd_es=afd_es, afd_ed=afd_ed, std_es=std_es, std_ed=std_ed,
        mae=mae, rmse=rmse, r2=r2,
        rejected_count=sum(r.rejected for r in rows),
        bpm_mean=float(np.mean(bpms)) if bpms else None,
        multi_beat_count=sum(r.multi_beat for r in rows),
        rows=rows,
    )


_CSV_COLUMNS = ["id", "pred_es", "pred_ed", "gt_es", "gt_ed",
                "afd_es", "afd_ed", "ef_pred", "ef_gt", "rejected"]


def report_to_csv(report: MetricsReport) -> str:
    """One row per video plus a trailing summary row."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(_CSV_COLUMNS)

    def fmt(v):
        return "" if v is None else v

    for r in report.rows:
        writer.writerow([r.video_id, fmt(r.pred_es), fmt(r.pred_ed), r.gt_es, r.gt_ed,
                         fmt(r.afd_es), fmt(r.afd_ed), r.ef_pred, r.ef_gt, int(r.rejected)])
    writer.writerow(["SUMMARY", fmt(report.afd_es), fmt(report.afd_ed), "", "",
                     fmt(report.std_es), fmt(report.std_ed),
                     fmt(report.mae), fmt(report.rmse), report.rejected_count])
    return buf.getvalue()
