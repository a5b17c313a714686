"""Evaluation: speed error against truth, detector mAP@0.5, batch CER."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from ..geometry import BBox, iou
from ..plates import cer
from ..reports import TrackReport
from .streams import GunRecord, VehicleTruth

SPEED_MARGIN_KMH = 10.0
MAP_IOU = 0.5


class NoMatches(ValueError):
    pass


class NoGroundTruth(ValueError):
    pass


@dataclass
class SpeedRow:
    truth_id: str
    track_id: int
    estimated_kmh: float
    truth_kmh: float

    @property
    def abs_error(self) -> float:
        return abs(self.estimated_kmh - self.truth_kmh)


@dataclass
class SpeedEvaluation:
    rows: list[SpeedRow]
    unmatched: list[str] = field(default_factory=list)
    ambiguous: list[str] = field(default_factory=list)
    margin_kmh: float = SPEED_MARGIN_KMH

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.abs_error for r in self.rows])

    @property
    def mae(self) -> float:
        return float(self.errors.mean())

    @property
    def max_abs_error(self) -> float:
        return float(self.errors.max())

    @property
    def fraction_within(self) -> float:
        return float(np.mean(self.errors <= self.margin_kmh))

    def within(self, row: SpeedRow) -> bool:
        return row.abs_error <= self.margin_kmh

    def to_dict(self) -> dict:
        return {
            "mae_kmh": self.mae,
            "max_abs_error_kmh": self.max_abs_error,
            "fraction_within_margin": self.fraction_within,
            "margin_kmh": self.margin_kmh,
            "matched": len(self.rows),
            "unmatched": self.unmatched,
            "ambiguous": self.ambiguous,
            "vehicles": [
                {
                    "truth_id": r.truth_id,
                    "track_id": r.track_id,
                    "estimated_kmh": r.estimated_kmh,
                    "truth_kmh": r.truth_kmh,
                    "abs_error_kmh": r.abs_error,
                    "within_margin": self.within(r),
                }
                for r in self.rows
            ],
        }

    def summary_table(self) -> str:
        lines = [f"{'truth':>10} {'track':>6} {'est km/h':>9} {'true km/h':>10} {'|err|':>7}  ok"]
        for r in self.rows:
            lines.append(
                f"{r.truth_id:>10} {r.track_id:>6} {r.estimated_kmh:9.2f} {r.truth_kmh:10.2f} "
                f"{r.abs_error:7.2f}  {'yes' if self.within(r) else 'NO'}"
            )
        lines.append(
            f"matched {len(self.rows)}  unmatched {len(self.unmatched)}  ambiguous {len(self.ambiguous)}  "
            f"MAE {self.mae:.2f} km/h  max {self.max_abs_error:.2f} km/h  "
            f"within +/-{self.margin_kmh:g}: {self.fraction_within:.1%}"
        )
        return "\n".join(lines)


def _frame_overlap(r: TrackReport, t: VehicleTruth) -> int:
    return max(0, min(r.last_frame, t.last_frame) - max(r.first_frame, t.first_frame) + 1)


def _match_synthetic(reports: list[TrackReport], truth: Sequence[VehicleTruth]):
    rows, unmatched, ambiguous = [], [], []
    claimed: set[int] = set()
    pending = []
    # plate identity is decisive when the engine read one
    for t in truth:
        by_plate = [r for r in reports if r.plate == t.plate and r.track_id not in claimed]
        if by_plate:
            best = max(by_plate, key=lambda r: (len(r.speed_samples), _frame_overlap(r, t), -r.track_id))
            claimed.update(r.track_id for r in by_plate)
            rows.append(SpeedRow(str(t.vehicle_id), best.track_id, best.assigned_speed, t.speed_kmh))
        else:
            pending.append(t)
    for t in pending:
        cands = [(r, _frame_overlap(r, t)) for r in reports if r.plate is None and r.track_id not in claimed]
        cands = [(r, ov) for r, ov in cands if ov > 0]
        if not cands:
            unmatched.append(str(t.vehicle_id))
            continue
        top = max(ov for _, ov in cands)
        best = [r for r, ov in cands if ov == top]
        if len(best) > 1:
            ambiguous.append(str(t.vehicle_id))
            continue
        claimed.add(best[0].track_id)
        rows.append(SpeedRow(str(t.vehicle_id), best[0].track_id, best[0].assigned_speed, t.speed_kmh))
    return rows, unmatched, ambiguous


def _match_gun(reports: list[TrackReport], truth: Sequence[GunRecord], window_ms: float):
    rows, unmatched, ambiguous = [], [], []
    for g in truth:
        hits = [
            r
            for r in reports
            if r.first_timestamp_ms - window_ms <= g.timestamp_ms <= r.last_timestamp_ms + window_ms
        ]
        if not hits:
            unmatched.append(g.serial)
        elif len(hits) > 1:
            ambiguous.append(g.serial)
        else:
            rows.append(SpeedRow(g.serial, hits[0].track_id, hits[0].assigned_speed, g.measured_speed))
    return rows, unmatched, ambiguous


def evaluate_speeds(
    reports: Iterable[TrackReport],
    truth: Sequence[VehicleTruth] | Sequence[GunRecord],
    match_window_ms: float = 0.0,
    margin_kmh: float = SPEED_MARGIN_KMH,
) -> SpeedEvaluation:
    """Compare assigned track speeds with commanded speeds or speed-gun readings.

    Synthetic truth is matched through the plate identity, falling back to the
    best frame overlap among plate-less tracks. A gun record matches the one
    track whose observation interval (widened by `match_window_ms`) contains
    its timestamp; several candidates make it ambiguous, never guessed.
    """
    if not truth:
        raise NoMatches("no truth records given")
    scored = [r for r in reports if r.assigned_speed is not None]
    if all(isinstance(t, VehicleTruth) for t in truth):
        rows, unmatched, ambiguous = _match_synthetic(scored, truth)
    elif all(isinstance(t, GunRecord) for t in truth):
        rows, unmatched, ambiguous = _match_gun(scored, truth, match_window_ms)
    else:
        raise TypeError("truth must be all VehicleTruth or all GunRecord")
    if not rows:
        raise NoMatches(f"none of {len(truth)} truth records matched a track")
    rows.sort(key=lambda r: (r.truth_id.zfill(12), r.track_id))
    return SpeedEvaluation(rows, sorted(unmatched), sorted(ambiguous), margin_kmh)


@dataclass(frozen=True)
class Prediction:
    image: Hashable
    bbox: BBox
    score: float
    cls: str = "plate"


def _ap_all_points(recall: np.ndarray, precision: np.ndarray) -> float:
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def average_precision(
    ground_truth: Mapping[Hashable, Sequence[BBox]], predictions: Sequence[Prediction], iou_threshold: float = MAP_IOU
) -> float:
    """Single-class AP with all-point interpolation."""
    n_gt = sum(len(v) for v in ground_truth.values())
    if n_gt == 0:
        raise NoGroundTruth("average precision needs at least one ground-truth box")
    used = {img: [False] * len(boxes) for img, boxes in ground_truth.items()}
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    tp = np.zeros(len(order))
    for rank, i in enumerate(order):
        p = predictions[i]
        boxes = ground_truth.get(p.image, ())
        best_j, best_iou = -1, iou_threshold
        for j, g in enumerate(boxes):
            if used[p.image][j]:
                continue
            ov = iou(p.bbox, g)
            if ov >= best_iou and (best_j < 0 or ov > best_iou):
                best_j, best_iou = j, ov
        if best_j >= 0:
            used[p.image][best_j] = True
            tp[rank] = 1.0
    if not len(order):
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(order) + 1)
    return _ap_all_points(recall, precision)


def map50(
    ground_truth: Mapping[Hashable, Sequence[BBox | tuple[str, BBox]]], predictions: Sequence[Prediction]
) -> float:
    """Mean over ground-truth classes of AP at IoU 0.5.

    Ground-truth entries are plain boxes (class ``"plate"``) or (class, box).
    """
    per_class: dict[str, dict[Hashable, list[BBox]]] = defaultdict(lambda: defaultdict(list))
    for img, boxes in ground_truth.items():
        for b in boxes:
            cls, box = b if isinstance(b, tuple) else ("plate", b)
            per_class[cls][img].append(box)
    if not per_class:
        raise NoGroundTruth("mAP needs at least one ground-truth box")
    aps = []
    for cls in sorted(per_class):
        preds = [p for p in predictions if p.cls == cls]
        aps.append(average_precision(per_class[cls], preds, MAP_IOU))
    return float(np.mean(aps))


def cer_batch(pairs: Iterable[tuple[str, str]]) -> float:
    """Mean per-pair CER over (predicted, truth) pairs."""
    values = [cer(pred, truth) for pred, truth in pairs]
    if not values:
        raise ValueError("cer_batch needs at least one pair")
    return float(np.mean(values))
