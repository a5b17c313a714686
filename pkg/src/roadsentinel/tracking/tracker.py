"""Two-stage (ByteTrack) and single-stage (SORT) multi-object tracking."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..geometry import BBox, iou_matrix
from .assignment import assign
from .kalman import KalmanState, kalman_initiate, kalman_predict, kalman_update


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    score: float
    cls: str = "car"

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")


@dataclass
class TrackerParams:
    high_thresh: float = 0.5
    low_thresh: float = 0.1
    match_max_cost: float = 0.8  # stage 1, cost = 1 - IoU
    low_match_max_cost: float = 0.5  # stage 2
    tentative_max_cost: float = 0.7
    min_hits: int = 3
    track_buffer: int = 30
    mode: str = "bytetrack"  # or "sort": high-score detections only

    def __post_init__(self):
        if not 0.0 <= self.low_thresh <= self.high_thresh <= 1.0:
            raise ValueError("need 0 <= low_thresh <= high_thresh <= 1")
        for name in ("match_max_cost", "low_match_max_cost", "tentative_max_cost"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.min_hits < 1 or self.track_buffer < 0:
            raise ValueError("min_hits must be >= 1 and track_buffer >= 0")
        if self.mode not in ("bytetrack", "sort"):
            raise ValueError(f"unknown tracker mode {self.mode!r}")


@dataclass
class Track:
    id: int
    state: KalmanState
    status: TrackStatus
    cls: str
    last_score: float
    hits: int = 1
    frames_since_update: int = 0
    age: int = 1

    @property
    def bbox(self) -> BBox:
        return self.state.bbox()

    @property
    def is_active(self) -> bool:
        return self.status is not TrackStatus.REMOVED


def _match(tracks: list[Track], dets: list[Detection], max_cost: float):
    if not tracks or not dets:
        return [], list(range(len(tracks))), list(range(len(dets)))
    cost = 1.0 - iou_matrix([t.bbox for t in tracks], [d.bbox for d in dets])
    result = assign(cost, max_cost)
    return result.pairs, result.unmatched_rows, result.unmatched_cols


@dataclass
class Tracker:
    """Owns the tracks of one detection stream; call `step` once per frame in order.

    `step` returns one label per input detection: the ID of the track it was
    associated with (tentative tracks included) or None.
    """

    params: TrackerParams = field(default_factory=TrackerParams)
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1
    frame_count: int = 0

    def _spawn(self, det: Detection) -> Track:
        track = Track(
            id=self.next_id,
            state=kalman_initiate(det.bbox.to_xyah()),
            status=TrackStatus.TENTATIVE,
            cls=det.cls,
            last_score=det.score,
        )
        self.next_id += 1
        if track.hits >= self.params.min_hits:
            track.status = TrackStatus.CONFIRMED
        return track

    def _absorb(self, track: Track, det: Detection) -> None:
        track.state = kalman_update(track.state, det.bbox)
        track.last_score = det.score
        track.frames_since_update = 0
        track.hits += 1
        if track.status is TrackStatus.LOST:
            track.status = TrackStatus.CONFIRMED
        elif track.status is TrackStatus.TENTATIVE and track.hits >= self.params.min_hits:
            track.status = TrackStatus.CONFIRMED

    def step(self, detections: list[Detection]) -> list[int | None]:
        p = self.params
        self.frame_count += 1
        labels: list[int | None] = [None] * len(detections)

        live = [t for t in self.tracks if t.is_active]
        for t in live:
            t.state = kalman_predict(t.state, freeze_height_velocity=t.status is not TrackStatus.CONFIRMED)
            t.frames_since_update += 1
            t.age += 1

        high = [i for i, d in enumerate(detections) if d.score >= p.high_thresh]
        low = [i for i, d in enumerate(detections) if p.low_thresh <= d.score < p.high_thresh]

        pool = [t for t in live if t.status in (TrackStatus.CONFIRMED, TrackStatus.LOST)]
        tentative = [t for t in live if t.status is TrackStatus.TENTATIVE]

        # stage 1: high-score detections against confirmed and lost tracks
        pairs, rest_t, rest_d = _match(pool, [detections[i] for i in high], p.match_max_cost)
        for ti, di in pairs:
            self._absorb(pool[ti], detections[high[di]])
            labels[high[di]] = pool[ti].id
        leftover_high = [high[di] for di in rest_d]
        remaining = [pool[ti] for ti in rest_t]

        if p.mode == "sort":
            low = []

        # stage 2: low-score detections rescue tracks that were being followed
        followed = [t for t in remaining if t.status is TrackStatus.CONFIRMED]
        pairs, _, rest_low = _match(followed, [detections[i] for i in low], p.low_match_max_cost)
        for ti, di in pairs:
            self._absorb(followed[ti], detections[low[di]])
            labels[low[di]] = followed[ti].id
        rescued = {followed[ti].id for ti, _ in pairs}
        remaining = [t for t in remaining if t.id not in rescued]
        low = [low[di] for di in rest_low]

        for t in remaining:
            if t.status is TrackStatus.CONFIRMED:
                t.status = TrackStatus.LOST

        # unconfirmed tracks need consecutive hits: leftover high-score detections
        # first, then the unused low-score ones; a miss removes them
        pairs, rest_t, rest_d = _match(tentative, [detections[i] for i in leftover_high], p.tentative_max_cost)
        for ti, di in pairs:
            self._absorb(tentative[ti], detections[leftover_high[di]])
            labels[leftover_high[di]] = tentative[ti].id
        leftover_high = [leftover_high[di] for di in rest_d]
        tentative = [tentative[ti] for ti in rest_t]
        pairs, rest_t, _ = _match(tentative, [detections[i] for i in low], p.low_match_max_cost)
        for ti, di in pairs:
            self._absorb(tentative[ti], detections[low[di]])
            labels[low[di]] = tentative[ti].id
        for ti in rest_t:
            tentative[ti].status = TrackStatus.REMOVED

        for di in leftover_high:
            track = self._spawn(detections[di])
            self.tracks.append(track)
            labels[di] = track.id

        for t in self.tracks:
            if t.status is TrackStatus.LOST and t.frames_since_update > p.track_buffer:
                t.status = TrackStatus.REMOVED

        return labels

    def prune(self) -> list[Track]:
        """Drop removed tracks from the working set and return them."""
        removed = [t for t in self.tracks if t.status is TrackStatus.REMOVED]
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.REMOVED]
        return removed


def track_step(tracker: Tracker, detections: list[Detection]) -> tuple[list[Track], list[int | None]]:
    """Functional form of `Tracker.step`: returns the live tracks and detection labels."""
    labels = tracker.step(detections)
    return [t for t in tracker.tracks if t.is_active], labels
