"""End-to-end engine: detections -> tracks -> (plates || speeds) -> reports -> tickets."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .config import EngineConfig
from .enforcement import (
    DeliveryState,
    TicketIssuer,
    TicketLog,
    ViolationTicket,
    deliver_ticket,
    detect_violation,
    make_ticket,
)
from .geometry import BBox
from .plates import PlateObservation, aggregate_identity, match_plate_to_vehicle
from .reports import TrackReport
from .sim.streams import FrameRecord
from .speed import AnchorHistory, assign_speed, instantaneous_speed
from .tracking import Detection, Tracker, TrackStatus

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, frame: int, stage: str, cause: Exception):
        super().__init__(f"frame {frame}, stage {stage}: {type(cause).__name__}: {cause}")
        self.frame = frame
        self.stage = stage


@dataclass
class _TrackData:
    track_id: int
    cls: str
    history: AnchorHistory
    first_frame: int
    first_ts: float
    last_frame: int = -1
    last_ts: float = 0.0
    n_detections: int = 0
    confirmed: bool = False
    samples: list[tuple[int, float, float]] = field(default_factory=list)  # frame, km/h, timestamp
    plates: list[PlateObservation] = field(default_factory=list)


class Engine:
    """One sequential pipeline instance per detection stream."""

    def __init__(self, config: EngineConfig, issuer: TicketIssuer | None = None):
        self.config = config
        self.cal = config.calibration
        self.window, self.min_samples = config.speed.resolved(self.cal.fps)
        self.tracker = Tracker(config.tracker)
        self.issuer = issuer or TicketIssuer()
        self.reports: list[TrackReport] = []
        self.tickets: list[ViolationTicket] = []
        self._tracks: dict[int, _TrackData] = {}
        self._last_frame: int | None = None

    def process(self, frame: FrameRecord) -> dict:
        """Consume one frame; returns its annotation record."""
        stage = "filter"
        try:
            vehicles = [
                d
                for d in frame.detections
                if d.cls in self.config.vehicle_classes and d.score >= self.config.tracker.low_thresh
            ]
            stage = "tracking"
            labels = self.tracker.step([Detection(d.bbox, d.score, d.cls) for d in vehicles])

            stage = "speed"
            objects = []
            boxes: list[tuple[int, BBox]] = []
            for det, tid in zip(vehicles, labels):
                if tid is None:
                    continue
                td = self._tracks.get(tid)
                if td is None:
                    td = _TrackData(tid, det.cls, AnchorHistory(self.window), frame.frame_index, frame.timestamp_ms)
                    self._tracks[tid] = td
                td.last_frame, td.last_ts = frame.frame_index, frame.timestamp_ms
                td.n_detections += 1
                live = None
                if td.history.push(frame.frame_index, det.bbox, self.cal):
                    sample = instantaneous_speed(td.history, self.cal, self.min_samples, self.config.speed.axis_only)
                    if sample is not None:
                        td.samples.append((sample.frame_index, sample.speed_kmh, frame.timestamp_ms))
                        live = sample.speed_kmh
                boxes.append((tid, det.bbox))
                objects.append({"track_id": tid, "class": det.cls, "bbox": det.bbox.to_list(), "score": det.score, "speed_kmh": live})

            stage = "plates"
            for d in frame.detections:
                if d.plate is None:
                    continue
                tid = match_plate_to_vehicle(d.plate.bbox, boxes)
                if tid is not None:
                    self._tracks[tid].plates.append(
                        PlateObservation(d.plate.bbox, d.plate.text, d.plate.text_score, frame.frame_index)
                    )

            for t in self.tracker.tracks:
                if t.status is TrackStatus.CONFIRMED and t.id in self._tracks:
                    self._tracks[t.id].confirmed = True

            stage = "integration"
            for t in self.tracker.prune():
                self._finalize(t.id)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(frame.frame_index, stage, exc) from exc
        self._last_frame = frame.frame_index
        return {"frame": frame.frame_index, "timestamp_ms": frame.timestamp_ms, "objects": objects}

    def finish(self) -> list[TrackReport]:
        """Close every remaining track; returns all reports ordered by track id."""
        for tid in sorted(self._tracks):
            self._finalize(tid)
        self.reports.sort(key=lambda r: r.track_id)
        return self.reports

    def _finalize(self, tid: int) -> None:
        td = self._tracks.pop(tid, None)
        if td is None or not td.confirmed:
            return
        cfg = self.config
        identity = aggregate_identity(td.plates, cfg.grammar)
        owner = None
        if identity is not None and cfg.registry is not None:
            owner = cfg.registry.get(identity.text)
        assigned = assign_speed([s[1] for s in td.samples], cfg.speed.policy) if td.samples else None
        violation = assigned is not None and detect_violation(assigned, self.cal, cfg.margin_kmh)
        ticket_id = None
        if violation:
            if identity is None:
                log.warning("track %d exceeded the limit but has no readable plate", tid)
            else:
                ticket = make_ticket(
                    plate=identity.text,
                    track_id=tid,
                    estimated_speed=assigned,
                    cal=self.cal,
                    timestamp_ms=td.samples[-1][2],
                    policy=cfg.speed.policy.value,
                    cooldown_s=cfg.cooldown_s,
                    owner=owner,
                )
                ticket = self.issuer.issue(ticket)
                self.tickets.append(ticket)
                ticket_id = ticket.ticket_id
        self.reports.append(
            TrackReport(
                track_id=tid,
                cls=td.cls,
                first_frame=td.first_frame,
                last_frame=td.last_frame,
                first_timestamp_ms=td.first_ts,
                last_timestamp_ms=td.last_ts,
                n_detections=td.n_detections,
                plate=identity.text if identity else None,
                plate_confidence=identity.confidence if identity else None,
                plate_votes=identity.votes if identity else 0,
                speed_samples=[(f, v) for f, v, _ in td.samples],
                assigned_speed=assigned,
                policy=cfg.speed.policy.value,
                violation=violation,
                ticket_id=ticket_id,
                owner=owner.to_dict() if owner else None,
            )
        )


@dataclass
class RunResult:
    reports: list[TrackReport]
    tickets: list[ViolationTicket]
    output_dir: Path

    @property
    def failed(self) -> list[ViolationTicket]:
        return [t for t in self.tickets if t.delivery_state is DeliveryState.FAILED]


def run_stream(
    frames: Iterable[FrameRecord],
    config: EngineConfig,
    output_dir: str | Path,
    send: bool = True,
    sms_kwargs: dict | None = None,
) -> RunResult:
    """Run a stream through the engine, writing tracks.jsonl, annotations.jsonl and tickets.jsonl.

    The ticket log is appended to, never rewritten; tickets already in it
    suppress repeats. When a gateway is configured and `send` is set, new
    Pending tickets are delivered and their outcome appended.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ticket_log = TicketLog(out / "tickets.jsonl")
    ticket_log.path.touch()
    engine = Engine(config, issuer=ticket_log.issuer())
    with open(out / "annotations.jsonl", "w", encoding="utf-8") as ann:
        for frame in frames:
            ann.write(json.dumps(engine.process(frame)) + "\n")
    reports = engine.finish()
    with open(out / "tracks.jsonl", "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict()) + "\n")

    final = []
    for ticket in engine.tickets:
        ticket_log.append(ticket)
        if send and config.gateway is not None and ticket.delivery_state is DeliveryState.PENDING:
            ticket = deliver_ticket(ticket, config.gateway, **(sms_kwargs or {}))
            ticket_log.append(ticket)
        final.append(ticket)
    return RunResult(reports, final, out)


def send_pending(
    ticket_log: TicketLog,
    gateway,
    registry=None,
    sms_kwargs: dict | None = None,
) -> list[ViolationTicket]:
    """Deliver every Pending ticket in the log, appending the outcome.

    Owner contact details are refreshed from `registry` when one is given.
    Re-running after success sends nothing.
    """
    results = []
    for ticket in ticket_log.current().values():
        if ticket.delivery_state is not DeliveryState.PENDING:
            continue
        if registry is not None:
            owner = registry.get(ticket.plate)
            if owner is None:
                updated = ticket.with_state(DeliveryState.SUPPRESSED, detail="owner not found in registry")
                ticket_log.append(updated)
                results.append(updated)
                continue
            ticket = ticket.with_state(ticket.delivery_state, owner=owner)
        updated = deliver_ticket(ticket, gateway, **(sms_kwargs or {}))
        ticket_log.append(updated)
        results.append(updated)
    return results
