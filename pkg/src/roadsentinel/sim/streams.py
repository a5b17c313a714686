"""Detection stream (JSON lines) and truth tables (CSV).

One stream line per frame::

    {"frame": 12, "timestamp_ms": 1700000000480.0,
     "detections": [{"class": "car", "score": 0.91, "bbox": [x1, y1, x2, y2]},
                    {"class": "plate", "score": 0.88, "bbox": [...],
                     "plate": {"bbox": [...], "text": "UBA123C", "text_score": 0.95}}]}
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import IO, Iterable, Iterator

from ..geometry import BBox, GeometryError


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class MonotonicityViolation(ParseError):
    pass


@dataclass(frozen=True)
class PlatePayload:
    bbox: BBox
    text: str
    text_score: float


@dataclass(frozen=True)
class StreamDetection:
    cls: str
    score: float
    bbox: BBox
    plate: PlatePayload | None = None


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    timestamp_ms: float
    detections: tuple[StreamDetection, ...] = ()

    def to_dict(self) -> dict:
        dets = []
        for d in self.detections:
            item = {"class": d.cls, "score": d.score, "bbox": d.bbox.to_list()}
            if d.plate is not None:
                item["plate"] = {"bbox": d.plate.bbox.to_list(), "text": d.plate.text, "text_score": d.plate.text_score}
            dets.append(item)
        return {"frame": self.frame_index, "timestamp_ms": self.timestamp_ms, "detections": dets}


def _unit(value, what: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{what} {v} outside [0, 1]")
    return v


def frame_from_dict(d: dict) -> FrameRecord:
    dets = []
    for item in d["detections"]:
        plate = None
        if item.get("plate") is not None:
            p = item["plate"]
            plate = PlatePayload(BBox.from_seq(p["bbox"]), str(p["text"]), _unit(p["text_score"], "text_score"))
        dets.append(StreamDetection(str(item["class"]), _unit(item["score"], "score"), BBox.from_seq(item["bbox"]), plate))
    frame = d["frame"]
    if not isinstance(frame, int) or isinstance(frame, bool):
        raise ValueError(f"frame index must be an integer, got {frame!r}")
    ts = float(d["timestamp_ms"])
    if not math.isfinite(ts):
        raise ValueError("timestamp_ms must be finite")
    return FrameRecord(frame, ts, tuple(dets))


def _lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    elif isinstance(source, (bytes, bytearray)):
        yield from io.StringIO(source.decode("utf-8"))
    else:
        for line in source:
            yield line.decode("utf-8") if isinstance(line, (bytes, bytearray)) else line


def parse_stream(source: str | Path | bytes | IO | Iterable[str]) -> Iterator[FrameRecord]:
    """Lazily parse a detection stream, checking frame and timestamp order."""
    prev: FrameRecord | None = None
    for lineno, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        try:
            frame = frame_from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, GeometryError) as exc:
            raise ParseError(lineno, f"{type(exc).__name__}: {exc}") from None
        if prev is not None:
            if frame.frame_index <= prev.frame_index:
                raise MonotonicityViolation(lineno, f"frame {frame.frame_index} after {prev.frame_index}")
            if frame.timestamp_ms < prev.timestamp_ms:
                raise MonotonicityViolation(lineno, "timestamp decreased")
        prev = frame
        yield frame


def dump_frame(frame: FrameRecord) -> str:
    return json.dumps(frame.to_dict(), separators=(",", ":"))


def write_stream(frames: Iterable[FrameRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in frames:
            fh.write(dump_frame(f) + "\n")


@dataclass(frozen=True)
class GunRecord:
    """Speed-gun ground truth exported from the officer's device."""

    serial: str
    timestamp_ms: float
    measured_distance: float
    measured_speed: float
    n_frames: int = 0

    def __post_init__(self):
        if self.measured_speed < 0:
            raise ValueError("measured speed must be non-negative")
        if not 0 <= self.n_frames < 8:
            raise ValueError("speed-gun clips hold fewer than eight frames")


@dataclass(frozen=True)
class VehicleTruth:
    vehicle_id: int
    plate: str
    speed_kmh: float
    lane_offset_m: float
    first_frame: int
    last_frame: int
    roi_entry_frame: int | None
    roi_exit_frame: int | None
    first_timestamp_ms: float
    last_timestamp_ms: float


GUN_HEADER = ["serial", "timestamp_ms", "measured_distance_m", "measured_speed_kmh", "n_frames"]
TRUTH_HEADER = [f.name for f in fields(VehicleTruth)]


def write_truth(rows: Iterable[VehicleTruth], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for r in rows:
            w.writerow(["" if v is None else v for v in asdict(r).values()])


def _opt_int(s: str) -> int | None:
    return None if s == "" else int(s)


def read_truth(path: str | Path) -> list[VehicleTruth] | list[GunRecord]:
    """Read either a synthetic truth table or a speed-gun export, by header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    try:
        if header == TRUTH_HEADER:
            return [
                VehicleTruth(
                    vehicle_id=int(r["vehicle_id"]),
                    plate=r["plate"],
                    speed_kmh=float(r["speed_kmh"]),
                    lane_offset_m=float(r["lane_offset_m"]),
                    first_frame=int(r["first_frame"]),
                    last_frame=int(r["last_frame"]),
                    roi_entry_frame=_opt_int(r["roi_entry_frame"]),
                    roi_exit_frame=_opt_int(r["roi_exit_frame"]),
                    first_timestamp_ms=float(r["first_timestamp_ms"]),
                    last_timestamp_ms=float(r["last_timestamp_ms"]),
                )
                for r in rows
            ]
        if header[: len(GUN_HEADER)] == GUN_HEADER:
            return [
                GunRecord(
                    serial=r["serial"],
                    timestamp_ms=float(r["timestamp_ms"]),
                    measured_distance=float(r["measured_distance_m"]),
                    measured_speed=float(r["measured_speed_kmh"]),
                    n_frames=int(r["n_frames"] or 0),
                )
                for r in rows
            ]
    except (KeyError, ValueError) as exc:
        raise ParseError(0, f"{path}: {exc}") from None
    raise ParseError(1, f"{path}: unrecognised truth header {header}")


def write_gun_records(rows: Iterable[GunRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GUN_HEADER)
        for r in rows:
            w.writerow([r.serial, r.timestamp_ms, r.measured_distance, r.measured_speed, r.n_frames])
