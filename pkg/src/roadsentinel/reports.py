"""Per-track output records written by the engine and read by the evaluator."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable


@dataclass
class TrackReport:
    track_id: int
    cls: str
    first_frame: int
    last_frame: int
    first_timestamp_ms: float
    last_timestamp_ms: float
    n_detections: int
    plate: str | None = None
    plate_confidence: float | None = None
    plate_votes: int = 0
    speed_samples: list[tuple[int, float]] = field(default_factory=list)
    assigned_speed: float | None = None
    policy: str = "max"
    violation: bool = False
    ticket_id: str | None = None
    owner: dict | None = None

    def __post_init__(self):
        if (self.assigned_speed is None) != (not self.speed_samples):
            raise ValueError("assigned_speed must be present exactly when speed samples exist")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class"] = d.pop("cls")
        d["speed_samples"] = [list(s) for s in self.speed_samples]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrackReport":
        d = dict(d)
        d["cls"] = d.pop("class")
        d["speed_samples"] = [(int(f), float(v)) for f, v in d.get("speed_samples", [])]
        return cls(**d)


def write_reports(reports: Iterable[TrackReport], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict()) + "\n")


def read_reports(path: str | Path) -> list[TrackReport]:
    with open(path, encoding="utf-8") as fh:
        return [TrackReport.from_dict(json.loads(line)) for line in fh if line.strip()]
