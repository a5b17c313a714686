"""Violation detection, idempotent ticket ids and the append-only ticket log."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import threading
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from .registry import RegistryEntry

DEFAULT_MARGIN_KMH = 10.0
DEFAULT_COOLDOWN_S = 600.0
MAX_MESSAGE_CHARS = 459

MESSAGE_TEMPLATE = (
    "TRAFFIC TICKET {ticket_id}: Vehicle {plate} recorded at {speed} km/h "
    "in a {limit} km/h zone at {location}, {timestamp}. "
)


class DeliveryState(str, enum.Enum):
    PENDING = "Pending"
    SENT = "Sent"
    FAILED = "Failed"
    SUPPRESSED = "Suppressed"


def detect_violation(speed: float, cal, margin: float = DEFAULT_MARGIN_KMH) -> bool:
    """Strictly faster than the calibrated limit plus the enforcement margin."""
    if speed < 0 or math.isnan(speed):
        raise ValueError(f"speed must be non-negative, got {speed}")
    limit = cal.speed_limit if hasattr(cal, "speed_limit") else float(cal)
    return speed > limit + margin


def iso_utc(timestamp_ms: float) -> str:
    dt = datetime.fromtimestamp(timestamp_ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def ticket_id_for(plate: str, camera_id: str, timestamp_ms: float, cooldown_s: float) -> str:
    bucket = math.floor(timestamp_ms / 1000.0 / cooldown_s)
    digest = hashlib.sha256(f"{plate}|{camera_id}|{bucket}".encode()).hexdigest()
    return digest[:16].upper()


@dataclass(frozen=True)
class ViolationTicket:
    ticket_id: str
    plate: str
    track_id: int
    estimated_speed: float
    speed_limit: float
    policy: str
    camera_id: str
    location: str
    timestamp: str
    timestamp_ms: float
    owner: RegistryEntry | None = None
    delivery_state: DeliveryState = DeliveryState.PENDING
    duplicate: bool = False
    message_id: str | None = None
    detail: str | None = None

    def with_state(self, state: DeliveryState, **changes) -> "ViolationTicket":
        return replace(self, delivery_state=state, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delivery_state"] = self.delivery_state.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ViolationTicket":
        d = dict(d)
        d["delivery_state"] = DeliveryState(d["delivery_state"])
        if d.get("owner") is not None:
            d["owner"] = RegistryEntry(**d["owner"])
        return cls(**d)

    def message(self) -> str:
        fmt = dict(
            ticket_id=self.ticket_id,
            plate=self.plate,
            speed=f"{self.estimated_speed:.0f}",
            limit=f"{self.speed_limit:g}",
            timestamp=self.timestamp,
        )
        text = MESSAGE_TEMPLATE.format(location=self.location, **fmt)
        if len(text) > MAX_MESSAGE_CHARS:
            room = len(self.location) - (len(text) - MAX_MESSAGE_CHARS)
            text = MESSAGE_TEMPLATE.format(location=self.location[: max(room, 0)], **fmt)
        return text


def make_ticket(
    *,
    plate: str,
    track_id: int,
    estimated_speed: float,
    cal,
    timestamp_ms: float,
    policy: str = "max",
    cooldown_s: float = DEFAULT_COOLDOWN_S,
    owner: RegistryEntry | None = None,
) -> ViolationTicket:
    """Pure ticket construction. Tickets without a registered owner start Suppressed."""
    return ViolationTicket(
        ticket_id=ticket_id_for(plate, cal.camera_id, timestamp_ms, cooldown_s),
        plate=plate,
        track_id=track_id,
        estimated_speed=estimated_speed,
        speed_limit=cal.speed_limit,
        policy=str(policy),
        camera_id=cal.camera_id,
        location=cal.location,
        timestamp=iso_utc(timestamp_ms),
        timestamp_ms=timestamp_ms,
        owner=owner,
        delivery_state=DeliveryState.PENDING if owner is not None else DeliveryState.SUPPRESSED,
        detail=None if owner is not None else "owner not found in registry",
    )


@dataclass
class TicketIssuer:
    """Suppresses repeat tickets within one cooldown bucket."""

    seen: set[str] = field(default_factory=set)

    def issue(self, ticket: ViolationTicket) -> ViolationTicket:
        if ticket.ticket_id in self.seen:
            return ticket.with_state(DeliveryState.SUPPRESSED, duplicate=True, detail="duplicate within cooldown")
        self.seen.add(ticket.ticket_id)
        return ticket


_LOG_LOCK = threading.Lock()


class TicketLog:
    """Line-delimited JSON, append-only. A ticket's state is its latest non-duplicate record."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, ticket: ViolationTicket) -> None:
        line = json.dumps(ticket.to_dict()) + "\n"
        with _LOG_LOCK:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)

    def records(self) -> Iterator[ViolationTicket]:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    yield ViolationTicket.from_dict(json.loads(line))

    def current(self) -> dict[str, ViolationTicket]:
        state: dict[str, ViolationTicket] = {}
        for t in self.records():
            if not t.duplicate:
                state[t.ticket_id] = t
        return state

    def issuer(self) -> TicketIssuer:
        return TicketIssuer(seen=set(self.current()))
