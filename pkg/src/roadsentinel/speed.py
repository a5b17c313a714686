"""Metric speed from image-space anchor tracks via a road-plane homography."""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import (
    BBox,
    GeometryError,
    Homography,
    Point,
    Quad,
    anchor_of,
    estimate_homography,
    projective_weight,
    transform_point,
)

ROI_MARGIN = 0.05


class CalibrationError(ValueError):
    pass


class NonMonotonicFrame(ValueError):
    pass


class EmptySamples(ValueError):
    pass


@dataclass(frozen=True)
class Calibration:
    """Source quad ABCD in pixels paired with the metric rectangle A*B*C*D*.

    The target rectangle runs (0, 0)-(target_width, target_length): A* is the
    origin and D* = (0, target_length).
    """

    source: Quad
    target_width: float
    target_length: float
    fps: float
    speed_limit: float = 50.0
    camera_id: str = "cam-0"
    location: str = ""
    homography: Homography | None = None

    def __post_init__(self):
        if not self.fps > 0:
            raise CalibrationError("fps must be positive")
        if not (self.target_width > 0 and self.target_length > 0):
            raise CalibrationError("target dimensions must be positive")
        if self.homography is None:
            object.__setattr__(self, "homography", estimate_homography(self.source, self.target))
        residual = self.corner_residual()
        if residual > 1e-6 * self.target_diagonal:
            raise CalibrationError(f"homography misses the target corners by {residual:.3g} m")
        # sign of w' on the road side of the horizon
        w = projective_weight(self.homography, self.source.a)
        object.__setattr__(self, "_w_sign", math.copysign(1.0, w))

    @property
    def target(self) -> Quad:
        return Quad.rectangle(self.target_width, self.target_length)

    @property
    def target_diagonal(self) -> float:
        return math.hypot(self.target_width, self.target_length)

    @property
    def inverse(self) -> Homography:
        return self.homography.inverse()

    def corner_residual(self) -> float:
        worst = 0.0
        for s, t in zip(self.source.as_array(), self.target.as_array()):
            x, y = transform_point(self.homography, tuple(s))
            worst = max(worst, math.hypot(x - t[0], y - t[1]))
        return worst

    def to_metric(self, p: Point) -> Point | None:
        """Image point to road metres; None if it lies beyond the horizon."""
        w = projective_weight(self.homography, p)
        if w * self._w_sign <= 1e-12:
            return None
        return transform_point(self.homography, p)

    def in_roi(self, q: Point, margin: float = ROI_MARGIN) -> bool:
        mx, my = margin * self.target_width, margin * self.target_length
        return -mx <= q[0] <= self.target_width + mx and -my <= q[1] <= self.target_length + my

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "location": self.location,
            "fps": self.fps,
            "speed_limit_kmh": self.speed_limit,
            "source": self.source.to_list(),
            "target": {"width_m": self.target_width, "length_m": self.target_length},
            "homography": self.homography.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Calibration":
        try:
            source = Quad.from_points(d["source"])
            target = d["target"]
            h = d.get("homography")
            return cls(
                source=source,
                target_width=float(target["width_m"]),
                target_length=float(target["length_m"]),
                fps=float(d["fps"]),
                speed_limit=float(d.get("speed_limit_kmh", 50.0)),
                camera_id=str(d.get("camera_id", "cam-0")),
                location=str(d.get("location", "")),
                homography=Homography(np.array(h, dtype=float)) if h is not None else None,
            )
        except (KeyError, TypeError) as exc:
            raise CalibrationError(f"malformed calibration: {exc!r}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Calibration":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SpeedSample:
    frame_index: int
    speed_kmh: float


class SpeedPolicy(str, enum.Enum):
    MAX = "max"
    MODE = "mode"
    MIN = "min"
    MEDIAN = "median"


@dataclass
class SpeedParams:
    window: int | None = None  # deque capacity; defaults to one second of frames
    min_samples: int | None = None  # defaults to a full window
    policy: SpeedPolicy = SpeedPolicy.MAX
    axis_only: bool = False

    def __post_init__(self):
        self.policy = SpeedPolicy(self.policy)

    def resolved(self, fps: float) -> tuple[int, int]:
        window = self.window if self.window is not None else max(2, int(round(fps)))
        min_samples = self.min_samples if self.min_samples is not None else window
        if window < 2 or not 2 <= min_samples <= window:
            raise ValueError(f"need 2 <= min_samples <= window, got {min_samples}, {window}")
        return window, min_samples


@dataclass
class AnchorHistory:
    """Bounded deque of (frame_index, metric anchor) for one track."""

    window: int
    entries: deque = field(init=False)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be positive")
        self.entries = deque(maxlen=self.window)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def last_frame(self) -> int | None:
        return self.entries[-1][0] if self.entries else None

    def push(self, frame: int, bbox: BBox, cal: Calibration) -> bool:
        """Append the box's anchor in road metres; False when it falls outside the ROI."""
        if self.entries and frame <= self.entries[-1][0]:
            raise NonMonotonicFrame(f"frame {frame} is not after {self.entries[-1][0]}")
        try:
            q = cal.to_metric(anchor_of(bbox))
        except GeometryError:
            return False
        if q is None or not cal.in_roi(q):
            return False
        self.entries.append((frame, q))
        return True


def push_anchor(h: AnchorHistory, frame: int, bbox: BBox, cal: Calibration) -> AnchorHistory:
    h.push(frame, bbox, cal)
    return h


def instantaneous_speed(
    h: AnchorHistory, cal: Calibration, min_samples: int, axis_only: bool = False
) -> SpeedSample | None:
    """Speed over the current window endpoints, or None until `min_samples` anchors exist."""
    if len(h) < max(2, min_samples):
        return None
    f0, p0 = h.entries[0]
    f1, p1 = h.entries[-1]
    if axis_only:
        dist = abs(p1[1] - p0[1])
    else:
        dist = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    seconds = (f1 - f0) / cal.fps
    return SpeedSample(f1, 3.6 * dist / seconds)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def assign_speed(samples: Iterable[SpeedSample | float], policy: SpeedPolicy | str = SpeedPolicy.MAX) -> float:
    """Reduce a track's speed samples to one reported speed.

    Mode and median operate on values rounded to whole km/h; ties and
    even-length medians resolve to the larger value.
    """
    values = [s.speed_kmh if isinstance(s, SpeedSample) else float(s) for s in samples]
    if not values:
        raise EmptySamples("cannot assign a speed without samples")
    policy = SpeedPolicy(policy)
    if policy is SpeedPolicy.MAX:
        return max(values)
    if policy is SpeedPolicy.MIN:
        return min(values)
    rounded = sorted(_round_half_up(v) for v in values)
    if policy is SpeedPolicy.MEDIAN:
        return float(rounded[len(rounded) // 2])
    counts: dict[int, int] = {}
    for v in rounded:
        counts[v] = counts.get(v, 0) + 1
    return float(max(counts, key=lambda k: (counts[k], k)))

