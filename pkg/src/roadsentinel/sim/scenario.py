"""Synthetic calibrated traffic scenes with known per-vehicle speeds.

Each vehicle moves at constant commanded speed along the metric target
rectangle. Its road-contact point is projected into the image through the
inverse calibration homography and a box is built around it: height follows
the linear perspective proxy ``base_px + per_row * image_row`` and width is
the vehicle's metric width projected at the anchor's depth.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import BBox, GeometryError, Quad, transform_point
from ..speed import Calibration
from .streams import FrameRecord, PlatePayload, StreamDetection, VehicleTruth

DEFAULT_START_MS = 1_700_000_000_000.0


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleSpec:
    entry_frame: int
    speed_kmh: float
    lane_offset_m: float
    plate: str
    cls: str = "car"
    width_m: float = 1.8


@dataclass(frozen=True)
class NoiseSpec:
    jitter_px: float = 0.0
    drop_prob: float = 0.0
    score_range: tuple[float, float] = (0.9, 0.9)
    text_score: float = 0.95
    ocr_error_prob: float = 0.0

    def __post_init__(self):
        if self.jitter_px < 0:
            raise SpecError("jitter must be non-negative")
        if not 0.0 <= self.drop_prob < 1.0:
            raise SpecError("drop probability must lie in [0, 1)")
        lo, hi = self.score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise SpecError("score range must satisfy 0 <= lo <= hi <= 1")
        if not 0.0 <= self.ocr_error_prob <= 1.0:
            raise SpecError("OCR error probability must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioSpec:
    calibration: Calibration
    vehicles: tuple[VehicleSpec, ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    duration_frames: int | None = None
    image_size: tuple[int, int] = (1920, 1080)
    box_height_base_px: float = -100.0
    box_height_per_row: float = 1.0 / 3.0
    approach_m: float = 4.0
    exit_m: float = 2.0
    start_timestamp_ms: float = DEFAULT_START_MS
    emit_plates: bool = True

    def __post_init__(self):
        if not self.vehicles:
            raise SpecError("scenario has no vehicles")
        for v in self.vehicles:
            if not v.speed_kmh > 0:
                raise SpecError(f"commanded speed must be positive, got {v.speed_kmh}")
            if v.entry_frame < 0:
                raise SpecError("entry frame must be non-negative")
            if not 0.0 <= v.lane_offset_m <= self.calibration.target_width:
                raise SpecError(f"lane offset {v.lane_offset_m} m is off the road")
        plates = [v.plate for v in self.vehicles]
        if len(set(plates)) != len(plates):
            raise SpecError("vehicle plates must be unique")
        if self.duration_frames is not None and self.duration_frames <= 0:
            raise SpecError("duration must be positive")
        if self.approach_m < 0 or self.exit_m < 0:
            raise SpecError("approach/exit distances must be non-negative")

    def metres_per_frame(self, v: VehicleSpec) -> float:
        return v.speed_kmh * 1000.0 / 3600.0 / self.calibration.fps

    def travel_frames(self, v: VehicleSpec) -> int:
        """Frames from entry until the anchor passes the exit line."""
        total = self.approach_m + self.calibration.target_length + self.exit_m
        return int(math.floor(total / self.metres_per_frame(v) + 1e-9))

    @property
    def resolved_duration(self) -> int:
        if self.duration_frames is not None:
            return self.duration_frames
        return max(v.entry_frame + self.travel_frames(v) for v in self.vehicles) + 5

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "ScenarioSpec":
        try:
            cal = Calibration.from_dict(d["calibration"])
            noise = NoiseSpec(**{k: tuple(v) if k == "score_range" else v for k, v in d.get("noise", {}).items()})
            kwargs = {}
            for key in ("duration_frames", "approach_m", "exit_m", "start_timestamp_ms", "emit_plates"):
                if key in d:
                    kwargs[key] = d[key]
            if "image_size" in d:
                kwargs["image_size"] = tuple(d["image_size"])
            if "box_height" in d:
                kwargs["box_height_base_px"] = float(d["box_height"]["base_px"])
                kwargs["box_height_per_row"] = float(d["box_height"]["per_row"])
            if "vehicles" in d:
                vehicles = tuple(
                    VehicleSpec(
                        entry_frame=int(v["entry_frame"]),
                        speed_kmh=float(v["speed_kmh"]),
                        lane_offset_m=float(v["lane_offset_m"]),
                        plate=str(v["plate"]),
                        cls=str(v.get("class", "car")),
                        width_m=float(v.get("width_m", 1.8)),
                    )
                    for v in d["vehicles"]
                )
                return cls(calibration=cal, vehicles=vehicles, noise=noise, **kwargs)
            if "traffic" in d:
                t = dict(d["traffic"])
                t.setdefault("seed", seed if seed is not None else 0)
                if "speed_range" in t:
                    t["speed_range"] = tuple(t["speed_range"])
                return random_traffic(cal, noise=noise, **t, **kwargs)
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed scenario spec: {exc!r}") from exc
        raise SpecError("scenario needs either 'vehicles' or 'traffic'")


def random_plate(rng: np.random.Generator, pattern: str = "LLLDDDL") -> str:
    letters, digits = string.ascii_uppercase, string.digits
    return "".join(
        letters[rng.integers(len(letters))] if slot == "L" else digits[rng.integers(len(digits))] for slot in pattern
    )


def random_traffic(
    calibration: Calibration,
    n_vehicles: int,
    speed_range: tuple[float, float] = (30.0, 90.0),
    n_lanes: int = 3,
    min_gap_m: float = 15.0,
    mean_headway_frames: float = 12.0,
    seed: int = 0,
    noise: NoiseSpec = NoiseSpec(),
    **kwargs,
) -> ScenarioSpec:
    """Random multi-lane traffic with no same-lane vehicle ever closer than `min_gap_m`."""
    if n_vehicles < 1 or n_lanes < 1:
        raise SpecError("need at least one vehicle and one lane")
    rng = np.random.default_rng(seed)
    lane_w = calibration.target_width / n_lanes
    probe = ScenarioSpec(calibration, (VehicleSpec(0, 50.0, lane_w / 2, "PROBE00"),), **kwargs)
    lanes: list[list[VehicleSpec]] = [[] for _ in range(n_lanes)]
    vehicles: list[VehicleSpec] = []
    plates: set[str] = set()
    t = 0.0
    for _ in range(n_vehicles):
        speed = float(rng.uniform(*speed_range))
        lane = int(rng.integers(n_lanes))
        t += float(rng.exponential(mean_headway_frames))
        entry = int(round(t))
        plate = random_plate(rng)
        while plate in plates:
            plate = random_plate(rng)
        plates.add(plate)
        cand = VehicleSpec(entry, round(speed, 3), (lane + 0.5) * lane_w, plate)
        while any(_too_close(probe, prev, cand, min_gap_m) for prev in lanes[lane]):
            cand = VehicleSpec(cand.entry_frame + 1, cand.speed_kmh, cand.lane_offset_m, cand.plate)
        t = max(t, cand.entry_frame)
        lanes[lane].append(cand)
        vehicles.append(cand)
    return ScenarioSpec(calibration, tuple(vehicles), noise=noise, **kwargs)


def _too_close(spec: ScenarioSpec, a: VehicleSpec, b: VehicleSpec, gap: float) -> bool:
    start = max(a.entry_frame, b.entry_frame)
    end = min(a.entry_frame + spec.travel_frames(a), b.entry_frame + spec.travel_frames(b))
    if start > end:
        return False

    def separation(f: int) -> float:
        return (f - a.entry_frame) * spec.metres_per_frame(a) - (f - b.entry_frame) * spec.metres_per_frame(b)

    # separation is linear in time: check both ends and any overtake in between
    s0, s1 = separation(start), separation(end)
    return abs(s0) < gap or abs(s1) < gap or s0 * s1 < 0


_CONFUSABLE = {"0": "O", "O": "0", "1": "I", "I": "1", "5": "S", "S": "5", "8": "B", "B": "8", "2": "Z", "Z": "2"}


def _ocr_corrupt(text: str, rng: np.random.Generator) -> str:
    i = int(rng.integers(len(text)))
    ch = text[i]
    repl = _CONFUSABLE.get(ch) or string.ascii_uppercase[int(rng.integers(26))]
    return text[:i] + repl + text[i + 1 :]


def _r(x: float) -> float:
    return round(float(x), 4)


def generate_scenario(spec: ScenarioSpec, seed: int = 0) -> tuple[list[FrameRecord], list[VehicleTruth]]:
    """Render `spec` into a detection stream plus a per-vehicle truth table.

    Output is a pure function of (spec, seed). Random draws happen in a fixed
    order for every visible vehicle-frame, so a noiseless spec renders the
    same bytes whatever the seed.
    """
    cal = spec.calibration
    inv = cal.inverse
    img_w, img_h = spec.image_size
    fps = cal.fps
    duration = spec.resolved_duration
    rng = np.random.default_rng(seed)
    noise = spec.noise

    per_frame: list[list[StreamDetection]] = [[] for _ in range(duration)]
    truths: list[VehicleTruth] = []
    for vid, v in enumerate(spec.vehicles, start=1):
        step = spec.metres_per_frame(v)
        visible: list[int] = []
        in_roi: list[int] = []
        for k in range(spec.travel_frames(v) + 1):
            frame = v.entry_frame + k
            if frame >= duration:
                break
            y = -spec.approach_m + k * step
            if -1e-9 <= y <= cal.target_length + 1e-9:
                in_roi.append(frame)
            try:
                u, row = transform_point(inv, (v.lane_offset_m, y))
                left = transform_point(inv, (v.lane_offset_m - v.width_m / 2, y))
                right = transform_point(inv, (v.lane_offset_m + v.width_m / 2, y))
            except GeometryError:
                continue
            if not (0.0 <= u <= img_w and 0.0 <= row <= img_h):
                continue
            height = max(4.0, spec.box_height_base_px + spec.box_height_per_row * row)
            half_w = max(2.0, abs(right[0] - left[0]) / 2.0)
            dropped = rng.random() < noise.drop_prob
            jitter = rng.normal(0.0, 1.0, size=4) * noise.jitter_px
            lo, hi = noise.score_range
            score = float(rng.uniform(lo, hi)) if hi > lo else lo
            corrupt = rng.random() < noise.ocr_error_prob
            ocr_draw = _ocr_corrupt(v.plate, rng) if corrupt else v.plate
            visible.append(frame)
            if dropped:
                continue
            x1, y1, x2, y2 = (u - half_w, row - height, u + half_w, row) + jitter
            if not (x1 < x2 and y1 < y2):
                continue
            box = BBox(_r(x1), _r(y1), _r(x2), _r(y2))
            per_frame[frame].append(StreamDetection(v.cls, _r(score), box))
            if spec.emit_plates:
                pw, ph = 0.35 * box.width, 0.12 * box.height
                cx = (box.x1 + box.x2) / 2.0
                pb = BBox(_r(cx - pw / 2), _r(box.y2 - 0.08 * box.height - ph), _r(cx + pw / 2), _r(box.y2 - 0.08 * box.height))
                payload = PlatePayload(pb, ocr_draw, _r(noise.text_score))
                per_frame[frame].append(StreamDetection("plate", _r(score), pb, payload))
        if not visible:
            raise SpecError(f"vehicle {vid} ({v.plate}) never appears inside the image")
        truths.append(
            VehicleTruth(
                vehicle_id=vid,
                plate=v.plate,
                speed_kmh=v.speed_kmh,
                lane_offset_m=v.lane_offset_m,
                first_frame=visible[0],
                last_frame=visible[-1],
                roi_entry_frame=in_roi[0] if in_roi else None,
                roi_exit_frame=in_roi[-1] if in_roi else None,
                first_timestamp_ms=frame_timestamp(spec, visible[0]),
                last_timestamp_ms=frame_timestamp(spec, visible[-1]),
            )
        )

    frames = [FrameRecord(i, frame_timestamp(spec, i), tuple(dets)) for i, dets in enumerate(per_frame)]
    return frames, truths


def frame_timestamp(spec: ScenarioSpec, frame: int) -> float:
    return round(spec.start_timestamp_ms + frame * 1000.0 / spec.calibration.fps, 3)


def demo_calibration(fps: float = 25.0, speed_limit: float = 50.0) -> Calibration:
    """A 1920x1080 roadside view of a three-lane, 40 m stretch."""
    source = Quad.from_points([(760, 420), (1160, 420), (1800, 1050), (120, 1050)])
    return Calibration(
        source=source,
        target_width=10.5,
        target_length=40.0,
        fps=fps,
        speed_limit=speed_limit,
        camera_id="KLA-ENT-01",
        location="Entebbe Road, Kampala",
    )


def single_vehicle_spec(
    speed_kmh: float,
    calibration: Calibration | None = None,
    plate: str = "UBA123C",
    noise: NoiseSpec = NoiseSpec(),
    lane: float | None = None,
    **kwargs,
) -> ScenarioSpec:
    cal = calibration or demo_calibration()
    offset = cal.target_width / 2 if lane is None else lane
    return ScenarioSpec(cal, (VehicleSpec(0, speed_kmh, offset, plate),), noise=noise, **kwargs)



def load_scenario(path: str | Path, seed: int | None = None) -> ScenarioSpec:
    """Read a JSON scenario file. ``calibration`` may be inline or a path relative to the file."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read scenario {path}: {exc}") from exc
    if isinstance(d.get("calibration"), str):
        cal_path = path.parent / d["calibration"]
        try:
            d["calibration"] = json.loads(cal_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read calibration {cal_path}: {exc}") from exc
    return ScenarioSpec.from_dict(d, seed=seed)
