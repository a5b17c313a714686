"""Engine configuration (JSON)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .enforcement import DEFAULT_COOLDOWN_S, DEFAULT_MARGIN_KMH, GatewayConfig, Registry, SmsError
from .plates import PlateGrammar
from .speed import Calibration, SpeedParams
from .tracking import TrackerParams

VEHICLE_CLASSES = ("car", "truck", "bus", "motorcycle", "van")


class ConfigError(ValueError):
    pass


@dataclass
class EngineConfig:
    calibration: Calibration
    tracker: TrackerParams = field(default_factory=TrackerParams)
    speed: SpeedParams = field(default_factory=SpeedParams)
    grammar: PlateGrammar = field(default_factory=PlateGrammar)
    margin_kmh: float = DEFAULT_MARGIN_KMH
    cooldown_s: float = DEFAULT_COOLDOWN_S
    registry: Registry | None = None
    gateway: GatewayConfig | None = None
    vehicle_classes: tuple[str, ...] = VEHICLE_CLASSES
    output_dir: Path | None = None

    def __post_init__(self):
        if self.margin_kmh < 0:
            raise ConfigError("enforcement margin must be non-negative")
        if self.cooldown_s <= 0:
            raise ConfigError("ticket cooldown must be positive")
        self.speed.resolved(self.calibration.fps)


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    path = path if path.is_absolute() else base / path
    if not path.exists():
        raise ConfigError(f"referenced file does not exist: {path}")
    return path


def gateway_from_settings(settings: dict | None, env=None) -> GatewayConfig | None:
    """Gateway settings from config merged with SENTINEL_SMS_* variables; None if no URL anywhere."""
    settings = dict(settings or {})
    overrides = {
        "url": settings.get("url"),
        "username": settings.get("username"),
        "attempts": settings.get("attempts"),
        "backoff_base": settings.get("backoff_base_s"),
        "timeout": settings.get("timeout_s"),
    }
    try:
        return GatewayConfig.from_env(env, **overrides)
    except SmsError:
        return None


def load_config(path: str | Path, env=None) -> EngineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    base = path.parent
    try:
        cal = Calibration.load(_resolve(base, raw["calibration"]))
        plates = raw.get("plates", {})
        grammar_kwargs = {"pattern": plates.get("grammar", "LLLDDDL")}
        if plates.get("alphabet"):
            grammar_kwargs["alphabet"] = plates["alphabet"]
        enforcement = raw.get("enforcement", {})
        registry = Registry.load(_resolve(base, raw["registry"])) if raw.get("registry") else None
        out = raw.get("output_dir")
        return EngineConfig(
            calibration=cal,
            tracker=TrackerParams(**raw.get("tracker", {})),
            speed=SpeedParams(**raw.get("speed", {})),
            grammar=PlateGrammar(**grammar_kwargs),
            margin_kmh=float(enforcement.get("margin_kmh", DEFAULT_MARGIN_KMH)),
            cooldown_s=float(enforcement.get("cooldown_s", DEFAULT_COOLDOWN_S)),
            registry=registry,
            gateway=gateway_from_settings(raw.get("gateway"), env),
            vehicle_classes=tuple(raw.get("vehicle_classes", VEHICLE_CLASSES)),
            output_dir=(base / out) if out else None,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
