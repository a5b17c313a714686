from .metrics import (
    NoGroundTruth,
    NoMatches,
    Prediction,
    SpeedEvaluation,
    average_precision,
    cer_batch,
    evaluate_speeds,
    map50,
)
from .scenario import (
    NoiseSpec,
    ScenarioSpec,
    SpecError,
    VehicleSpec,
    demo_calibration,
    generate_scenario,
    load_scenario,
    random_traffic,
    single_vehicle_spec,
)
from .streams import (
    FrameRecord,
    GunRecord,
    MonotonicityViolation,
    ParseError,
    PlatePayload,
    StreamDetection,
    VehicleTruth,
    parse_stream,
    read_truth,
    write_gun_records,
    write_stream,
    write_truth,
)

__all__ = [
    "FrameRecord",
    "GunRecord",
    "MonotonicityViolation",
    "NoGroundTruth",
    "NoMatches",
    "NoiseSpec",
    "ParseError",
    "PlatePayload",
    "Prediction",
    "ScenarioSpec",
    "SpecError",
    "SpeedEvaluation",
    "StreamDetection",
    "VehicleSpec",
    "VehicleTruth",
    "average_precision",
    "cer_batch",
    "demo_calibration",
    "evaluate_speeds",
    "generate_scenario",
    "load_scenario",
    "map50",
    "parse_stream",
    "random_traffic",
    "read_truth",
    "single_vehicle_spec",
    "write_gun_records",
    "write_stream",
    "write_truth",
]
