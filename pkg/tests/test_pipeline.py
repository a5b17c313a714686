import json
from pathlib import Path

import numpy as np
import pytest

from roadsentinel.cli import main
from roadsentinel.config import ConfigError, load_config
from roadsentinel.enforcement import DeliveryState, TicketLog
from roadsentinel.enforcement.mock_gateway import MockGateway
from roadsentinel.engine import Engine, PipelineError, run_stream
from roadsentinel.geometry import BBox
from roadsentinel.reports import TrackReport, read_reports
from roadsentinel.sim import (
    FrameRecord,
    NoiseSpec,
    StreamDetection,
    generate_scenario,
    parse_stream,
    random_traffic,
    read_truth,
    single_vehicle_spec,
    write_stream,
)
from roadsentinel.speed import Calibration

from oracles import reference_homography

DEMO = Path(__file__).parent.parent / "demos" / "data"


@pytest.fixture
def stream_for(tmp_path, calibration):
    def _make(speed, plate="ABC123A", name="stream.jsonl", **kw):
        frames, truth = generate_scenario(single_vehicle_spec(speed, calibration, plate=plate, **kw), seed=0)
        path = tmp_path / name
        write_stream(frames, path)
        return path

    return _make


@pytest.fixture
def sms_env(monkeypatch, gateway):
    monkeypatch.setenv("SENTINEL_SMS_URL", gateway.url)
    monkeypatch.setenv("SENTINEL_SMS_KEY", "test-key")
    return gateway


# --- calibrate ----------------------------------------------------------------


def test_calibrate_unit_square_gives_identity(tmp_path, capsys):
    out = tmp_path / "cal.json"
    rc = main(["calibrate", "--points", "0,0", "1,0", "1,1", "0,1", "--width", "1", "--length", "1", "-o", str(out)])
    assert rc == 0
    np.testing.assert_allclose(json.loads(out.read_text())["homography"], np.eye(3), atol=1e-12)
    assert "residual" in capsys.readouterr().out


def test_calibrate_trapezoid_corners(tmp_path):
    out = tmp_path / "cal.json"
    pts = [(760, 420), (1160, 420), (1800, 1050), (120, 1050)]
    rc = main(["calibrate", "--points", *[f"{x},{y}" for x, y in pts], "--width", "10.5", "--length", "40",
               "--camera-id", "C9", "-o", str(out)])
    assert rc == 0
    stored = np.array(json.loads(out.read_text())["homography"])
    target = [(0, 0), (10.5, 0), (10.5, 40), (0, 40)]
    np.testing.assert_allclose(stored, reference_homography(pts, target), rtol=1e-9, atol=1e-12)
    for (x, y), t in zip(pts, target):
        v = stored @ [x, y, 1.0]
        assert np.hypot(*(v[:2] / v[2] - t)) < 1e-6
    assert Calibration.load(out).camera_id == "C9"


def test_calibrate_collinear_is_input_error(tmp_path, capsys):
    rc = main(["calibrate", "--points", "0,0", "1,0", "2,0", "1,1", "--width", "1", "--length", "1",
               "-o", str(tmp_path / "c.json")])
    assert rc == 2
    assert "degenerate" in capsys.readouterr().err
    assert not (tmp_path / "c.json").exists()


# --- run ------------------------------------------------------------------------


def test_run_below_limit_no_ticket(tmp_path, write_config, stream_for, sms_env):
    rc = main(["run", str(stream_for(45.0)), "--config", str(write_config()), "--out", str(tmp_path / "out")])
    assert rc == 0
    (report,) = read_reports(tmp_path / "out" / "tracks.jsonl")
    assert report.assigned_speed == pytest.approx(45.0, abs=1.0)
    assert not report.violation and report.ticket_id is None
    assert not (tmp_path / "out" / "tickets.jsonl").read_text()
    assert sms_env.requests == []


def test_run_violation_sends_one_ticket(tmp_path, write_config, stream_for, registry_csv, sms_env):
    cfg = write_config(registry=str(registry_csv))
    rc = main(["run", str(stream_for(70.0)), "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert rc == 0
    (report,) = read_reports(tmp_path / "out" / "tracks.jsonl")
    assert report.violation and report.plate == "ABC123A"
    assert report.owner["owner_name"] == "User A"
    assert report.owner["vehicle_details"] == "Vehicle X, white Toyota Premio"
    (ticket,) = TicketLog(tmp_path / "out" / "tickets.jsonl").current().values()
    assert ticket.delivery_state is DeliveryState.SENT and ticket.ticket_id == report.ticket_id
    assert len(sms_env.delivered) == 1 and sms_env.delivered[0]["to"] == "+256700000001"
    states = [t.delivery_state for t in TicketLog(tmp_path / "out" / "tickets.jsonl").records()]
    assert states == [DeliveryState.PENDING, DeliveryState.SENT]


def test_violation_without_registered_owner_is_suppressed(tmp_path, write_config, stream_for, registry_csv, sms_env):
    cfg = write_config(registry=str(registry_csv))
    rc = main(["run", str(stream_for(75.0, plate="ZZZ999Z")), "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 0
    (ticket,) = TicketLog(tmp_path / "o" / "tickets.jsonl").current().values()
    assert ticket.delivery_state is DeliveryState.SUPPRESSED and ticket.owner is None
    assert sms_env.requests == []


def test_annotation_sidecar(tmp_path, write_config, stream_for):
    main(["run", str(stream_for(50.0)), "--config", str(write_config()), "--out", str(tmp_path / "o"), "--no-send"])
    lines = [json.loads(x) for x in (tmp_path / "o" / "annotations.jsonl").read_text().splitlines()]
    frames = list(parse_stream(stream_for(50.0, name="again.jsonl")))
    assert [a["frame"] for a in lines] == [f.frame_index for f in frames]
    live = [o["speed_kmh"] for a in lines for o in a["objects"] if o["speed_kmh"] is not None]
    assert live and all(abs(v - 50.0) < 1.0 for v in live)


def test_run_rejects_missing_config_paths(tmp_path, write_config, stream_for, capsys):
    cfg = write_config(registry="nope.csv")
    with pytest.raises(ConfigError):
        load_config(cfg)
    assert main(["run", str(stream_for(40.0)), "--config", str(cfg)]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_pipeline_error_names_frame_and_stage(calibration):
    from roadsentinel.config import EngineConfig

    engine = Engine(EngineConfig(calibration=calibration))
    box = BBox(900, 700, 1060, 800)
    for i in range(3):
        engine.process(FrameRecord(10 + i, 1000.0 * i, (StreamDetection("car", 0.9, box),)))
    with pytest.raises(PipelineError) as info:
        engine.process(FrameRecord(5, 9000.0, (StreamDetection("car", 0.9, box),)))
    assert info.value.frame == 5 and info.value.stage == "speed"


def test_each_detection_in_at_most_one_report(calibration):
    from roadsentinel.config import EngineConfig

    spec = random_traffic(calibration, 10, seed=5, noise=NoiseSpec(jitter_px=1.0, drop_prob=0.1, score_range=(0.3, 0.95)))
    frames, truth = generate_scenario(spec, seed=5)
    engine = Engine(EngineConfig(calibration=calibration))
    seen = []
    for f in frames:
        ann = engine.process(f)
        ids = [o["track_id"] for o in ann["objects"]]
        assert len(ids) == len(set(ids))
        seen.extend(ids)
    reports = engine.finish()
    confirmed = {r.track_id for r in reports}
    counted = sum(r.n_detections for r in reports)
    assert counted == sum(1 for tid in seen if tid in confirmed)
    assert sorted(r.plate for r in reports) == sorted(t.plate for t in truth)


# --- simulate -----------------------------------------------------------------


def test_simulate_demo_spec_round_trips(tmp_path):
    stream, truth = tmp_path / "s.jsonl", tmp_path / "t.csv"
    assert main(["simulate", str(DEMO / "speeder.json"), "--seed", "3", "--stream", str(stream), "--truth", str(truth)]) == 0
    frames = list(parse_stream(stream))
    write_stream(frames, tmp_path / "copy.jsonl")
    assert (tmp_path / "copy.jsonl").read_bytes() == stream.read_bytes()
    (row,) = read_truth(truth)
    assert row.plate == "ABC123A" and row.speed_kmh == 70.0


def test_simulate_is_reproducible_and_sized(tmp_path):
    outs = []
    for k in range(2):
        s, t = tmp_path / f"s{k}.jsonl", tmp_path / f"t{k}.csv"
        assert main(["simulate", str(DEMO / "traffic.json"), "--seed", "11", "--stream", str(s), "--truth", str(t)]) == 0
        outs.append((s.read_bytes(), t.read_bytes()))
    assert outs[0] == outs[1]
    spec = tmp_path / "ten.json"
    spec.write_text(json.dumps({"calibration": str(DEMO / "calibration.json"), "traffic": {"n_vehicles": 10}}))
    assert main(["simulate", str(spec), "--stream", str(tmp_path / "x.jsonl"), "--truth", str(tmp_path / "x.csv")]) == 0
    assert len(read_truth(tmp_path / "x.csv")) == 10


def test_simulate_bad_spec(tmp_path):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"calibration": str(DEMO / "calibration.json")}))
    assert main(["simulate", str(spec), "--stream", str(tmp_path / "s"), "--truth", str(tmp_path / "t")]) == 2


# --- eval -----------------------------------------------------------------------


def test_eval_speeds_noiseless(tmp_path, write_config, capsys):
    s, t = tmp_path / "s.jsonl", tmp_path / "t.csv"
    main(["simulate", str(DEMO / "traffic.json"), "--seed", "2", "--stream", str(s), "--truth", str(t)])
    # drop the noise block to get a clean scene
    clean = json.loads((DEMO / "traffic.json").read_text())
    clean.pop("noise")
    clean["calibration"] = str(DEMO / "calibration.json")
    (tmp_path / "clean.json").write_text(json.dumps(clean))
    main(["simulate", str(tmp_path / "clean.json"), "--seed", "2", "--stream", str(s), "--truth", str(t)])
    main(["run", str(s), "--config", str(write_config()), "--out", str(tmp_path / "o"), "--no-send"])
    rc = main(["eval", "--mode", "speeds", str(tmp_path / "o" / "tracks.jsonl"), str(t), "--out",
               str(tmp_path / "m.json"), "--max-mae", "1.0", "--min-within", "1.0"])
    assert rc == 0
    metrics = json.loads((tmp_path / "m.json").read_text())
    assert metrics["mae_kmh"] < 1.0 and metrics["matched"] == 20 and metrics["passed"]
    assert "MAE" in capsys.readouterr().out
    # an impossible threshold fails the command
    assert main(["eval", "--mode", "speeds", str(tmp_path / "o" / "tracks.jsonl"), str(t), "--max-mae", "0"]) == 1


def test_eval_map50_and_cer(tmp_path):
    gt = [{"image": "a.jpg", "bbox": [10, 10, 50, 30]}, {"image": "b.jpg", "bbox": [5, 5, 40, 20]}]
    (tmp_path / "gt.jsonl").write_text("".join(json.dumps(g) + "\n" for g in gt))
    (tmp_path / "pred.jsonl").write_text("".join(json.dumps({**g, "score": 1.0}) + "\n" for g in gt))
    assert main(["eval", "--mode", "map50", str(tmp_path / "pred.jsonl"), str(tmp_path / "gt.jsonl"),
                 "--out", str(tmp_path / "m.json"), "--min-map", "0.99"]) == 0
    assert json.loads((tmp_path / "m.json").read_text())["map50"] == 1.0

    (tmp_path / "truth.csv").write_text("id,text\n1,ABC123A\n2,UBA123C\n")
    (tmp_path / "pred.csv").write_text("id,text\n1,ABC123A\n2,UBA123C\n")
    assert main(["eval", "--mode", "cer", str(tmp_path / "pred.csv"), str(tmp_path / "truth.csv"),
                 "--out", str(tmp_path / "c.json")]) == 0
    assert json.loads((tmp_path / "c.json").read_text())["cer"] == 0.0
    (tmp_path / "pred.csv").write_text("id,text\n1,ABC123A\n2,UBA128C\n")
    assert main(["eval", "--mode", "cer", str(tmp_path / "pred.csv"), str(tmp_path / "truth.csv"),
                 "--max-cer", "0.05"]) == 1


def test_eval_no_matches_is_input_error(tmp_path, write_config, stream_for):
    main(["run", str(stream_for(40.0)), "--config", str(write_config()), "--out", str(tmp_path / "o"), "--no-send"])
    (tmp_path / "gun.csv").write_text(
        "serial,timestamp_ms,measured_distance_m,measured_speed_kmh,n_frames\nTC-1,1.0,30.0,40.0,5\n"
    )
    assert main(["eval", "--mode", "speeds", str(tmp_path / "o" / "tracks.jsonl"), str(tmp_path / "gun.csv")]) == 2


# --- ticket send ----------------------------------------------------------------


def pending_log(tmp_path, write_config, stream_for, registry_csv):
    cfg = write_config(registry=str(registry_csv))
    main(["run", str(stream_for(70.0)), "--config", str(cfg), "--out", str(tmp_path / "o"), "--no-send"])
    log = tmp_path / "o" / "tickets.jsonl"
    (t,) = TicketLog(log).current().values()
    assert t.delivery_state is DeliveryState.PENDING
    return log


def test_ticket_send_then_resend(tmp_path, write_config, stream_for, registry_csv, sms_env, capsys):
    log = pending_log(tmp_path, write_config, stream_for, registry_csv)
    assert main(["ticket", "send", "--log", str(log), "--registry", str(registry_csv)]) == 0
    (t,) = TicketLog(log).current().values()
    assert t.delivery_state is DeliveryState.SENT
    assert main(["ticket", "send", "--log", str(log)]) == 0
    assert len(sms_env.requests) == 1 and len(sms_env.delivered) == 1
    assert "0 pending tickets processed" in capsys.readouterr().out


def test_ticket_send_gateway_down(tmp_path, write_config, stream_for, registry_csv):
    log = pending_log(tmp_path, write_config, stream_for, registry_csv)
    with MockGateway(default=503) as gw:
        url = gw.url
        rc = main(["ticket", "send", "--log", str(log), "--url", url, "--backoff-base", "0"])
        assert len(gw.requests) == 3
    assert rc == 1
    (t,) = TicketLog(log).current().values()
    assert t.delivery_state is DeliveryState.FAILED and "3 attempt" in t.detail


def test_ticket_send_requires_log_and_gateway(tmp_path, monkeypatch):
    monkeypatch.delenv("SENTINEL_SMS_URL", raising=False)
    assert main(["ticket", "send", "--log", str(tmp_path / "missing.jsonl")]) == 2
    (tmp_path / "empty.jsonl").write_text("")
    assert main(["ticket", "send", "--log", str(tmp_path / "empty.jsonl")]) == 2


# --- determinism ----------------------------------------------------------------


def test_runs_are_byte_identical(tmp_path, write_config, registry_csv, calibration):
    spec = random_traffic(calibration, 8, seed=9, noise=NoiseSpec(jitter_px=2.0, drop_prob=0.1, ocr_error_prob=0.1))
    frames, _ = generate_scenario(spec, seed=9)
    write_stream(frames, tmp_path / "s.jsonl")
    cfg = write_config(registry=str(registry_csv))
    outputs = []
    for k in range(2):
        with MockGateway() as gw:
            out = tmp_path / f"run{k}"
            rc = main(["run", str(tmp_path / "s.jsonl"), "--config", str(cfg), "--out", str(out)])
            assert rc == 0
        outputs.append([(out / n).read_bytes() for n in ("tracks.jsonl", "tickets.jsonl", "annotations.jsonl")])
    assert outputs[0] == outputs[1]


def test_rerun_into_same_directory_does_not_resend(tmp_path, write_config, stream_for, registry_csv, sms_env):
    cfg = write_config(registry=str(registry_csv))
    stream = stream_for(70.0)
    for _ in range(2):
        assert main(["run", str(stream), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert len(sms_env.delivered) == 1
    records = list(TicketLog(tmp_path / "o" / "tickets.jsonl").records())
    assert records[-1].duplicate and records[-1].delivery_state is DeliveryState.SUPPRESSED
    (t,) = TicketLog(tmp_path / "o" / "tickets.jsonl").current().values()
    assert t.delivery_state is DeliveryState.SENT


def test_report_speed_present_iff_samples():
    with pytest.raises(ValueError):
        TrackReport(track_id=1, cls="car", first_frame=0, last_frame=1, first_timestamp_ms=0.0, last_timestamp_ms=40.0,
                    n_detections=2, plate=None, plate_confidence=None, plate_votes=0, speed_samples=[],
                    assigned_speed=50.0, policy="max", violation=False, ticket_id=None, owner=None)


def test_run_stream_api(tmp_path, calibration):
    from roadsentinel.config import EngineConfig

    frames, _ = generate_scenario(single_vehicle_spec(80.0, calibration, plate="UBA123C"), seed=0)
    result = run_stream(frames, EngineConfig(calibration=calibration), tmp_path / "api")
    (r,) = result.reports
    assert r.violation and r.plate == "UBA123C"
    (t,) = result.tickets
    assert t.delivery_state is DeliveryState.SUPPRESSED  # no registry configured
    assert result.failed == []
