"""Command line: calibrate, run, simulate, eval, ticket send.

Exit codes: 0 success, 1 threshold or delivery failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, gateway_from_settings, load_config
from .enforcement import DeliveryState, Registry, RegistryError, TicketLog
from .engine import PipelineError, run_stream, send_pending
from .geometry import BBox, DegenerateQuad, GeometryError, Quad, transform_point
from .plates import EmptyTruth
from .reports import read_reports
from .sim import (
    NoGroundTruth,
    NoMatches,
    ParseError,
    Prediction,
    SpecError,
    cer_batch,
    evaluate_speeds,
    generate_scenario,
    load_scenario,
    map50,
    parse_stream,
    read_truth,
    write_stream,
    write_truth,
)
from .speed import Calibration, CalibrationError

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _point(text: str) -> tuple[float, float]:
    try:
        x, y = text.split(",")
        return float(x), float(y)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y but got {text!r}") from None


def cmd_calibrate(args) -> int:
    try:
        quad = Quad.from_points(args.points)
        cal = Calibration(
            source=quad,
            target_width=args.width,
            target_length=args.length,
            fps=args.fps,
            speed_limit=args.limit,
            camera_id=args.camera_id,
            location=args.location,
        )
    except DegenerateQuad as exc:
        raise InputError(f"degenerate quad: {exc}") from exc
    except (CalibrationError, GeometryError) as exc:
        raise InputError(str(exc)) from exc
    cal.save(args.output)
    names = "ABCD"
    for name, s, t in zip(names, cal.source.as_array(), cal.target.as_array()):
        mx, my = transform_point(cal.homography, tuple(s))
        print(f"{name} ({s[0]:g}, {s[1]:g}) -> ({mx:.6f}, {my:.6f})  target ({t[0]:g}, {t[1]:g})  "
              f"residual {((mx - t[0]) ** 2 + (my - t[1]) ** 2) ** 0.5:.3e} m")
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        raise InputError(str(exc)) from exc
    if args.backoff_base is not None and config.gateway is not None:
        config.gateway = replace(config.gateway, backoff_base=args.backoff_base)
    out = args.out or config.output_dir or Path("out")
    try:
        result = run_stream(parse_stream(args.stream), config, out, send=not args.no_send)
    except (ParseError, OSError) as exc:
        raise InputError(str(exc)) from exc
    except PipelineError as exc:
        raise InputError(str(exc)) from exc

    print(f"{'track':>6} {'class':>10} {'frames':>11} {'plate':>9} {'km/h':>7}  violation  ticket")
    for r in result.reports:
        speed = f"{r.assigned_speed:7.1f}" if r.assigned_speed is not None else "      -"
        print(f"{r.track_id:>6} {r.cls:>10} {r.first_frame:>5}-{r.last_frame:<5} {r.plate or '?':>9} {speed}  "
              f"{'YES' if r.violation else 'no':>9}  {r.ticket_id or ''}")
    states = [t.delivery_state.value for t in result.tickets]
    print(f"{len(result.reports)} tracks, {len(result.tickets)} tickets {states}; outputs in {result.output_dir}")
    return EXIT_FAIL if result.failed else EXIT_OK


def cmd_simulate(args) -> int:
    try:
        spec = load_scenario(args.spec, seed=args.seed)
        frames, truth = generate_scenario(spec, seed=args.seed)
    except SpecError as exc:
        raise InputError(str(exc)) from exc
    write_stream(frames, args.stream)
    write_truth(truth, args.truth)
    n_det = sum(len(f.detections) for f in frames)
    print(f"{len(frames)} frames, {n_det} detections, {len(truth)} vehicles -> {args.stream}, {args.truth}")
    return EXIT_OK


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _read_text_csv(path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "text"} <= set(reader.fieldnames):
            raise InputError(f"{path}: header must contain id,text")
        return {row["id"]: row["text"] for row in reader}


def cmd_eval(args) -> int:
    ok = True
    try:
        if args.mode == "speeds":
            ev = evaluate_speeds(read_reports(args.reports), read_truth(args.truth), args.window_ms, args.margin)
            print(ev.summary_table())
            report = ev.to_dict()
            if args.min_within is not None and ev.fraction_within < args.min_within:
                ok = False
            if args.max_mae is not None and ev.mae > args.max_mae:
                ok = False
        elif args.mode == "map50":
            gt: dict = {}
            for row in _read_jsonl(args.truth):
                gt.setdefault(row["image"], []).append((row.get("class", "plate"), BBox.from_seq(row["bbox"])))
            preds = [
                Prediction(row["image"], BBox.from_seq(row["bbox"]), float(row["score"]), row.get("class", "plate"))
                for row in _read_jsonl(args.reports)
            ]
            value = map50(gt, preds)
            print(f"mAP50 {value:.4f} over {sum(len(v) for v in gt.values())} boxes in {len(gt)} images")
            report = {"map50": value}
            if args.min_map is not None and value < args.min_map:
                ok = False
        else:
            truth = _read_text_csv(args.truth)
            pred = _read_text_csv(args.reports)
            value = cer_batch((pred.get(k, ""), v) for k, v in truth.items())
            print(f"CER {value:.4f} over {len(truth)} plates")
            report = {"cer": round(value, 4), "pairs": len(truth)}
            if args.max_cer is not None and value > args.max_cer:
                ok = False
    except (NoMatches, NoGroundTruth, EmptyTruth, ParseError, KeyError, ValueError, OSError) as exc:
        raise InputError(f"{type(exc).__name__}: {exc}") from exc
    report["passed"] = ok
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    if not ok:
        print("acceptance threshold NOT met")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_ticket_send(args) -> int:
    if not Path(args.log).exists():
        raise InputError(f"ticket log {args.log} does not exist")
    gateway = gateway_from_settings(
        {"url": args.url, "username": args.username, "attempts": args.attempts, "backoff_base_s": args.backoff_base}
    )
    if gateway is None:
        raise InputError("no SMS gateway configured: set SENTINEL_SMS_URL or pass --url")
    try:
        registry = Registry.load(args.registry) if args.registry else None
    except (OSError, RegistryError) as exc:
        raise InputError(str(exc)) from exc
    results = send_pending(TicketLog(args.log), gateway, registry)
    failed = [t for t in results if t.delivery_state is DeliveryState.FAILED]
    for t in results:
        print(f"{t.ticket_id} {t.plate} {t.delivery_state.value} {t.detail or ''}")
    print(f"{len(results)} pending tickets processed, {len(failed)} failed")
    return EXIT_FAIL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadsentinel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="solve the road homography and write a calibration file")
    p.add_argument("--points", type=_point, nargs=4, required=True, metavar="X,Y",
                   help="source corners A B C D (top-left, top-right, bottom-right, bottom-left) in pixels")
    p.add_argument("--width", type=float, required=True, help="target rectangle width in metres")
    p.add_argument("--length", type=float, required=True, help="target rectangle length in metres")
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--limit", type=float, default=50.0, help="speed limit in km/h")
    p.add_argument("--camera-id", default="cam-0")
    p.add_argument("--location", default="")
    p.add_argument("-o", "--output", default="calibration.json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="process a detection stream into track reports and tickets")
    p.add_argument("stream")
    p.add_argument("--config", required=True)
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
    p.add_argument("--no-send", action="store_true", help="log tickets but do not contact the gateway")
    p.add_argument("--backoff-base", type=float, default=None, help="SMS retry backoff base in seconds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="render a synthetic scenario into a stream and truth table")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", default="stream.jsonl")
    p.add_argument("--truth", default="truth.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="score reports against truth")
    p.add_argument("--mode", choices=("speeds", "map50", "cer"), required=True)
    p.add_argument("reports", help="tracks.jsonl | predictions.jsonl | predicted id,text CSV")
    p.add_argument("truth", help="truth CSV / gun CSV | ground-truth boxes JSONL | true id,text CSV")
    p.add_argument("--out", help="write the metrics report as JSON")
    p.add_argument("--margin", type=float, default=10.0, help="speed error margin in km/h")
    p.add_argument("--window-ms", type=float, default=0.0, help="widen track intervals when matching gun records")
    p.add_argument("--min-within", type=float, help="fail unless this fraction is within the margin")
    p.add_argument("--max-mae", type=float)
    p.add_argument("--min-map", type=float)
    p.add_argument("--max-cer", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ticket", help="ticket operations")
    tsub = p.add_subparsers(dest="ticket_command", required=True)
    s = tsub.add_parser("send", help="deliver Pending tickets from a ticket log")
    s.add_argument("--log", required=True)
    s.add_argument("--registry")
    s.add_argument("--url", help="gateway endpoint (default $SENTINEL_SMS_URL)")
    s.add_argument("--username", help="gateway username (default $SENTINEL_SMS_USER)")
    s.add_argument("--attempts", type=int)
    s.add_argument("--backoff-base", type=float)
    s.set_defaults(func=cmd_ticket_send)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
