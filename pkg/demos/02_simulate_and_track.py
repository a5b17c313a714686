"""
Synthetic traffic through the engine
====================================

Render a noisy 20-vehicle scene, run detection-to-report, and compare
each reported speed with the commanded one.
"""

import time
from pathlib import Path

from roadsentinel import EngineConfig, run_stream
from roadsentinel.sim import generate_scenario, load_scenario, evaluate_speeds

here = Path(__file__).parent
spec = load_scenario(here / "data" / "traffic.json", seed=7)
frames, truth = generate_scenario(spec, seed=7)
print(f"{len(frames)} frames, {len(truth)} vehicles")

config = EngineConfig(calibration=spec.calibration)
t0 = time.perf_counter()
result = run_stream(frames, config, here / "out" / "traffic", send=False)
print(f"engine took {time.perf_counter() - t0:.2f} s for {len(result.reports)} tracks")

ev = evaluate_speeds(result.reports, truth)
print(ev.summary_table())

# the tracks that went over 60 km/h (limit 50 + margin 10)
for r in result.reports:
    if r.violation:
        print(f"track {r.track_id} {r.plate} {r.assigned_speed:.1f} km/h -> ticket {r.ticket_id}")
