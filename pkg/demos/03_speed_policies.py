"""
From many speed samples to one number
=====================================

A track emits a speed every frame once its anchor window is full. The
assignment policy picks what gets reported.
"""

import numpy as np

from roadsentinel import SpeedPolicy, assign_speed
from roadsentinel.sim import NoiseSpec, generate_scenario, single_vehicle_spec
from roadsentinel.speed import AnchorHistory, instantaneous_speed

spec = single_vehicle_spec(62.0, noise=NoiseSpec(jitter_px=2.0))
frames, _ = generate_scenario(spec, seed=3)
cal = spec.calibration

samples = []
for window in (10, 25, 50):
    h = AnchorHistory(window)
    out = []
    for fr in frames:
        for d in fr.detections:
            if d.cls == "car" and h.push(fr.frame_index, d.bbox, cal):
                s = instantaneous_speed(h, cal, window)
                if s is not None:
                    out.append(s.speed_kmh)
    out = np.array(out)
    print(f"window {window:2d}: {len(out):3d} samples, spread {out.min():.1f}..{out.max():.1f} km/h")
    if window == 25:
        samples = out

# longer windows average out pixel jitter; Max still picks the worst case
for policy in SpeedPolicy:
    print(f"{policy.value:>6}: {assign_speed(samples, policy):.1f} km/h (commanded 62)")
