"""
Calibrating a roadside camera
=============================

Four pixel corners of a road stretch are paired with a metric rectangle.
The homography between them turns a box's bottom-center into road metres.
"""

import numpy as np

from roadsentinel import Calibration, Quad, anchor_of, transform_point
from roadsentinel.geometry import BBox

# corners A B C D of the stretch, clockwise from top-left, in pixels
quad = Quad.from_points([(760, 420), (1160, 420), (1800, 1050), (120, 1050)])
cal = Calibration(quad, target_width=10.5, target_length=40.0, fps=25.0, speed_limit=50.0)
print("H =\n", np.round(cal.homography.matrix, 6))

# each corner should land on its rectangle corner
for s, t in zip(quad.as_array().tolist(), cal.target.as_array().tolist()):
    x, y = transform_point(cal.homography, tuple(s))
    print(f"{s} -> ({x:.6f}, {y:.6f})  expected {t}")

# a car whose wheels touch the image at row 800
car = BBox(900, 700, 1060, 800)
x, y = cal.to_metric(anchor_of(car))
print(f"anchor {anchor_of(car)} -> ({x:.3f}, {y:.3f}) m")

# rows near the horizon are compressed: one pixel there is many metres
for row in (440, 600, 1000):
    a, b = cal.to_metric((960, row)), cal.to_metric((960, row + 1))
    print(f"row {row}: 1 px = {b[1] - a[1]:.3f} m along the road")
