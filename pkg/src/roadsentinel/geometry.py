"""Planar geometry kernel: boxes, IoU, road-plane homographies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

Point = tuple[float, float]


class GeometryError(ValueError):
    pass


class DegenerateQuad(GeometryError):
    """Quad corners are collinear, non-convex or otherwise unusable."""


class PointAtInfinity(GeometryError):
    pass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in continuous corner coordinates (x1, y1, x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box coordinates: {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise GeometryError(f"box must satisfy x1 < x2 and y1 < y2: {vals}")

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "BBox":
        x1, y1, x2, y2 = (float(v) for v in seq)
        return cls(x1, y1, x2, y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def to_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def to_xyah(self) -> np.ndarray:
        """Center x, center y, aspect ratio w/h, height."""
        cx, cy = self.center
        return np.array([cx, cy, self.width / self.height, self.height], dtype=float)

    @classmethod
    def from_xyah(cls, xyah: Sequence[float]) -> "BBox":
        cx, cy, a, h = (float(v) for v in xyah[:4])
        w = a * h
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def intersection_area(a: BBox, b: BBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(boxes_a), len(boxes_b))."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([bx.to_list() for bx in boxes_a])
    b = np.array([bx.to_list() for bx in boxes_b])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def anchor_of(b: BBox) -> Point:
    """Bottom-centre of the box, taken as the road contact point."""
    return ((b.x1 + b.x2) / 2.0, b.y2)


@dataclass(frozen=True)
class Quad:
    """Four corners A, B, C, D: top-left, top-right, bottom-right, bottom-left."""

    a: Point
    b: Point
    c: Point
    d: Point

    def __post_init__(self):
        pts = self.as_array()
        if not np.all(np.isfinite(pts)):
            raise DegenerateQuad("quad has non-finite coordinates")
        # convex, non-degenerate polygon: all turn directions share a sign
        scale = max(float(np.ptp(pts[:, 0])), float(np.ptp(pts[:, 1])), 1e-300)
        crosses = []
        for i in range(4):
            p0, p1, p2 = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
            e1, e2 = p1 - p0, p2 - p1
            crosses.append(e1[0] * e2[1] - e1[1] * e2[0])
        crosses = np.array(crosses) / scale**2
        if np.any(np.abs(crosses) < 1e-9):
            raise DegenerateQuad("three quad corners are (nearly) collinear")
        if not (np.all(crosses > 0) or np.all(crosses < 0)):
            raise DegenerateQuad("quad corners are not in convex position")

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "Quad":
        if len(points) != 4:
            raise DegenerateQuad(f"a quad needs exactly 4 points, got {len(points)}")
        a, b, c, d = (tuple(float(v) for v in p) for p in points)
        return cls(a, b, c, d)

    @classmethod
    def rectangle(cls, width: float, length: float) -> "Quad":
        return cls((0.0, 0.0), (width, 0.0), (width, length), (0.0, length))

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    def to_list(self) -> list[list[float]]:
        return [list(p) for p in (self.a, self.b, self.c, self.d)]


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map normalised so that h[2, 2] == 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise GeometryError("homography must be a finite 3x3 matrix")
        if abs(m[2, 2]) < 1e-12:
            raise GeometryError("homography has h[2,2] == 0 and cannot be normalised")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise GeometryError("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def to_list(self) -> list[list[float]]:
        return self.matrix.tolist()

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


def _hartley_transform(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1)))
    s = math.sqrt(2.0) / rms
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def estimate_homography(source: Quad, target: Quad) -> Homography:
    """Exact four-point homography taking each source corner to its target corner.

    Solved as a normalised DLT: both point sets are conditioned to zero
    centroid and RMS distance sqrt(2) before the 8x9 system is solved via SVD.
    """
    src = source.as_array()
    dst = target.as_array()
    t_src = _hartley_transform(src)
    t_dst = _hartley_transform(dst)
    src_n = (t_src @ np.column_stack([src, np.ones(4)]).T).T
    dst_n = (t_dst @ np.column_stack([dst, np.ones(4)]).T).T

    rows = []
    for (x, y, _), (u, v, _) in zip(src_n, dst_n):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    if s[-1] <= 1e-10 * s[0]:
        raise DegenerateQuad("homography system is singular")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    if abs(h[2, 2]) < 1e-12 * np.abs(h).max():
        raise DegenerateQuad("homography sends the source origin to infinity")
    try:
        return Homography(h / h[2, 2])
    except GeometryError as exc:
        raise DegenerateQuad(str(exc)) from exc


def projective_weight(h: Homography, p: Point) -> float:
    m = h.matrix
    return float(m[2, 0] * p[0] + m[2, 1] * p[1] + m[2, 2])


def transform_point(h: Homography, p: Point) -> Point:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise GeometryError(f"point must be finite: {p}")
    xp, yp, wp = h.matrix @ np.array([x, y, 1.0])
    if abs(wp) < 1e-12:
        raise PointAtInfinity(f"point {p} maps to infinity")
    return (float(xp / wp), float(yp / wp))


def transform_points(h: Homography, pts: np.ndarray) -> np.ndarray:
    """Vectorised `transform_point` over an (N, 2) array."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ h.matrix.T
    w = hom[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise PointAtInfinity("at least one point maps to infinity")
    return hom[:, :2] / w[:, None]
