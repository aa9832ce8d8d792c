"""Planar geometry helpers for polylines and oriented rectangles."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


class Pose(NamedTuple):
    x: float
    y: float
    heading: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(angle + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def as_polyline(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("a polyline needs at least two 2-d points")
    return pts


def cumulative_lengths(poly: np.ndarray) -> np.ndarray:
    deltas = np.diff(poly, axis=0)
    return np.concatenate(([0.0], np.cumsum(np.hypot(deltas[:, 0], deltas[:, 1]))))


def polyline_length(poly: np.ndarray) -> float:
    return float(cumulative_lengths(poly)[-1])


def point_at(poly: np.ndarray, cum: np.ndarray, s: float) -> np.ndarray:
    """Point at arclength s, clamped to the polyline ends."""
    s = min(max(s, 0.0), cum[-1])
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(poly) - 2)
    seg = cum[i + 1] - cum[i]
    t = 0.0 if seg <= 0.0 else (s - cum[i]) / seg
    return poly[i] + t * (poly[i + 1] - poly[i])


def heading_at(poly: np.ndarray, cum: np.ndarray, s: float) -> float:
    s = min(max(s, 0.0), cum[-1])
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(poly) - 2)
    d = poly[i + 1] - poly[i]
    return math.atan2(d[1], d[0])


def project(poly: np.ndarray, cum: np.ndarray, point) -> tuple[float, float]:
    """Project a point onto a polyline.

    Returns (arclength, signed lateral offset); positive offsets are to the
    left of the direction of travel.
    """
    p = np.asarray(point, dtype=float)
    a = poly[:-1]
    d = poly[1:] - a
    seg_len2 = np.einsum("ij,ij->i", d, d)
    seg_len2 = np.where(seg_len2 <= 0.0, 1.0, seg_len2)
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / seg_len2, 0.0, 1.0)
    foot = a + t[:, None] * d
    diff = p - foot
    dist2 = np.einsum("ij,ij->i", diff, diff)
    i = int(np.argmin(dist2))
    seg = d[i]
    seg_norm = math.hypot(seg[0], seg[1])
    s = cum[i] + t[i] * seg_norm
    # sign of the cross product tells the side
    cross = seg[0] * diff[i][1] - seg[1] * diff[i][0]
    lateral = math.copysign(math.sqrt(dist2[i]), cross) if seg_norm > 0 else 0.0
    return float(s), float(lateral)


def resample(poly: np.ndarray, step: float) -> np.ndarray:
    """Resample at roughly even spacing, keeping both end points."""
    cum = cumulative_lengths(poly)
    total = cum[-1]
    if total <= step:
        return np.vstack([poly[0], poly[-1]])
    n = max(int(math.ceil(total / step)), 1)
    stations = np.linspace(0.0, total, n + 1)
    return np.vstack([point_at(poly, cum, s) for s in stations])


def offset_polyline(poly: np.ndarray, offsets) -> np.ndarray:
    """Offset each vertex along its local normal; positive is left."""
    offsets = np.broadcast_to(np.asarray(offsets, dtype=float), (len(poly),))
    d = np.gradient(poly, axis=0)
    norm = np.hypot(d[:, 0], d[:, 1])
    norm = np.where(norm <= 0.0, 1.0, norm)
    normals = np.column_stack([-d[:, 1] / norm, d[:, 0] / norm])
    return poly + normals * offsets[:, None]


def curvatures(poly: np.ndarray, cum: np.ndarray) -> np.ndarray:
    """Unsigned curvature per vertex from heading finite differences."""
    d = np.diff(poly, axis=0)
    headings = np.arctan2(d[:, 1], d[:, 0])
    kappa = np.zeros(len(poly))
    for i in range(1, len(poly) - 1):
        ds = cum[i + 1] - cum[i - 1]
        if ds > 1e-9:
            dpsi = normalize_angle(headings[i] - headings[i - 1])
            kappa[i] = abs(dpsi) / (0.5 * ds)
    if len(poly) > 2:
        kappa[0] = kappa[1]
        kappa[-1] = kappa[-2]
    return kappa


def rect_corners(x: float, y: float, heading: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def rects_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Strict overlap test for two convex quads (separating axes).

    Shapes that merely touch along an edge or corner do not count.
    """
    for quad in (a, b):
        for i in range(4):
            edge = quad[(i + 1) % 4] - quad[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a @ axis
            pb = b @ axis
            if pa.max() <= pb.min() + 1e-12 or pb.max() <= pa.min() + 1e-12:
                return False
    return True


def blend_profile(u: float) -> float:
    """Cosine ease from 0 to 1 for u in [0, 1]."""
    u = min(max(u, 0.0), 1.0)
    return 0.5 * (1.0 - math.cos(math.pi * u))
