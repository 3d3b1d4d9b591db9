"""Vectorized 2D primitives shared by the map, sensor, and planner code.

Everything works on plain numpy arrays: points are (..., 2), wall segments
are rows of (x1, y1, x2, y2).
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def norm_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = -((-a + math.pi) % TWO_PI - math.pi)
    return float(out) if out.ndim == 0 else out


def unit(theta):
    """Unit vector(s) for heading(s)."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def left_normal(theta):
    """Unit vector 90 degrees to the left of heading."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([-np.sin(theta), np.cos(theta)], axis=-1)


def point_segment_distance(points, segments):
    """Distances from each point to each segment, shape (N, M).

    points: (N, 2); segments: (M, 4) as (x1, y1, x2, y2).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    segments = np.atleast_2d(np.asarray(segments, dtype=float))
    a = segments[:, 0:2]
    d = segments[:, 2:4] - a  # (M, 2)
    len2 = np.einsum("ij,ij->i", d, d)
    len2 = np.where(len2 < 1e-18, 1.0, len2)
    # t = clamp(((p - a) . d) / |d|^2, 0, 1), foot = a + t d
    pa = points[:, None, :] - a[None, :, :]  # (N, M, 2)
    t = np.clip(np.einsum("nmj,mj->nm", pa, d) / len2[None, :], 0.0, 1.0)
    foot = a[None, :, :] + t[..., None] * d[None, :, :]
    diff = points[:, None, :] - foot
    return np.sqrt(np.einsum("nmj,nmj->nm", diff, diff))


def min_distance_to_segments(points, segments):
    """Min distance from each point to the segment set, shape (N,)."""
    if len(segments) == 0:
        return np.full(len(np.atleast_2d(points)), np.inf)
    return point_segment_distance(points, segments).min(axis=1)


def ray_segments_hit(origin, directions, segments):
    """First-hit distance of rays against segments, shape (B,); inf on miss.

    origin: (2,); directions: (B, 2) unit vectors; segments: (M, 4).
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    segments = np.atleast_2d(np.asarray(segments, dtype=float))
    if segments.size == 0:
        return np.full(len(directions), np.inf)
    origin = np.asarray(origin, dtype=float)
    p = segments[:, 0:2]
    s = segments[:, 2:4] - p  # (M, 2)
    qp = p - origin  # (M, 2)
    # ray o + t*d vs segment p + u*s:
    #   t = (qp x s) / (d x s),  u = (qp x d) / (d x s)
    denom = directions[:, 0:1] * s[None, :, 1] - directions[:, 1:2] * s[None, :, 0]
    qp_cross_s = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]  # (M,)
    qp_cross_d = qp[None, :, 0] * directions[:, 1:2] - qp[None, :, 1] * directions[:, 0:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = qp_cross_s[None, :] / denom
        u = qp_cross_d / denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    t = np.where(ok, t, np.inf)
    return t.min(axis=1)


def ray_circles_hit(origin, directions, centers, radius):
    """First-hit distance of rays against discs, shape (B,); inf on miss.

    A ray whose origin lies inside a disc reports 0. Tangency within a
    1e-12 discriminant slack still counts as a hit.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.size == 0:
        return np.full(len(directions), np.inf)
    origin = np.asarray(origin, dtype=float)
    radius = np.asarray(radius, dtype=float)
    f = origin[None, :] - centers  # (C, 2)
    b = np.einsum("bj,cj->bc", directions, f)  # (B, C)
    c = np.einsum("cj,cj->c", f, f) - radius**2  # (C,)
    disc = b**2 - c[None, :]
    hit = disc >= -1e-12
    sq = np.sqrt(np.maximum(disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    # inside the disc (c < 0): the ray starts occluded, distance 0
    t = np.where(c[None, :] < 0.0, 0.0, np.where(t_near >= 0.0, t_near, np.inf))
    t = np.where(hit, t, np.inf)
    t = np.where(hit & (t_far < 0.0), np.inf, t)  # circle entirely behind
    return t.min(axis=1)


class Polyline:
    """Piecewise-linear path with arc-length lookups and projections."""

    __slots__ = ("points", "cum", "seg_dir", "seg_len", "length")

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2).copy()
        if len(pts) < 2:
            raise ValueError("polyline needs at least two points")
        d = np.diff(pts, axis=0)
        seg_len = np.hypot(d[:, 0], d[:, 1])
        keep = seg_len > 1e-12
        if not keep.all():
            pts = np.concatenate([pts[:1], pts[1:][keep]], axis=0)
            d = np.diff(pts, axis=0)
            seg_len = np.hypot(d[:, 0], d[:, 1])
        self.points = pts
        self.seg_len = seg_len
        self.seg_dir = d / seg_len[:, None]
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length = float(self.cum[-1])
        self.points.flags.writeable = False

    @property
    def total_length(self):
        return self.length

    def point_at(self, s):
        """Point and tangent heading at arc length s. Raises on out-of-range."""
        if s < -1e-9 or s > self.length + 1e-9:
            raise ValueError(f"arc length {s} outside [0, {self.length}]")
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right") - 1)
        i = min(i, len(self.seg_len) - 1)
        p = self.points[i] + (s - self.cum[i]) * self.seg_dir[i]
        heading = math.atan2(self.seg_dir[i, 1], self.seg_dir[i, 0])
        return p, heading

    def points_at(self, s_values):
        """Vectorized point_at for positions only, shape (K, 2) + headings (K,)."""
        s = np.clip(np.asarray(s_values, dtype=float), 0.0, self.length)
        i = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.seg_len) - 1)
        pts = self.points[i] + (s - self.cum[i])[:, None] * self.seg_dir[i]
        headings = np.arctan2(self.seg_dir[i, 1], self.seg_dir[i, 0])
        return pts, headings

    def project(self, point, window=None):
        """Arc length and distance of the closest path point to `point`.

        window: optional (s_lo, s_hi) restricting the searched segments.
        Returns (s, distance).
        """
        lo, hi = 0, len(self.seg_len)
        if window is not None:
            lo = max(0, int(np.searchsorted(self.cum, window[0], side="right") - 1))
            hi = min(len(self.seg_len), int(np.searchsorted(self.cum, window[1], side="left") + 1))
            if hi <= lo:
                lo, hi = 0, len(self.seg_len)
        return self._project_range(np.asarray(point, dtype=float), lo, hi)

    def _project_range(self, point, lo, hi):
        a = self.points[lo:hi]
        d = self.seg_dir[lo:hi]
        ln = self.seg_len[lo:hi]
        pa = point[None, :] - a
        t = np.clip(np.einsum("ij,ij->i", pa, d), 0.0, ln)
        foot = a + t[:, None] * d
        diff = point[None, :] - foot
        dist2 = np.einsum("ij,ij->i", diff, diff)
        k = int(np.argmin(dist2))
        return float(self.cum[lo + k] + t[k]), float(math.sqrt(dist2[k]))

    def project_many(self, points, window=None):
        """Vectorized projection: arrays (s, distance) for points (N, 2)."""
        lo, hi = 0, len(self.seg_len)
        if window is not None:
            lo = max(0, int(np.searchsorted(self.cum, window[0], side="right") - 1))
            hi = min(len(self.seg_len), int(np.searchsorted(self.cum, window[1], side="left") + 1))
            if hi <= lo:
                lo, hi = 0, len(self.seg_len)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        a = self.points[lo:hi]
        d = self.seg_dir[lo:hi]
        ln = self.seg_len[lo:hi]
        pa = points[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nmj,mj->nm", pa, d), 0.0, ln[None, :])
        foot = a[None, :, :] + t[..., None] * d[None, :, :]
        diff = points[:, None, :] - foot
        dist2 = np.einsum("nmj,nmj->nm", diff, diff)
        k = np.argmin(dist2, axis=1)
        rows = np.arange(len(points))
        s = self.cum[lo + k] + t[rows, k]
        return s, np.sqrt(dist2[rows, k])

    def resampled(self, spacing):
        """New polyline with vertices every `spacing` meters (ends kept)."""
        n = max(2, int(math.ceil(self.length / spacing)) + 1)
        s = np.linspace(0.0, self.length, n)
        pts, _ = self.points_at(s)
        return Polyline(pts)

    def reversed(self):
        return Polyline(self.points[::-1])
