"""Hallway maps: I-, L-, T- and Z-shaped corridors built from wall segments.

A map carries the wall segments, the free region as a union of axis-aligned
rectangles, a centerline polyline with per-vertex design half-widths, and the
two facing spawn/goal poses placed `spawn_separation` apart along the
centerline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Polyline, min_distance_to_segments, norm_angle

SHAPES = ("I", "L", "T", "Z")

# straight-arm lengths (m) leaving spare centerline beyond the default
# 14 m spawn separation; corner fillets shorten L/Z centerlines
DEFAULT_ARM_LENGTHS = {"I": (16.0,), "L": (8.0, 8.0), "T": (16.0, 4.0), "Z": (8.0, 4.0)}
DEFAULT_WIDTHS = {"I": (1.6,), "L": (1.6, 1.6), "T": (1.6, 1.6), "Z": (1.6, 1.6)}

CENTERLINE_SPACING = 0.05
FILLET_STEPS = 24


class MapSpecError(ValueError):
    """Invalid hallway dimensions."""


class SpawnSeparationError(MapSpecError):
    """Spawn separation does not fit on the centerline."""


@dataclass(frozen=True)
class HallwaySpec:
    shape: str
    widths: tuple = None
    arm_lengths: tuple = None
    spawn_separation: float = 14.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise MapSpecError(f"unknown hallway shape {self.shape!r}")
        widths = self.widths if self.widths is not None else DEFAULT_WIDTHS[self.shape]
        arms = self.arm_lengths if self.arm_lengths is not None else DEFAULT_ARM_LENGTHS[self.shape]
        n = 1 if self.shape == "I" else 2
        widths = tuple(float(w) for w in np.atleast_1d(widths))
        arms = tuple(float(a) for a in np.atleast_1d(arms))
        if len(widths) == 1 and n == 2:
            widths = widths * 2
        if len(widths) != n or len(arms) != n:
            raise MapSpecError(f"{self.shape}-shape needs {n} width(s) and arm length(s)")
        if any(w <= 0 for w in widths) or any(a <= 0 for a in arms):
            raise MapSpecError("widths and arm lengths must be positive")
        if self.spawn_separation <= 0:
            raise MapSpecError("spawn separation must be positive")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "arm_lengths", arms)
        object.__setattr__(self, "spawn_separation", float(self.spawn_separation))

    def key(self):
        return (self.shape, self.widths, self.arm_lengths, self.spawn_separation)


@dataclass(frozen=True)
class HallwayMap:
    spec: HallwaySpec
    walls: np.ndarray                 # (M, 4) segments
    rects: np.ndarray                 # (R, 4) free-space rectangles (x0, y0, x1, y1)
    centerline: Polyline
    halfwidths: np.ndarray            # per centerline vertex design clearance
    spawn_poses: np.ndarray           # (2, 3) x, y, heading
    goal_poses: np.ndarray            # (2, 3)
    spawn_s: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        for arr in (self.walls, self.rects, self.halfwidths, self.spawn_poses, self.goal_poses):
            arr.flags.writeable = False

    @property
    def max_halfwidth(self):
        return float(self.halfwidths.max())

    def contains(self, points):
        """Inside test against the free rectangles, shape (N,).

        Boundaries count as inside; points exactly on a wall still read a
        clearance of zero through their zero wall distance.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r = self.rects
        eps = 1e-9
        inside = (
            (p[:, None, 0] >= r[None, :, 0] - eps) & (p[:, None, 0] <= r[None, :, 2] + eps)
            & (p[:, None, 1] >= r[None, :, 1] - eps) & (p[:, None, 1] <= r[None, :, 3] + eps)
        )
        return inside.any(axis=1)

    def bounds(self):
        r = self.rects
        return float(r[:, 0].min()), float(r[:, 1].min()), float(r[:, 2].max()), float(r[:, 3].max())


def clearance(hmap: HallwayMap, point) -> float:
    """Distance from `point` to the nearest wall; 0 on or outside the boundary."""
    return float(clearance_many(hmap, np.asarray(point, dtype=float)[None, :])[0])


def clearance_many(hmap: HallwayMap, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = min_distance_to_segments(points, hmap.walls)
    return np.where(hmap.contains(points), d, 0.0)


def point_at_arclength(polyline: Polyline, s: float):
    """(point, tangent heading) at arc length s; raises outside [0, length]."""
    return polyline.point_at(s)


def _line_dist(point, line):
    # line as (point, inward unit normal); signed distance along the normal
    p0, n = line
    return (point[0] - p0[0]) * n[0] + (point[1] - p0[1]) * n[1]


def _corner_fillet(corner, start, end, outer_lines):
    """Medial-axis fillet between two perpendicular centerlines.

    corner: inner-corner wall point; start/end: fillet junction points on the
    straight centerlines; outer_lines: the two opposite walls as
    (point, inward normal). Points are equidistant from the inner corner and
    the nearer outer wall, which keeps the centerline-clearance invariant at
    the junction. With equal arm widths this is the circular arc of radius
    width/2 around the inner corner.
    """
    corner = np.asarray(corner, dtype=float)
    a0 = math.atan2(start[1] - corner[1], start[0] - corner[0])
    a1 = math.atan2(end[1] - corner[1], end[0] - corner[0])
    sweep = norm_angle(a1 - a0)
    pts = []
    for k in range(FILLET_STEPS + 1):
        phi = a0 + sweep * k / FILLET_STEPS
        u = (math.cos(phi), math.sin(phi))
        lo, hi = 1e-4, 10.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            p = (corner[0] + mid * u[0], corner[1] + mid * u[1])
            if min(_line_dist(p, line) for line in outer_lines) > mid:
                lo = mid
            else:
                hi = mid
        rho = 0.5 * (lo + hi)
        pts.append((corner[0] + rho * u[0], corner[1] + rho * u[1], rho))
    pts[0] = (start[0], start[1], pts[0][2])
    pts[-1] = (end[0], end[1], pts[-1][2])
    return pts


def _straight(p0, p1, halfwidth):
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = max(2, int(math.ceil(np.hypot(*(p1 - p0)) / CENTERLINE_SPACING)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    return [(p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]), halfwidth) for t in ts]


def _dedupe(chain):
    out = [chain[0]]
    for p in chain[1:]:
        if math.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > 1e-9:
            out.append(p)
    return out


def _build_I(widths, arms):
    w, = widths
    L, = arms
    walls = [(0.0, -w / 2, L, -w / 2), (0.0, w / 2, L, w / 2)]
    rects = [(0.0, -w / 2, L, w / 2)]
    chain = _straight((0, 0), (L, 0), w / 2)
    return walls, rects, chain


def _build_L(widths, arms):
    w1, w2 = widths
    d1, d2 = arms
    # horizontal arm along +x, vertical arm up at x = d1
    if d1 <= w2 or d2 <= w1:
        raise MapSpecError("L arms too short for their widths")
    walls = [
        (0.0, -w1 / 2, d1 + w2 / 2, -w1 / 2),
        (d1 + w2 / 2, -w1 / 2, d1 + w2 / 2, d2),
        (0.0, w1 / 2, d1 - w2 / 2, w1 / 2),
        (d1 - w2 / 2, w1 / 2, d1 - w2 / 2, d2),
    ]
    rects = [
        (0.0, -w1 / 2, d1 + w2 / 2, w1 / 2),
        (d1 - w2 / 2, -w1 / 2, d1 + w2 / 2, d2),
    ]
    corner = (d1 - w2 / 2, w1 / 2)
    fillet = _corner_fillet(
        corner,
        start=(d1 - w2 / 2, 0.0),
        end=(d1, w1 / 2),
        outer_lines=(((0.0, -w1 / 2), (0.0, 1.0)), ((d1 + w2 / 2, 0.0), (-1.0, 0.0))),
    )
    chain = (
        _straight((0, 0), (d1 - w2 / 2, 0), w1 / 2)
        + fillet
        + _straight((d1, w1 / 2), (d1, d2), w2 / 2)
    )
    return walls, rects, chain


def _build_T(widths, arms):
    w1, w2 = widths
    Lbar, Lstem = arms
    xm = Lbar / 2
    if Lbar <= 2 * w2:
        raise MapSpecError("T bar too short for the stem width")
    walls = [
        (0.0, -w1 / 2, Lbar, -w1 / 2),
        (0.0, w1 / 2, xm - w2 / 2, w1 / 2),
        (xm - w2 / 2, w1 / 2, xm - w2 / 2, w1 / 2 + Lstem),
        (xm + w2 / 2, w1 / 2, xm + w2 / 2, w1 / 2 + Lstem),
        (xm + w2 / 2, w1 / 2, Lbar, w1 / 2),
    ]
    rects = [
        (0.0, -w1 / 2, Lbar, w1 / 2),
        (xm - w2 / 2, -w1 / 2, xm + w2 / 2, w1 / 2 + Lstem),
    ]
    # traffic runs along the bar; the stem is an open side branch
    chain = _straight((0, 0), (Lbar, 0), w1 / 2)
    return walls, rects, chain


def _build_Z(widths, arms):
    w1, w2 = widths
    d1, jog = arms
    if jog <= w1:
        raise MapSpecError("Z jog must be longer than the corridor width")
    if d1 <= w2:
        raise MapSpecError("Z arms too short for the jog width")
    xj = d1
    xe = xj + d1
    walls = [
        (0.0, -w1 / 2, xj + w2 / 2, -w1 / 2),
        (xj + w2 / 2, -w1 / 2, xj + w2 / 2, jog - w1 / 2),
        (xj + w2 / 2, jog - w1 / 2, xe, jog - w1 / 2),
        (xe, jog + w1 / 2, xj - w2 / 2, jog + w1 / 2),
        (xj - w2 / 2, jog + w1 / 2, xj - w2 / 2, w1 / 2),
        (xj - w2 / 2, w1 / 2, 0.0, w1 / 2),
    ]
    rects = [
        (0.0, -w1 / 2, xj + w2 / 2, w1 / 2),
        (xj - w2 / 2, -w1 / 2, xj + w2 / 2, jog + w1 / 2),
        (xj - w2 / 2, jog - w1 / 2, xe, jog + w1 / 2),
    ]
    c1 = (xj - w2 / 2, w1 / 2)  # left turn into the jog
    f1 = _corner_fillet(
        c1,
        start=(xj - w2 / 2, 0.0),
        end=(xj, w1 / 2),
        outer_lines=(((0.0, -w1 / 2), (0.0, 1.0)), ((xj + w2 / 2, 0.0), (-1.0, 0.0))),
    )
    c2 = (xj + w2 / 2, jog - w1 / 2)  # right turn out of the jog
    f2 = _corner_fillet(
        c2,
        start=(xj, jog - w1 / 2),
        end=(xj + w2 / 2, jog),
        outer_lines=(((xj - w2 / 2, 0.0), (1.0, 0.0)), ((0.0, jog + w1 / 2), (0.0, -1.0))),
    )
    chain = (
        _straight((0, 0), (xj - w2 / 2, 0), w1 / 2)
        + f1
        + _straight((xj, w1 / 2), (xj, jog - w1 / 2), w2 / 2)
        + f2
        + _straight((xj + w2 / 2, jog), (xe, jog), w1 / 2)
    )
    return walls, rects, chain


_BUILDERS = {"I": _build_I, "L": _build_L, "T": _build_T, "Z": _build_Z}


def build_hallway(spec: HallwaySpec) -> HallwayMap:
    """Construct the wall set, centerline and facing spawn/goal poses."""
    walls, rects, chain = _BUILDERS[spec.shape](spec.widths, spec.arm_lengths)
    chain = _dedupe(chain)
    pts = np.array([(x, y) for x, y, _ in chain])
    halfwidths = np.array([h for _, _, h in chain])
    centerline = Polyline(pts)
    if spec.spawn_separation > centerline.length + 1e-9:
        raise SpawnSeparationError(
            f"spawn separation {spec.spawn_separation} exceeds centerline length "
            f"{centerline.length:.3f}"
        )
    s1 = 0.5 * (centerline.length - spec.spawn_separation)
    s2 = s1 + spec.spawn_separation
    p1, h1 = centerline.point_at(s1)
    p2, h2 = centerline.point_at(s2)
    spawns = np.array([[p1[0], p1[1], h1], [p2[0], p2[1], norm_angle(h2 + math.pi)]])
    goals = np.array([[p2[0], p2[1], h2], [p1[0], p1[1], norm_angle(h1 + math.pi)]])
    return HallwayMap(
        spec=spec,
        walls=np.asarray(walls, dtype=float),
        rects=np.asarray(rects, dtype=float),
        centerline=centerline,
        halfwidths=halfwidths,
        spawn_poses=spawns,
        goal_poses=goals,
        spawn_s=(float(s1), float(s2)),
    )


def map_to_dict(hmap: HallwayMap) -> dict:
    """JSON-ready description (walls + centerline) for external plotting."""
    return {
        "shape": hmap.spec.shape,
        "widths": list(hmap.spec.widths),
        "arm_lengths": list(hmap.spec.arm_lengths),
        "spawn_separation": hmap.spec.spawn_separation,
        "walls": [[round(v, 6) for v in seg] for seg in hmap.walls.tolist()],
        "centerline": [[round(v, 6) for v in p] for p in hmap.centerline.points.tolist()],
        "spawn_poses": [[round(v, 6) for v in p] for p in hmap.spawn_poses.tolist()],
        "goal_poses": [[round(v, 6) for v in p] for p in hmap.goal_poses.tolist()],
    }


def save_map_json(hmap: HallwayMap, path):
    with open(path, "w") as f:
        json.dump(map_to_dict(hmap), f, indent=2, sort_keys=True)
        f.write("\n")
