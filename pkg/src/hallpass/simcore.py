"""Deterministic episode physics: unicycle integration, 2D LiDAR, collisions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import min_distance_to_segments, norm_angle, ray_circles_hit, ray_segments_hit
from .world import HallwayMap

# platform defaults: 65 cm wide differential-drive base, 1.0 m/s top speed
FOOTPRINT_RADIUS = 0.325
V_MAX = 1.0
OMEGA_MAX = 1.5
ACCEL_MAX = 1.0
SIM_DT = 0.05

MIN_RANGE = 1e-3


class CommandLimitError(ValueError):
    """Commanded velocity outside the platform limits."""


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float
    v: float = 0.0
    omega: float = 0.0
    radius: float = FOOTPRINT_RADIUS

    def __post_init__(self):
        object.__setattr__(self, "heading", float(norm_angle(self.heading)))

    @property
    def position(self):
        return np.array([self.x, self.y])

    @property
    def pose(self):
        return np.array([self.x, self.y, self.heading])


@dataclass(frozen=True)
class ScanGeometry:
    fov: float = math.radians(170.0)
    beam_count: int = 683
    max_range: float = 20.0
    mount_offset: float = 0.0
    _rel_angles: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.beam_count < 2:
            raise ValueError("beam_count must be >= 2")
        if not 0.0 < self.fov <= 2 * math.pi:
            raise ValueError("field of view must be in (0, 2*pi]")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")
        rel = self.mount_offset + np.linspace(-self.fov / 2, self.fov / 2, self.beam_count)
        rel.flags.writeable = False
        object.__setattr__(self, "_rel_angles", rel)

    def beam_angles(self, heading):
        return heading + self._rel_angles

    def matches(self, other):
        return (
            self.fov == other.fov
            and self.beam_count == other.beam_count
            and self.max_range == other.max_range
            and self.mount_offset == other.mount_offset
        )


@dataclass(frozen=True)
class LidarScan:
    ranges: np.ndarray
    geometry: ScanGeometry
    timestamp: float = 0.0

    def __post_init__(self):
        self.ranges.flags.writeable = False


def integrate(state: RobotState, cmd, dt: float,
              v_max: float = V_MAX, omega_max: float = OMEGA_MAX) -> RobotState:
    """Exact arc update of the unicycle model over one step."""
    v, w = float(cmd[0]), float(cmd[1])
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if abs(v) > v_max + 1e-9 or abs(w) > omega_max + 1e-9:
        raise CommandLimitError(f"command ({v}, {w}) exceeds limits ({v_max}, {omega_max})")
    th = state.heading
    if abs(w) < 1e-9:
        x = state.x + v * dt * math.cos(th)
        y = state.y + v * dt * math.sin(th)
        th_new = th
    else:
        # rotate about the arc center at radius v/w
        r = v / w
        th_new = th + w * dt
        x = state.x + r * (math.sin(th_new) - math.sin(th))
        y = state.y + r * (math.cos(th) - math.cos(th_new))
    return replace(state, x=x, y=y, heading=norm_angle(th_new), v=v, omega=w)


def simulate_scan(pose, hmap: HallwayMap, other: RobotState | None,
                  geometry: ScanGeometry, timestamp: float = 0.0) -> LidarScan:
    """Ray-cast every beam against the walls and the peer's footprint disc."""
    x, y, heading = float(pose[0]), float(pose[1]), float(pose[2])
    angles = geometry.beam_angles(heading)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    origin = np.array([x, y])
    dist = ray_segments_hit(origin, dirs, hmap.walls)
    if other is not None:
        dist = np.minimum(
            dist, ray_circles_hit(origin, dirs, other.position[None, :], other.radius)
        )
    ranges = np.clip(dist, MIN_RANGE, geometry.max_range)
    return LidarScan(ranges=ranges, geometry=geometry, timestamp=timestamp)


def disc_hits_walls(center, radius: float, hmap: HallwayMap) -> bool:
    return bool(min_distance_to_segments(np.asarray(center, dtype=float)[None, :], hmap.walls)[0] < radius)


def in_collision(a: RobotState, b: RobotState | None, hmap: HallwayMap) -> bool:
    """Disc-disc and disc-wall contact test."""
    if b is not None:
        if math.hypot(a.x - b.x, a.y - b.y) < a.radius + b.radius:
            return True
        if disc_hits_walls(b.position, b.radius, hmap):
            return True
    return disc_hits_walls(a.position, a.radius, hmap)


def scan_points(scan: LidarScan, pose, max_dist: float | None = None):
    """Global-frame hit points of returning beams, optionally range-limited."""
    angles = scan.geometry.beam_angles(float(pose[2]))
    r = scan.ranges
    mask = r < scan.geometry.max_range - 1e-9
    if max_dist is not None:
        mask &= r <= max_dist
    pts = np.stack(
        [pose[0] + r[mask] * np.cos(angles[mask]), pose[1] + r[mask] * np.sin(angles[mask])],
        axis=1,
    )
    return pts
