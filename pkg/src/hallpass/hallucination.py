"""Virtual obstacle fields and scan fusion.

A field is a row of equal-radius circles laid out along a robot's planned
path, offset to the robot's left. Fusing the field's synthetic scan into the
real scan by elementwise minimum makes the unmodified local planner treat the
circles as real walls, which is what steers head-on robots into a pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Polyline, ray_circles_hit
from .simcore import MIN_RANGE, LidarScan, ScanGeometry

CIRCLE_SPACING = 0.05
MIN_RADIUS = 0.01


class FieldParamError(ValueError):
    """Degenerate field parameters."""


class PathTooShortError(ValueError):
    """Planned path ends before the far edge of the requested field."""


class GeometryMismatchError(ValueError):
    """Scans with different beam layouts cannot be fused."""


@dataclass(frozen=True)
class ObstacleFieldParams:
    radius: float
    delta_r: float
    k_begin: float
    k_end: float

    def __post_init__(self):
        vals = (self.radius, self.delta_r, self.k_begin, self.k_end)
        if not all(math.isfinite(v) for v in vals):
            raise FieldParamError(f"non-finite field parameters {vals}")

    def validate(self):
        if self.radius <= 0.0:
            raise FieldParamError(f"circle radius must be positive, got {self.radius}")
        if self.k_begin > self.k_end:
            raise FieldParamError(f"k_begin {self.k_begin} > k_end {self.k_end}")
        return self

    def clamped(self, max_radius: float) -> "ObstacleFieldParams":
        """Search-space vector squashed into an executable field.

        Fractions go to [0, 1] (sorted), the radius to [MIN_RADIUS,
        max_radius]. The raw vector stays with the optimizer; only episodes
        see the clamped one.
        """
        ks = sorted((min(max(self.k_begin, 0.0), 1.0), min(max(self.k_end, 0.0), 1.0)))
        r = min(max(self.radius, MIN_RADIUS), max_radius)
        return ObstacleFieldParams(r, self.delta_r, ks[0], ks[1])

    def as_array(self):
        return np.array([self.radius, self.delta_r, self.k_begin, self.k_end])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class ObstacleField:
    centers: np.ndarray            # (C, 2) global frame
    radius: float
    anchor_pose: np.ndarray        # robot pose when the field was activated
    detection_range: float

    def __post_init__(self):
        self.centers.flags.writeable = False
        self.anchor_pose.flags.writeable = False

    def __len__(self):
        return len(self.centers)

    def to_dict(self):
        return {
            "radius": round(self.radius, 6),
            "detection_range": round(self.detection_range, 6),
            "circles": [[round(x, 6), round(y, 6)] for x, y in self.centers.tolist()],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def build_field(params: ObstacleFieldParams, path: Polyline, robot_pose,
                detection_range: float) -> ObstacleField:
    """Lay circles along `path` ahead of the robot.

    Circle arc positions run from k_begin*D to k_end*D past the robot's
    current path position, one every 5 cm (the first one always exists).
    Centers sit delta_r to the left of the local travel direction.
    """
    params.validate()
    if detection_range <= 0.0:
        raise FieldParamError("detection range must be positive")
    pose = np.asarray(robot_pose, dtype=float)
    s0, _ = path.project(pose[:2])
    s_begin = s0 + params.k_begin * detection_range
    s_end = s0 + params.k_end * detection_range
    if s_end > path.length + 1e-9:
        raise PathTooShortError(
            f"path has {path.length - s0:.2f} m left, field needs "
            f"{params.k_end * detection_range:.2f} m"
        )
    count = int(math.floor((s_end - s_begin) / CIRCLE_SPACING + 1e-9)) + 1
    s_values = s_begin + CIRCLE_SPACING * np.arange(count)
    pts, headings = path.points_at(s_values)
    # left normal of the travel direction
    centers = pts + params.delta_r * np.stack([-np.sin(headings), np.cos(headings)], axis=1)
    return ObstacleField(
        centers=centers,
        radius=params.radius,
        anchor_pose=pose.copy(),
        detection_range=float(detection_range),
    )


def virtual_scan(pose, field: ObstacleField | None, geometry: ScanGeometry,
                 timestamp: float = 0.0) -> LidarScan:
    """Scan of the virtual circles alone; beams that miss read max_range."""
    x, y, heading = float(pose[0]), float(pose[1]), float(pose[2])
    if field is None or len(field) == 0:
        ranges = np.full(geometry.beam_count, geometry.max_range)
    else:
        angles = geometry.beam_angles(heading)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        dist = ray_circles_hit(np.array([x, y]), dirs, field.centers, field.radius)
        ranges = np.clip(dist, MIN_RANGE, geometry.max_range)
    return LidarScan(ranges=ranges, geometry=geometry, timestamp=timestamp)


def fuse(real: LidarScan, virtual: LidarScan) -> LidarScan:
    """Elementwise minimum of the two scans; only ever adds obstacles."""
    if not real.geometry.matches(virtual.geometry):
        raise GeometryMismatchError("scan geometries differ")
    return LidarScan(
        ranges=np.minimum(real.ranges, virtual.ranges),
        geometry=real.geometry,
        timestamp=real.timestamp,
    )
