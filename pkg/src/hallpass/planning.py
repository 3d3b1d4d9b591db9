"""Global max-margin planning and the scan-driven reactive local planner.

The global planner runs Dijkstra on a 5 cm grid whose edge costs penalize
low wall clearance, standing in for a maximize-the-margin planner. The local
planner samples (v, omega) arcs, drops every arc that comes within the safety
margin of a scan point over the look-ahead window, and picks the safe arc
that makes the most progress along the path. Both are deliberately memoryless
in the scan: they treat whatever scan they are given as the truth, which is
exactly the property the hallucination layer relies on.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Polyline, norm_angle
from .simcore import FOOTPRINT_RADIUS, OMEGA_MAX, V_MAX, scan_points
from .world import HallwayMap, clearance_many

GRID_RESOLUTION = 0.05
CLEARANCE_WEIGHT = 2.0
WAYPOINT_SPACING = 0.10


class NoPathError(RuntimeError):
    """Goal not reachable on the clearance grid."""


class _Failure:
    __slots__ = ()

    def __repr__(self):
        return "FAILURE"

    def __reduce__(self):
        return (_failure_instance, ())


FAILURE = _Failure()


def _failure_instance():
    return FAILURE


# ---------------------------------------------------------------------------
# global planner


def plan_global(hmap: HallwayMap, start, goal,
                robot_radius: float = FOOTPRINT_RADIUS,
                resolution: float = GRID_RESOLUTION,
                clearance_weight: float = CLEARANCE_WEIGHT) -> Polyline:
    """Shortest clearance-weighted grid path from start to goal.

    Edge cost is step_length * (1 + w * (max_clearance - local_clearance)),
    so the cheapest route through a uniform corridor is its centerline.
    """
    start = np.asarray(start, dtype=float)[:2]
    goal = np.asarray(goal, dtype=float)[:2]
    x0, y0, x1, y1 = hmap.bounds()
    # anchor the lattice on multiples of the resolution so corridor
    # centerlines land exactly on grid rows
    gx0 = math.floor(x0 / resolution) * resolution
    gy0 = math.floor(y0 / resolution) * resolution
    nx = int(round((x1 - gx0) / resolution)) + 1
    ny = int(round((y1 - gy0) / resolution)) + 1
    xs = gx0 + resolution * np.arange(nx)
    ys = gy0 + resolution * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    cells = np.stack([gx.ravel(), gy.ravel()], axis=1)
    clear = clearance_many(hmap, cells).reshape(nx, ny)
    free = clear > robot_radius
    if not free.any():
        raise NoPathError("no traversable cells")
    c_max = float(clear[free].max())

    def nearest_free(p):
        i = int(round((p[0] - gx0) / resolution))
        j = int(round((p[1] - gy0) / resolution))
        best = None
        for di in range(-9, 10):
            for dj in range(-9, 10):
                a, b = i + di, j + dj
                if 0 <= a < nx and 0 <= b < ny and free[a, b]:
                    d2 = di * di + dj * dj
                    if best is None or d2 < best[0]:
                        best = (d2, a, b)
        if best is None:
            raise NoPathError(f"no free cell near ({p[0]:.2f}, {p[1]:.2f})")
        return best[1], best[2]

    si, sj = nearest_free(start)
    ti, tj = nearest_free(goal)

    moves = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    dist = np.full((nx, ny), np.inf)
    came = np.full((nx, ny, 2), -1, dtype=np.int32)
    dist[si, sj] = 0.0
    heap = [(0.0, 0, si, sj)]
    counter = 1
    while heap:
        d, _, i, j = heapq.heappop(heap)
        if (i, j) == (ti, tj):
            break
        if d > dist[i, j]:
            continue
        for di, dj in moves:
            a, b = i + di, j + dj
            if not (0 <= a < nx and 0 <= b < ny) or not free[a, b]:
                continue
            if di and dj and not (free[i, b] and free[a, j]):
                continue  # no corner cutting through blocked cells
            step = resolution * (math.sqrt(2.0) if di and dj else 1.0)
            c_avg = 0.5 * (clear[i, j] + clear[a, b])
            nd = d + step * (1.0 + clearance_weight * (c_max - c_avg))
            if nd < dist[a, b] - 1e-12:
                dist[a, b] = nd
                came[a, b] = (i, j)
                heapq.heappush(heap, (nd, counter, a, b))
                counter += 1
    if not np.isfinite(dist[ti, tj]):
        raise NoPathError("goal unreachable from start")

    cells_path = [(ti, tj)]
    while cells_path[-1] != (si, sj):
        i, j = cells_path[-1]
        cells_path.append(tuple(came[i, j]))
    cells_path.reverse()
    pts = [start] + [(gx0 + i * resolution, gy0 + j * resolution) for i, j in cells_path] + [goal]
    return Polyline(pts).resampled(WAYPOINT_SPACING)


# ---------------------------------------------------------------------------
# local planner


@dataclass(frozen=True)
class PlannerParams:
    horizon: float = 4.0                       # meters of arc at full speed
    safety_margin: float = FOOTPRINT_RADIUS + 0.05
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX
    v_samples: int = 11
    w_samples: int = 21
    cross_track_weight: float = 1.0


class LocalPlanner:
    """Per-robot arc sampler; one instance per robot per episode."""

    def __init__(self, path: Polyline, params: PlannerParams = PlannerParams()):
        self.params = params
        v = np.linspace(0.0, params.v_max, params.v_samples)
        w = np.linspace(-params.omega_max, params.omega_max, params.w_samples)
        vv, ww = np.meshgrid(v, w, indexing="ij")
        self._v = vv.ravel()
        self._w = ww.ravel()
        self._abs_w = np.abs(self._w)
        self.set_path(path)

    def set_path(self, path: Polyline):
        self.path = path
        self.progress = 0.0
        self.stuck_time = 0.0
        self._has_progress = False

    def _endpoints(self, x, y, th, T):
        v, w = self._v, self._w
        straight = np.abs(w) < 1e-9
        th_end = th + w * T
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(straight, 0.0, v / np.where(straight, 1.0, w))
        ex = np.where(straight, x + v * T * math.cos(th), x + r * (np.sin(th_end) - math.sin(th)))
        ey = np.where(straight, y + v * T * math.sin(th), y + r * (math.cos(th) - np.cos(th_end)))
        return np.stack([ex, ey], axis=1)

    @staticmethod
    def arc_min_distance(points, x, y, th, v, w, T):
        """Min distance from `points` to the arc swept holding (v, w) for T."""
        if len(points) == 0:
            return np.inf
        p0 = np.array([x, y])
        if v < 1e-9:
            d = points - p0
            return float(np.sqrt(np.einsum("ij,ij->i", d, d)).min())
        if abs(w) < 1e-9:
            end = p0 + v * T * np.array([math.cos(th), math.sin(th)])
            seg = end - p0
            ln2 = float(seg @ seg)
            t = np.clip((points - p0) @ seg / ln2, 0.0, 1.0)
            foot = p0 + t[:, None] * seg
            d = points - foot
            return float(np.sqrt(np.einsum("ij,ij->i", d, d)).min())
        radius = v / w
        cx = x - radius * math.sin(th)
        cy = y + radius * math.cos(th)
        rel = points - np.array([cx, cy])
        rho = np.hypot(rel[:, 0], rel[:, 1])
        phi = np.arctan2(rel[:, 1], rel[:, 0])
        alpha0 = math.atan2(y - cy, x - cx)
        sweep = w * T
        if sweep > 0:
            inside = (phi - alpha0) % (2 * math.pi) <= sweep
        else:
            inside = (alpha0 - phi) % (2 * math.pi) <= -sweep
        d_arc = np.where(inside, np.abs(rho - abs(radius)), np.inf)
        th_end = th + sweep
        ex = x + radius * (math.sin(th_end) - math.sin(th))
        ey = y + radius * (math.cos(th) - math.cos(th_end))
        d_ends = np.minimum(
            np.hypot(points[:, 0] - x, points[:, 1] - y),
            np.hypot(points[:, 0] - ex, points[:, 1] - ey),
        )
        return float(np.minimum(d_arc, d_ends).min())

    def plan(self, state, scan):
        """Best safe (v, omega) command, or FAILURE when no arc is safe."""
        p = self.params
        T = p.horizon / p.v_max
        pose = (state.x, state.y, state.heading)
        reach = p.horizon + p.safety_margin + 0.5
        pts = scan_points(scan, pose, max_dist=reach)

        if self._has_progress:
            window = (self.progress - 3.0, self.progress + 3.0)
        else:
            window = None
        s_now, _ = self.path.project(state.position, window=window)
        self.progress = s_now
        self._has_progress = True

        ends = self._endpoints(state.x, state.y, state.heading, T)
        s_end, xt = self.path.project_many(
            ends, window=(s_now - 2.0, s_now + p.horizon + 2.0)
        )
        score = s_end - p.cross_track_weight * xt
        order = np.lexsort((-self._v, self._abs_w, -score))
        for i in order:
            d = self.arc_min_distance(
                pts, state.x, state.y, state.heading, self._v[i], self._w[i], T
            )
            if d >= p.safety_margin:
                if self._v[i] < 1e-9:
                    self.stuck_time += 1
                else:
                    self.stuck_time = 0
                return float(self._v[i]), float(self._w[i])
        self.stuck_time += 1
        return FAILURE


def plan_local(state, scan, path: Polyline, params: PlannerParams = PlannerParams()):
    """One-shot stateless wrapper around LocalPlanner."""
    return LocalPlanner(path, params).plan(state, scan)


# ---------------------------------------------------------------------------
# failure detection


def detect_failure(times, positions, headings, path: Polyline, reached: bool,
                   timeout: float, *, regress_limit: float = 1.0,
                   opposition_deg: float = 120.0, opposition_secs: float = 3.0) -> bool:
    """Turnaround/timeout test on one robot's episode trace.

    Fails when path progress falls more than `regress_limit` below its running
    maximum, when the heading opposes the local path tangent for longer than
    `opposition_secs`, or when the robot is still out at the episode timeout.
    """
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        return False
    positions = np.asarray(positions, dtype=float)
    headings = np.asarray(headings, dtype=float)
    s, _ = path.project_many(positions)
    if np.any(np.maximum.accumulate(s) - s > regress_limit):
        return True
    _, tangents = path.points_at(s)
    opposed = np.abs(norm_angle(headings - tangents)) > math.radians(opposition_deg)
    if opposed.any():
        run_start = None
        for t, bad in zip(times, opposed):
            if bad and run_start is None:
                run_start = t
            elif not bad:
                run_start = None
            if run_start is not None and t - run_start > opposition_secs:
                return True
    if not reached and times[-1] >= timeout - 1e-6:
        return True
    return False
