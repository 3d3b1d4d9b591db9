"""Passing policies: scan hallucination, right-lane, halting, and NH-ORCA.

Policies see their own robot state, their own scan, and whatever peer
messages the harness channel delivered; they never read the other robot
directly. Each returns a (v, omega) command or planning.FAILURE.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .geometry import Polyline, norm_angle
from .hallucination import (
    ObstacleField,
    ObstacleFieldParams,
    PathTooShortError,
    build_field,
    fuse,
    virtual_scan,
)
from .planning import FAILURE, LocalPlanner, PlannerParams
from .simcore import FOOTPRINT_RADIUS, ScanGeometry
from .world import HallwayMap, clearance_many


class MissingLaneError(ValueError):
    """Right-lane policy configured without a lane annotation."""


class Mode(enum.Enum):
    CRUISE = "cruise"
    AVOIDING = "avoiding"
    PARKED = "parked"


@dataclass(frozen=True)
class PeerMessage:
    sender_id: int
    x: float
    y: float
    heading: float
    v: float
    omega: float
    timestamp: float

    @property
    def position(self):
        return np.array([self.x, self.y])


@dataclass
class PolicyState:
    mode: Mode = Mode.CRUISE
    activation_time: float | None = None
    field: ObstacleField | None = None
    last_message: PeerMessage | None = None


class BasePolicy:
    """Common wiring: a local planner on the robot's global path."""

    uses_scan = True

    def __init__(self, robot_id: int, path: Polyline, planner_params: PlannerParams):
        self.robot_id = robot_id
        self.path = path
        self.planner = LocalPlanner(path, planner_params)
        self.state = PolicyState()

    def receive(self, msg: PeerMessage):
        self.state.last_message = msg

    @property
    def detected(self) -> bool:
        return self.state.mode is not Mode.CRUISE

    def _peer_in_range(self, robot_state, detection_range) -> bool:
        msg = self.state.last_message
        if msg is None:
            return False
        return math.hypot(msg.x - robot_state.x, msg.y - robot_state.y) <= detection_range

    def step(self, robot_state, scan, t):
        raise NotImplementedError


class PlainPolicy(BasePolicy):
    """The unmodified local navigation stack; ignores the peer entirely."""

    def step(self, robot_state, scan, t):
        return self.planner.plan(robot_state, scan)


class HallucinationPolicy(BasePolicy):
    """Fuses a virtual circle field into the scan after first detection."""

    def __init__(self, robot_id, path, planner_params, field_params: ObstacleFieldParams,
                 detection_range: float, geometry: ScanGeometry):
        super().__init__(robot_id, path, planner_params)
        self.field_params = field_params.validate()
        self.detection_range = detection_range
        self.geometry = geometry

    def step(self, robot_state, scan, t):
        st = self.state
        if st.mode is Mode.CRUISE and self._peer_in_range(robot_state, self.detection_range):
            # one field per episode, anchored where detection happened
            try:
                st.field = build_field(
                    self.field_params, self.path, robot_state.pose, self.detection_range
                )
            except PathTooShortError:
                st.field = None  # too close to the goal to fit the field; keep driving plain
            st.mode = Mode.AVOIDING
            st.activation_time = t
        if st.field is not None:
            scan = fuse(scan, virtual_scan(robot_state.pose, st.field, self.geometry, scan.timestamp))
        return self.planner.plan(robot_state, scan)


def right_lane_path(hmap: HallwayMap, path: Polyline) -> Polyline:
    """The path shifted a quarter corridor width to the travel-side right."""
    pts = path.points
    d = np.diff(pts, axis=0)
    tang = np.vstack([d, d[-1:]])
    tang /= np.hypot(tang[:, 0], tang[:, 1])[:, None]
    right = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    offsets = 0.5 * clearance_many(hmap, pts)  # clearance is width/2 on the centerline
    return Polyline(pts + offsets[:, None] * right).resampled(0.10)


class RightLanePolicy(BasePolicy):
    """Tracks an annotated right lane from detection until the peer has passed."""

    def __init__(self, robot_id, path, planner_params, lane: Polyline | None,
                 detection_range: float):
        if lane is None:
            raise MissingLaneError("no right-lane annotation for this map")
        super().__init__(robot_id, path, planner_params)
        self.lane = lane
        self.detection_range = detection_range
        self._passed = False

    def _peer_passed(self, robot_state) -> bool:
        msg = self.state.last_message
        if msg is None:
            return False
        bearing = math.atan2(msg.y - robot_state.y, msg.x - robot_state.x)
        behind = abs(norm_angle(bearing - robot_state.heading)) > math.radians(110.0)
        return behind and math.hypot(msg.x - robot_state.x, msg.y - robot_state.y) > 1.0

    def step(self, robot_state, scan, t):
        st = self.state
        if (
            st.mode is Mode.CRUISE
            and not self._passed
            and self._peer_in_range(robot_state, self.detection_range)
        ):
            st.mode = Mode.AVOIDING
            st.activation_time = t
            self.planner.set_path(self.lane)
        elif st.mode is Mode.AVOIDING and self._peer_passed(robot_state):
            st.mode = Mode.CRUISE
            self._passed = True
            self.planner.set_path(self.path)
        return self.planner.plan(robot_state, scan)


class HaltingPolicy(BasePolicy):
    """Designated robot pulls into the best nearby pocket until the peer passes."""

    PARK_SEARCH_RADIUS = 2.0
    PARK_TOLERANCE = 0.15

    def __init__(self, robot_id, path, planner_params, hmap: HallwayMap, halts: bool,
                 detection_range: float):
        super().__init__(robot_id, path, planner_params)
        self.hmap = hmap
        self.halts = halts
        self.detection_range = detection_range
        self.margin = planner_params.safety_margin
        self._spot = None
        self._done = False

    def _parking_spot(self, robot_state):
        """Max-clearance point within reach, biased toward the travel-side right."""
        n = 21
        offs = np.linspace(-self.PARK_SEARCH_RADIUS, self.PARK_SEARCH_RADIUS, n)
        gx, gy = np.meshgrid(robot_state.x + offs, robot_state.y + offs, indexing="ij")
        cand = np.stack([gx.ravel(), gy.ravel()], axis=1)
        near = np.hypot(cand[:, 0] - robot_state.x, cand[:, 1] - robot_state.y)
        clear = clearance_many(self.hmap, cand)
        ok = (clear >= self.margin) & (near <= self.PARK_SEARCH_RADIUS)
        if not ok.any():
            return robot_state.position
        s_now, _ = self.path.project(robot_state.position)
        _, tangent = self.path.point_at(min(s_now, self.path.length))
        right = np.array([math.sin(tangent), -math.cos(tangent)])
        foot, _ = self.path.point_at(min(s_now, self.path.length))
        lateral = (cand - foot) @ right
        score = np.where(ok, clear + 1.5 * lateral, -np.inf)
        return cand[int(np.argmax(score))]

    def _peer_behind(self, robot_state) -> bool:
        msg = self.state.last_message
        if msg is None:
            return False
        s_me, _ = self.path.project(robot_state.position)
        s_peer, _ = self.path.project(msg.position)
        return s_peer < s_me - 0.5

    def step(self, robot_state, scan, t):
        st = self.state
        if not self.halts or self._done:
            return self.planner.plan(robot_state, scan)
        if st.mode is Mode.CRUISE and self._peer_in_range(robot_state, self.detection_range):
            st.mode = Mode.AVOIDING
            st.activation_time = t
            self._spot = self._parking_spot(robot_state)
            self.planner.set_path(Polyline([robot_state.position, self._spot]))
        if st.mode is Mode.AVOIDING and self._spot is not None:
            if math.hypot(*(robot_state.position - self._spot)) < self.PARK_TOLERANCE:
                st.mode = Mode.PARKED
        if st.mode is Mode.PARKED:
            if self._peer_behind(robot_state):
                st.mode = Mode.CRUISE
                self._done = True
                self.planner.set_path(self.path)
                return self.planner.plan(robot_state, scan)
            return 0.0, 0.0
        return self.planner.plan(robot_state, scan)


# ---------------------------------------------------------------------------
# NH-ORCA


def _det(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _lp1(lines, i, radius, opt_v, dir_opt):
    """1D program on the boundary of line i (RVO-style, feasible right side)."""
    p, d = lines[i]
    dot = p @ d
    disc = dot * dot + radius * radius - p @ p
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t_left, t_right = -dot - sq, -dot + sq
    for j in range(i):
        pj, dj = lines[j]
        denom = _det(d, dj)
        num = _det(dj, p - pj)
        if abs(denom) < 1e-9:
            if num < 0.0:
                return None
            continue
        t = num / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None
    if dir_opt:
        t = t_right if opt_v @ d > 0.0 else t_left
    else:
        t = min(max(d @ (opt_v - p), t_left), t_right)
    return p + t * d


def _lp2(lines, radius, opt_v, dir_opt):
    if dir_opt:
        result = opt_v * radius
    elif opt_v @ opt_v > radius * radius:
        result = opt_v / np.linalg.norm(opt_v) * radius
    else:
        result = opt_v.copy()
    for i, (p, d) in enumerate(lines):
        if _det(d, p - result) > 0.0:
            new = _lp1(lines, i, radius, opt_v, dir_opt)
            if new is None:
                return result, i
            result = new
    return result, len(lines)


def _lp3(lines, n_fixed, begin, radius, result):
    """Least-violation fallback when the half-planes are jointly infeasible."""
    dist = 0.0
    for i in range(begin, len(lines)):
        p_i, d_i = lines[i]
        if _det(d_i, p_i - result) > dist:
            proj = [lines[k] for k in range(n_fixed)]
            for j in range(n_fixed, i):
                p_j, d_j = lines[j]
                deno = _det(d_i, d_j)
                if abs(deno) < 1e-9:
                    if d_i @ d_j > 0.0:
                        continue
                    point = 0.5 * (p_i + p_j)
                else:
                    point = p_i + (_det(d_j, p_i - p_j) / deno) * d_i
                direction = d_j - d_i
                direction = direction / np.linalg.norm(direction)
                proj.append((point, direction))
            new, fail = _lp2(proj, radius, np.array([-d_i[1], d_i[0]]), True)
            if fail == len(proj):
                result = new
            dist = _det(d_i, p_i - result)
    return result


def _orca_line(rel_pos, rel_vel, combined_radius, tau, responsibility):
    """Half-plane constraint from one velocity obstacle."""
    dist2 = rel_pos @ rel_pos
    r2 = combined_radius * combined_radius
    if dist2 > r2:
        w = rel_vel - rel_pos / tau
        w_len2 = w @ w
        dot1 = w @ rel_pos
        if dot1 < 0.0 and dot1 * dot1 > r2 * w_len2:
            w_len = math.sqrt(w_len2)
            unit_w = w / w_len
            direction = np.array([unit_w[1], -unit_w[0]])
            u = (combined_radius / tau - w_len) * unit_w
        else:
            leg = math.sqrt(max(dist2 - r2, 0.0))
            if _det(rel_pos, w) > 0.0:
                direction = np.array(
                    [rel_pos[0] * leg - rel_pos[1] * combined_radius,
                     rel_pos[0] * combined_radius + rel_pos[1] * leg]
                ) / dist2
            else:
                direction = -np.array(
                    [rel_pos[0] * leg + rel_pos[1] * combined_radius,
                     -rel_pos[0] * combined_radius + rel_pos[1] * leg]
                ) / dist2
            u = (rel_vel @ direction) * direction - rel_vel
    else:
        # already overlapping: push apart within one control period
        inv_t = 10.0
        w = rel_vel - rel_pos * inv_t
        w_len = np.linalg.norm(w)
        unit_w = w / w_len if w_len > 1e-12 else np.array([1.0, 0.0])
        direction = np.array([unit_w[1], -unit_w[0]])
        u = (combined_radius * inv_t - w_len) * unit_w
    return responsibility * u, direction


class NhOrcaPolicy(BasePolicy):
    """ORCA on a tracking point ahead of the axle, walls as static constraints.

    Peer state always comes from the last received message, however stale.
    """

    uses_scan = False

    def __init__(self, robot_id, path, planner_params, hmap: HallwayMap,
                 tau: float = 2.0, track_offset: float = 0.2,
                 radius_slack: float = 0.05, lookahead: float = 1.5):
        super().__init__(robot_id, path, planner_params)
        self.hmap = hmap
        self.tau = tau
        self.d_off = track_offset
        self.r_orca = FOOTPRINT_RADIUS + radius_slack
        self.lookahead = lookahead
        self.v_max = planner_params.v_max
        self.omega_max = planner_params.omega_max

    @property
    def detected(self) -> bool:
        return self.state.last_message is not None

    @staticmethod
    def _track_point(x, y, heading, v, omega, d_off):
        u = np.array([math.cos(heading), math.sin(heading)])
        n = np.array([-math.sin(heading), math.cos(heading)])
        return np.array([x, y]) + d_off * u, v * u + d_off * omega * n

    def _preferred_velocity(self, track_pos):
        s, _ = self.path.project(track_pos)
        target, _ = self.path.point_at(min(self.path.length, s + self.lookahead))
        to_target = target - track_pos
        dist = np.linalg.norm(to_target)
        if dist < 1e-6:
            return np.zeros(2)
        speed = min(self.v_max, dist / 0.5)  # ease in near the goal
        return to_target / dist * speed

    def step(self, robot_state, scan, t):
        me_p, me_v = self._track_point(
            robot_state.x, robot_state.y, robot_state.heading,
            robot_state.v, robot_state.omega, self.d_off,
        )
        lines = []
        # walls first: full-responsibility static constraints, kept hard in lp3
        segs = self.hmap.walls
        a = segs[:, 0:2]
        d = segs[:, 2:4] - a
        len2 = np.einsum("ij,ij->i", d, d)
        tt = np.clip(np.einsum("ij,ij->i", me_p[None, :] - a, d) / len2, 0.0, 1.0)
        feet = a + tt[:, None] * d
        dists = np.hypot(*(feet - me_p).T)
        for k in np.argsort(dists):
            if dists[k] > 3.0 or len(lines) >= 4:
                break
            u, direction = _orca_line(
                feet[k] - me_p, me_v, self.r_orca, 1.0, responsibility=1.0
            )
            lines.append((me_v + u, direction))
        n_fixed = len(lines)
        msg = self.state.last_message
        if msg is not None:
            peer_p, peer_v = self._track_point(
                msg.x, msg.y, msg.heading, msg.v, msg.omega, self.d_off
            )
            u, direction = _orca_line(
                peer_p - me_p, me_v - peer_v, 2 * self.r_orca, self.tau, responsibility=0.5
            )
            lines.append((me_v + u, direction))
        v_pref = self._preferred_velocity(me_p)
        v_new, fail = _lp2(lines, self.v_max, v_pref, False)
        if fail < len(lines):
            v_new = _lp3(lines, n_fixed, fail, self.v_max, v_new)
        u = np.array([math.cos(robot_state.heading), math.sin(robot_state.heading)])
        n = np.array([-math.sin(robot_state.heading), math.cos(robot_state.heading)])
        v_cmd = min(max(float(v_new @ u), 0.0), self.v_max)
        w_cmd = min(max(float(v_new @ n) / self.d_off, -self.omega_max), self.omega_max)
        return v_cmd, w_cmd
