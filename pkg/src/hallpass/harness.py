"""Episode execution, the delay-plus-collision cost, training, evaluation.

Episodes are pure functions of their config (seed included), so candidate
evaluations fan out to worker processes and reassemble in a fixed order;
training results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import cmaes
from .geometry import Polyline
from .hallucination import ObstacleFieldParams
from .planning import FAILURE, PlannerParams, detect_failure, plan_global
from .policies import (
    HallucinationPolicy,
    HaltingPolicy,
    NhOrcaPolicy,
    PeerMessage,
    PlainPolicy,
    RightLanePolicy,
    right_lane_path,
)
from .simcore import (
    ACCEL_MAX,
    FOOTPRINT_RADIUS,
    OMEGA_MAX,
    SIM_DT,
    V_MAX,
    RobotState,
    ScanGeometry,
    in_collision,
    integrate,
    simulate_scan,
)
from .world import HallwaySpec, build_hallway

COLLISION_PENALTY = 100.0
POLICY_NAMES = ("none", "hallucination", "right_lane", "halting", "nh_orca")


@dataclass(frozen=True)
class SimParams:
    dt: float = SIM_DT
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX
    accel: float = ACCEL_MAX
    footprint_radius: float = FOOTPRINT_RADIUS
    beam_count: int = 683
    fov_deg: float = 170.0
    max_range: float = 20.0
    goal_tolerance: float = 0.4
    horizon: float = 4.0

    def geometry(self) -> ScanGeometry:
        return ScanGeometry(
            fov=math.radians(self.fov_deg), beam_count=self.beam_count, max_range=self.max_range
        )

    def planner_params(self) -> PlannerParams:
        return PlannerParams(
            horizon=self.horizon,
            safety_margin=self.footprint_radius + 0.05,
            v_max=self.v_max,
            omega_max=self.omega_max,
        )


@dataclass(frozen=True)
class PolicySpec:
    name: str
    field: ObstacleFieldParams | None = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; choose from {POLICY_NAMES}")
        if self.name == "hallucination" and self.field is None:
            raise ValueError("hallucination policy needs field parameters")


@dataclass(frozen=True)
class EpisodeConfig:
    hallway: HallwaySpec
    policies: tuple
    start_delays: tuple = (0.0, 0.0)
    detection_ranges: tuple = (8.0, 8.0)
    dropout: float = 0.0
    message_period: float = 0.1
    seed: int = 0
    timeout: float = 90.0
    sim: SimParams = field(default_factory=SimParams)
    single_robot: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must be within [0, 1]")
        if any(t < 0 for t in self.start_delays):
            raise ValueError("start delays must be non-negative")
        if any(d <= 0 for d in self.detection_ranges):
            raise ValueError("detection ranges must be positive")
        if self.message_period <= 0 or self.timeout <= 0:
            raise ValueError("message period and timeout must be positive")


@dataclass(frozen=True)
class EpisodeResult:
    ttd: tuple
    collision: bool
    failure: bool
    reached: tuple
    trajectories: tuple          # per robot: dict of numpy arrays
    fields: tuple                # per robot: ObstacleField or None


@dataclass(frozen=True)
class Metrics:
    mean_delay: float
    p_collision: float
    p_failure: float
    n: int


class EpisodeContext:
    """Per-map immutables shared across episodes: map, global paths, lanes."""

    def __init__(self, spec: HallwaySpec, sim: SimParams):
        self.hmap = build_hallway(spec)
        self.paths = tuple(
            plan_global(
                self.hmap, self.hmap.spawn_poses[i], self.hmap.goal_poses[i],
                robot_radius=sim.footprint_radius,
            )
            for i in range(2)
        )
        self.lanes = tuple(right_lane_path(self.hmap, p) for p in self.paths)


_CTX_CACHE: dict = {}


def get_context(spec: HallwaySpec, sim: SimParams) -> EpisodeContext:
    key = (spec.key(), sim)
    ctx = _CTX_CACHE.get(key)
    if ctx is None:
        ctx = _CTX_CACHE[key] = EpisodeContext(spec, sim)
    return ctx


def _make_policy(spec: PolicySpec, robot_id: int, ctx: EpisodeContext,
                 cfg: EpisodeConfig):
    planner_params = cfg.sim.planner_params()
    path = ctx.paths[robot_id]
    d = cfg.detection_ranges[robot_id]
    if spec.name == "none":
        return PlainPolicy(robot_id, path, planner_params)
    if spec.name == "hallucination":
        clamped = spec.field.clamped(max_radius=min(cfg.hallway.widths))
        return HallucinationPolicy(
            robot_id, path, planner_params, clamped, d, cfg.sim.geometry()
        )
    if spec.name == "right_lane":
        return RightLanePolicy(robot_id, path, planner_params, ctx.lanes[robot_id], d)
    if spec.name == "halting":
        return HaltingPolicy(
            robot_id, path, planner_params, ctx.hmap, halts=(robot_id == 0), detection_range=d
        )
    if spec.name == "nh_orca":
        return NhOrcaPolicy(robot_id, path, planner_params, ctx.hmap)
    raise ValueError(spec.name)


def run_episode(cfg: EpisodeConfig) -> EpisodeResult:
    """Simulate one (or one peer-free) passing episode."""
    ctx = get_context(cfg.hallway, cfg.sim)
    sim = cfg.sim
    geometry = sim.geometry()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    ids = [cfg.single_robot] if cfg.single_robot is not None else [0, 1]
    two = len(ids) == 2

    policies = {i: _make_policy(cfg.policies[i] if two else cfg.policies[0], i, ctx, cfg)
                for i in ids}
    states = {i: RobotState(*ctx.hmap.spawn_poses[i], radius=sim.footprint_radius) for i in ids}
    goals = {i: ctx.hmap.goal_poses[i][:2] for i in ids}
    reached = {i: False for i in ids}
    ttd = {i: cfg.timeout for i in ids}
    trace = {i: {"t": [0.0], "x": [states[i].x], "y": [states[i].y],
                 "heading": [states[i].heading], "v": [0.0], "omega": [0.0],
                 "detected": [False]} for i in ids}

    msg_every = max(1, int(round(cfg.message_period / sim.dt)))
    n_steps = int(math.ceil(cfg.timeout / sim.dt))
    collision = False

    for k in range(n_steps):
        t = k * sim.dt
        if two and k % msg_every == 0:
            for sender in ids:
                u = rng.random()
                if u >= cfg.dropout:
                    s = states[sender]
                    policies[1 - sender].receive(
                        PeerMessage(sender, s.x, s.y, s.heading, s.v, s.omega, t)
                    )
        cmds = {}
        for i in ids:
            s = states[i]
            if reached[i] or t < cfg.start_delays[i] - 1e-9:
                cmds[i] = (0.0, 0.0)
                continue
            pol = policies[i]
            other = states[1 - i] if two else None
            scan = (
                simulate_scan(s.pose, ctx.hmap, other, geometry, timestamp=t)
                if pol.uses_scan
                else None
            )
            cmd = pol.step(s, scan, t)
            cmds[i] = (0.0, 0.0) if cmd is FAILURE else cmd
        t_next = (k + 1) * sim.dt
        for i in ids:
            s = states[i]
            v_cmd, w_cmd = cmds[i]
            v = min(max(v_cmd, s.v - sim.accel * sim.dt), s.v + sim.accel * sim.dt)
            states[i] = integrate(s, (v, w_cmd), sim.dt, sim.v_max, sim.omega_max)
            tr = trace[i]
            tr["t"].append(t_next)
            tr["x"].append(states[i].x)
            tr["y"].append(states[i].y)
            tr["heading"].append(states[i].heading)
            tr["v"].append(states[i].v)
            tr["omega"].append(states[i].omega)
            tr["detected"].append(policies[i].detected)
        if in_collision(states[ids[0]], states[ids[1]] if two else None, ctx.hmap):
            collision = True
            for i in ids:
                if not reached[i]:
                    ttd[i] = t_next
            break
        done = True
        for i in ids:
            if not reached[i]:
                gx, gy = goals[i]
                if math.hypot(states[i].x - gx, states[i].y - gy) <= sim.goal_tolerance:
                    reached[i] = True
                    ttd[i] = t_next
                else:
                    done = False
        if done:
            break

    failure = False
    if not collision:
        for i in ids:
            tr = trace[i]
            positions = np.stack([tr["x"], tr["y"]], axis=1)
            if detect_failure(
                tr["t"], positions, np.asarray(tr["heading"]), ctx.paths[i],
                reached[i], cfg.timeout,
            ):
                failure = True
                break

    trajectories = []
    fields = []
    for i in (0, 1):
        if i in ids:
            trajectories.append({k2: np.asarray(v2) for k2, v2 in trace[i].items()})
            fields.append(getattr(policies[i].state, "field", None))
        else:
            trajectories.append(None)
            fields.append(None)
    return EpisodeResult(
        ttd=(ttd.get(0, math.nan), ttd.get(1, math.nan)),
        collision=collision,
        failure=failure,
        reached=(reached.get(0, False), reached.get(1, False)),
        trajectories=tuple(trajectories),
        fields=tuple(fields),
    )


def episode_cost(result: EpisodeResult) -> float:
    """Mean time-to-destination plus the collision penalty."""
    return (result.ttd[0] + result.ttd[1]) / 2.0 + COLLISION_PENALTY * bool(result.collision)


def randomize(rng, t_max: float = 2.0, d_range=(7.0, 9.0)):
    """Per-episode start delays and detection ranges, all independent."""
    t1 = rng.uniform(0.0, t_max)
    t2 = rng.uniform(0.0, t_max)
    d1 = rng.uniform(*d_range)
    d2 = rng.uniform(*d_range)
    return t1, t2, d1, d2


def _episode_seed(*fields) -> int:
    return int(np.random.SeedSequence(fields).generate_state(1)[0])


def _randomized_config(base: EpisodeConfig, seed_fields, t_max, d_range) -> EpisodeConfig:
    seed = _episode_seed(*seed_fields)
    t1, t2, d1, d2 = randomize(np.random.default_rng(np.random.SeedSequence(seed + 1)),
                               t_max, d_range)
    return replace(base, seed=seed, start_delays=(t1, t2), detection_ranges=(d1, d2))


def _cost_worker(cfg: EpisodeConfig) -> float:
    return episode_cost(run_episode(cfg))


def _result_worker(cfg: EpisodeConfig):
    r = run_episode(cfg)
    return (r.ttd, r.collision, r.failure, r.reached)


class _SerialPool:
    def map(self, fn, items, chunksize=1):
        return map(fn, items)

    def shutdown(self, wait=True):
        pass


def make_pool(jobs: int):
    return ProcessPoolExecutor(max_workers=jobs) if jobs and jobs > 1 else _SerialPool()


@dataclass(frozen=True)
class TrainConfig:
    hallway: HallwaySpec
    theta0: tuple = (0.5, 0.05, 0.3, 0.6)
    sigma0: float = 0.1
    population: int = 8
    episodes_per_candidate: int = 200
    threshold: float = 0.01
    max_generations: int = 200
    seed: int = 0
    t_max: float = 2.0
    detection_range: tuple = (7.0, 9.0)
    dropout: float = 0.0
    timeout: float = 90.0
    message_period: float = 0.1
    sim: SimParams = field(default_factory=SimParams)


@dataclass
class TrainResult:
    theta: ObstacleFieldParams
    best_cost: float
    generations: int
    sigma: float
    log_rows: list


def train(cfg: TrainConfig, jobs: int = 1, on_generation=None) -> TrainResult:
    """CMA-ES over field parameters on domain-randomized episodes.

    Each candidate's cost is its mean episode cost over
    `episodes_per_candidate` randomized episodes. Stops when the step size
    drops below `threshold` (or at the generation cap) and returns the
    cheapest candidate seen anywhere in the run.
    """
    state = cmaes.cmaes_init(np.asarray(cfg.theta0, dtype=float), cfg.sigma0)
    ask_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xA5C)))
    pool = make_pool(jobs)
    rows = []
    try:
        while state.generation < cfg.max_generations and not cmaes.converged(state, cfg.threshold):
            gen = state.generation
            thetas = cmaes.ask(state, cfg.population, ask_rng)
            ep_cfgs = []
            for i, th in enumerate(thetas):
                params = ObstacleFieldParams.from_array(th).clamped(
                    max_radius=min(cfg.hallway.widths)
                )
                base = EpisodeConfig(
                    hallway=cfg.hallway,
                    policies=(PolicySpec("hallucination", params),) * 2,
                    dropout=cfg.dropout,
                    message_period=cfg.message_period,
                    timeout=cfg.timeout,
                    sim=cfg.sim,
                )
                for j in range(cfg.episodes_per_candidate):
                    ep_cfgs.append(
                        _randomized_config(base, (cfg.seed, gen, i, j), cfg.t_max,
                                           cfg.detection_range)
                    )
            chunk = max(1, len(ep_cfgs) // (max(jobs, 1) * 4))
            costs = np.fromiter(
                pool.map(_cost_worker, ep_cfgs, chunksize=chunk), dtype=float
            ).reshape(cfg.population, cfg.episodes_per_candidate)
            mean_costs = costs.mean(axis=1)
            state = cmaes.tell(state, thetas, mean_costs)
            row = {
                "generation": gen,
                "sigma": state.sigma,
                "mean_radius": state.mean[0],
                "mean_delta_r": state.mean[1],
                "mean_k_begin": state.mean[2],
                "mean_k_end": state.mean[3],
                "gen_best_cost": float(mean_costs.min()),
                "best_cost": state.best_cost,
            }
            rows.append(row)
            if on_generation is not None:
                on_generation(row)
    finally:
        pool.shutdown(wait=True)
    theta = ObstacleFieldParams.from_array(
        state.best_theta if state.best_theta is not None else state.mean
    )
    return TrainResult(
        theta=theta,
        best_cost=state.best_cost,
        generations=state.generation,
        sigma=state.sigma,
        log_rows=rows,
    )


def reference_ttd(hallway: HallwaySpec, sim: SimParams, timeout: float = 90.0):
    """Per-robot unobstructed traversal time, measured by peer-free runs."""
    out = []
    for i in (0, 1):
        cfg = EpisodeConfig(
            hallway=hallway,
            policies=(PolicySpec("none"),),
            timeout=timeout,
            sim=sim,
            single_robot=i,
        )
        out.append(run_episode(cfg).ttd[i])
    return tuple(out)


def evaluate(hallway: HallwaySpec, policies: tuple, n_episodes: int, dropout: float,
             seed: int, sim: SimParams = SimParams(), jobs: int = 1,
             t_max: float = 2.0, d_range=(7.0, 9.0), timeout: float = 90.0):
    """Metrics over seeded randomized episodes, plus the per-episode rows.

    Delay is measured against peer-free reference runs on the same map and
    spawn, with each robot's start delay subtracted. Collision episodes are
    excluded from the delay average (their traversal never completes).
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    ref = reference_ttd(hallway, sim, timeout)
    base = EpisodeConfig(
        hallway=hallway, policies=tuple(policies), dropout=dropout,
        timeout=timeout, sim=sim,
    )
    cfgs = [
        _randomized_config(base, (seed, ep, dropout), t_max, d_range)
        for ep in range(n_episodes)
    ]
    pool = make_pool(jobs)
    try:
        chunk = max(1, len(cfgs) // (max(jobs, 1) * 4))
        outcomes = list(pool.map(_result_worker, cfgs, chunksize=chunk))
    finally:
        pool.shutdown(wait=True)
    rows = []
    for ep, (cfg, (ttd, collision, failure, reached)) in enumerate(zip(cfgs, outcomes)):
        rows.append({
            "episode": ep,
            "seed": cfg.seed,
            "dropout": dropout,
            "ttd1": ttd[0],
            "ttd2": ttd[1],
            "delay1": ttd[0] - cfg.start_delays[0] - ref[0],
            "delay2": ttd[1] - cfg.start_delays[1] - ref[1],
            "collision": bool(collision),
            "failure": bool(failure),
        })
    return metrics_from_rows(rows), rows


def metrics_from_rows(rows) -> Metrics:
    n = len(rows)
    ok = [r for r in rows if not r["collision"]]
    delays = [0.5 * (r["delay1"] + r["delay2"]) for r in ok]
    return Metrics(
        mean_delay=float(np.mean(delays)) if delays else math.nan,
        p_collision=sum(r["collision"] for r in rows) / n,
        p_failure=sum(r["failure"] for r in rows) / n,
        n=n,
    )
