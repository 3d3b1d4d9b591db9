"""Two-robot hallway passing with hallucinated LiDAR obstacles.

Simulates differential-drive robots meeting head-on in narrow I/L/T/Z
corridors, steers them past each other by fusing a trained virtual-circle
obstacle field into their scans, and trains those fields with CMA-ES against
a delay-plus-collision cost under domain randomization.
"""

__version__ = "0.1.0"

from .cmaes import CmaesState, ask, cmaes_init, converged, tell
from .geometry import Polyline
from .hallucination import (
    ObstacleField,
    ObstacleFieldParams,
    build_field,
    fuse,
    virtual_scan,
)
from .harness import (
    EpisodeConfig,
    EpisodeResult,
    Metrics,
    PolicySpec,
    SimParams,
    TrainConfig,
    episode_cost,
    evaluate,
    randomize,
    reference_ttd,
    run_episode,
    train,
)
from .planning import FAILURE, LocalPlanner, PlannerParams, detect_failure, plan_global
from .policies import PeerMessage
from .simcore import (
    LidarScan,
    RobotState,
    ScanGeometry,
    in_collision,
    integrate,
    simulate_scan,
)
from .world import (
    HallwayMap,
    HallwaySpec,
    build_hallway,
    clearance,
    point_at_arclength,
    save_map_json,
)

__all__ = [
    "CmaesState", "ask", "cmaes_init", "converged", "tell",
    "Polyline",
    "ObstacleField", "ObstacleFieldParams", "build_field", "fuse", "virtual_scan",
    "EpisodeConfig", "EpisodeResult", "Metrics", "PolicySpec", "SimParams",
    "TrainConfig", "episode_cost", "evaluate", "randomize", "reference_ttd",
    "run_episode", "train",
    "FAILURE", "LocalPlanner", "PlannerParams", "detect_failure", "plan_global",
    "PeerMessage",
    "LidarScan", "RobotState", "ScanGeometry", "in_collision", "integrate",
    "simulate_scan",
    "HallwayMap", "HallwaySpec", "build_hallway", "clearance",
    "point_at_arclength", "save_map_json",
]
