"""YAML experiment configs and field-parameter JSON files."""

from __future__ import annotations

import json
from importlib import resources

import yaml

from .hallucination import ObstacleFieldParams
from .harness import PolicySpec, SimParams, TrainConfig
from .world import HallwaySpec

BUILTIN_FIELDS = ("I", "L")


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"could not parse {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def hallway_spec_from_dict(d: dict) -> HallwaySpec:
    if "shape" not in d:
        raise ConfigError("map section needs a 'shape'")
    kwargs = {}
    if "widths" in d:
        kwargs["widths"] = tuple(d["widths"]) if isinstance(d["widths"], (list, tuple)) else (d["widths"],)
    if "arm_lengths" in d:
        v = d["arm_lengths"]
        kwargs["arm_lengths"] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
    if "spawn_separation" in d:
        kwargs["spawn_separation"] = float(d["spawn_separation"])
    return HallwaySpec(shape=str(d["shape"]).upper(), **kwargs)


def sim_params_from_dict(d: dict | None) -> SimParams:
    d = d or {}
    allowed = set(SimParams.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown sim options: {sorted(unknown)}")
    return SimParams(**{k: type(SimParams.__dataclass_fields__[k].default)(v) for k, v in d.items()})


def field_params_from_dict(d: dict) -> ObstacleFieldParams:
    try:
        return ObstacleFieldParams(
            radius=float(d["radius"]),
            delta_r=float(d["delta_r"]),
            k_begin=float(d["k_begin"]),
            k_end=float(d["k_end"]),
        )
    except KeyError as e:
        raise ConfigError(f"field parameters missing {e}")


def load_field_params(path):
    """Read a trained-field JSON file -> (params, trained_on)."""
    with open(path) as f:
        data = json.load(f)
    return field_params_from_dict(data), data.get("trained_on")


def save_field_params(path, params: ObstacleFieldParams, trained_on: str):
    with open(path, "w") as f:
        json.dump(
            {
                "radius": params.radius,
                "delta_r": params.delta_r,
                "k_begin": params.k_begin,
                "k_end": params.k_end,
                "trained_on": trained_on,
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")


def builtin_field(name: str) -> ObstacleFieldParams:
    """Trained field shipped with the package ('I' or 'L' hallway)."""
    key = name.upper().removeprefix("BUILTIN:")
    if key not in BUILTIN_FIELDS:
        raise ConfigError(f"unknown builtin field {name!r}; have {BUILTIN_FIELDS}")
    ref = resources.files("hallpass").joinpath(f"fields/theta_{key.lower()}.json")
    return field_params_from_dict(json.loads(ref.read_text()))


def policy_spec_from_dict(d: dict) -> PolicySpec:
    name = str(d.get("policy", "none"))
    fieldp = None
    if "field" in d:
        fieldp = field_params_from_dict(d["field"])
    elif "field_builtin" in d:
        fieldp = builtin_field(str(d["field_builtin"]))
    elif "field_file" in d:
        fieldp, _ = load_field_params(d["field_file"])
    try:
        return PolicySpec(name=name, field=fieldp)
    except ValueError as e:
        raise ConfigError(str(e))


def policy_specs_from_config(cfg: dict):
    robots = cfg.get("robots")
    if robots is None:
        raise ConfigError("config needs a 'robots' section (two entries)")
    if len(robots) == 1:
        robots = robots * 2
    if len(robots) != 2:
        raise ConfigError("robots section must list one or two policies")
    return tuple(policy_spec_from_dict(r) for r in robots)


def train_config_from_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg.get("train", {})
    rand = cfg.get("randomization", {})
    episode = cfg.get("episode", {})
    kwargs = dict(
        hallway=hallway_spec_from_dict(cfg.get("map", {})),
        seed=seed,
        sim=sim_params_from_dict(cfg.get("sim")),
        dropout=float(episode.get("dropout", 0.0)),
        timeout=float(episode.get("timeout", 90.0)),
        message_period=float(episode.get("message_period", 0.1)),
        t_max=float(rand.get("start_delay_max", 2.0)),
        detection_range=tuple(rand.get("detection_range", (7.0, 9.0))),
    )
    for key in ("theta0", "sigma0", "population", "episodes_per_candidate",
                "threshold", "max_generations"):
        if key in t:
            v = t[key]
            kwargs[key] = tuple(v) if key == "theta0" else v
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad train section: {e}")
