"""Command line driver: train, eval, export, gen-map."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import (
    ConfigError,
    builtin_field,
    hallway_spec_from_dict,
    load_config,
    load_field_params,
    policy_specs_from_config,
    save_field_params,
    sim_params_from_dict,
    train_config_from_config,
)
from .harness import PolicySpec, evaluate, train
from .world import MapSpecError, build_hallway, save_map_json

OUT_ROOT_ENV = "HALLPASS_OUT_ROOT"

TRAIN_LOG_COLUMNS = (
    "generation", "sigma", "mean_radius", "mean_delta_r", "mean_k_begin",
    "mean_k_end", "gen_best_cost", "best_cost",
)
RESULT_COLUMNS = (
    "seed", "policy", "map", "dropout", "ttd1", "ttd2", "delay1", "delay2",
    "collision", "failure",
)


def _resolve_out(out: str) -> Path:
    path = Path(out)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out_dir: Path, command: str, config: dict, args) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": args.seed,
        "jobs": args.jobs,
        "version": __version__,
        "out_dir": str(out_dir),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    train_cfg = train_config_from_config(cfg, seed=args.seed)
    out_dir = _resolve_out(args.out)
    _write_manifest(out_dir, "train", cfg, args)
    log_path = out_dir / "training_log.csv"
    with open(log_path, "w", newline="") as log_file:
        writer = csv.writer(log_file)
        writer.writerow(TRAIN_LOG_COLUMNS)

        def on_generation(row):
            writer.writerow([_fmt(row[c]) if isinstance(row[c], float) else row[c]
                             for c in TRAIN_LOG_COLUMNS])
            log_file.flush()
            if not args.quiet:
                print(
                    f"gen {row['generation']:>3}  sigma {row['sigma']:.4f}  "
                    f"best {row['best_cost']:.3f}",
                    flush=True,
                )

        result = train(train_cfg, jobs=args.jobs, on_generation=on_generation)
    theta_path = out_dir / "theta.json"
    save_field_params(theta_path, result.theta, trained_on=train_cfg.hallway.shape)
    if not args.quiet:
        print(f"trained {result.generations} generations, best cost {result.best_cost:.3f}")
        print(f"wrote {theta_path}")
    return 0


def _eval_policies(args, cfg: dict):
    if args.theta:
        if str(args.theta).lower().startswith("builtin:"):
            params = builtin_field(args.theta)
        else:
            params, _ = load_field_params(args.theta)
        spec = PolicySpec("hallucination", params)
        return (spec, spec), "hallucination"
    if args.policy:
        if args.policy == "hallucination":
            raise ConfigError("pass --theta for the hallucination policy")
        spec = PolicySpec(args.policy)
        return (spec, spec), args.policy
    specs = policy_specs_from_config(cfg)
    return specs, "+".join(s.name for s in specs)


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    policies, policy_label = _eval_policies(args, cfg)
    sim = sim_params_from_dict(cfg.get("sim"))
    ev = cfg.get("eval", {})
    n_episodes = int(ev.get("n_episodes", 30))
    dropouts = [float(d) for d in ev.get("dropouts", [0.0])]
    map_dicts = ev.get("maps") or [cfg.get("map", {})]
    specs = [hallway_spec_from_dict(m) for m in map_dicts]
    episode = cfg.get("episode", {})
    rand = cfg.get("randomization", {})
    timeout = float(episode.get("timeout", 90.0))
    t_max = float(rand.get("start_delay_max", 2.0))
    d_range = tuple(rand.get("detection_range", (7.0, 9.0)))

    out_dir = _resolve_out(args.out)
    _write_manifest(out_dir, "eval", cfg, args)
    results_path = out_dir / "results.csv"
    summary = {}
    with open(results_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RESULT_COLUMNS)
        for hallway in specs:
            for dropout in dropouts:
                metrics, rows = evaluate(
                    hallway, policies, n_episodes, dropout, seed=args.seed,
                    sim=sim, jobs=args.jobs, t_max=t_max, d_range=d_range,
                    timeout=timeout,
                )
                for r in rows:
                    writer.writerow([
                        r["seed"], policy_label, hallway.shape, _fmt(dropout),
                        _fmt(r["ttd1"]), _fmt(r["ttd2"]), _fmt(r["delay1"]),
                        _fmt(r["delay2"]), _fmt(r["collision"]), _fmt(r["failure"]),
                    ])
                f.flush()
                summary[f"{hallway.shape}/dropout={dropout:g}"] = {
                    "mean_delay": metrics.mean_delay,
                    "p_collision": metrics.p_collision,
                    "p_failure": metrics.p_failure,
                    "n": metrics.n,
                }
                if not args.quiet:
                    print(
                        f"{hallway.shape} dropout={dropout:g}: "
                        f"delay {metrics.mean_delay:.2f}s  "
                        f"p_coll {metrics.p_collision:.2f}  "
                        f"p_fail {metrics.p_failure:.2f}",
                        flush=True,
                    )
    with open(out_dir / "metrics.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


def cmd_export(args) -> int:
    out_dir = _resolve_out(args.out)
    records = []
    with open(args.log) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                records.append(
                    [rec["t"], rec["robot_id"], rec["x"], rec["y"], rec["heading"],
                     rec["v"], rec["omega"], int(bool(rec["detected"]))]
                )
            except (json.JSONDecodeError, KeyError) as e:
                raise SystemExit(f"error: {args.log} line {lineno}: {e}")
    with open(out_dir / "trajectories.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "robot_id", "x", "y", "heading", "v", "omega", "detected"])
        writer.writerows(records)
    if args.map:
        with open(args.map) as f:
            map_data = json.load(f)
        with open(out_dir / "walls.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x1", "y1", "x2", "y2"])
            writer.writerows(map_data["walls"])
    if args.field:
        with open(args.field) as f:
            field_data = json.load(f)
        with open(out_dir / "field_circles.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["x", "y", "radius"])
            for x, y in field_data.get("circles", []):
                writer.writerow([x, y, field_data["radius"]])
    if not args.quiet:
        print(f"exported {len(records)} rows to {out_dir}")
    return 0


def cmd_gen_map(args) -> int:
    cfg = load_config(args.config)
    hallway = hallway_spec_from_dict(cfg.get("map", {}))
    out_dir = _resolve_out(args.out)
    path = out_dir / f"map_{hallway.shape.lower()}.json"
    save_map_json(build_hallway(hallway), path)
    if not args.quiet:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hallpass")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="parallel episode workers")
        p.add_argument("--out", default="out", help=f"output dir (${OUT_ROOT_ENV} prefixes relative paths)")
        p.add_argument("--quiet", action="store_true")

    p_train = sub.add_parser("train", help="search field parameters with CMA-ES")
    common(p_train)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="run the evaluation episode grid")
    common(p_eval)
    p_eval.add_argument("--theta", help="field JSON file or builtin:I / builtin:L")
    p_eval.add_argument("--policy", choices=["none", "right_lane", "halting", "nh_orca",
                                             "hallucination"])
    p_eval.set_defaults(fn=cmd_eval)

    p_export = sub.add_parser("export", help="convert logs to plot-ready CSV")
    p_export.add_argument("--log", required=True, help="episode trajectory JSONL")
    p_export.add_argument("--map", help="map JSON for a walls.csv overlay")
    p_export.add_argument("--field", help="field JSON for a circles overlay")
    p_export.add_argument("--format", choices=["csv"], default="csv")
    p_export.add_argument("--out", default="out")
    p_export.add_argument("--quiet", action="store_true")
    p_export.set_defaults(fn=cmd_export)

    p_map = sub.add_parser("gen-map", help="write the map JSON for a config")
    common(p_map)
    p_map.set_defaults(fn=cmd_gen_map)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, MapSpecError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
