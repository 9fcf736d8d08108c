"""Command-line surface: gen-data, train, bench, plan, export-costmap.

Configuration comes from JSON files with flag overrides. Exit codes:
0 success, 1 partial failure, 2 invalid input. The worker count defaults
to the C2GHOF_JOBS environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bench import BenchConfig, export_costmap, run_benchmark
from .datagen import (
    default_gen_config,
    generate_dataset,
    load_manifest,
    parse_robot_json,
    robot_from_config,
)
from .hof import TrainConfig, load_checkpoint, train, write_log_csv
from .oracle import load_shard
from .planner import PlanOptions, plan_gradient_descent, validate_trajectory
from .robot import CollisionChecker, RobotModel
from .workspace import Workspace, WorkspaceSpec

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_INVALID = 2


def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _jobs(args) -> int:
    if args.jobs is not None:
        return args.jobs
    return int(os.environ.get("C2GHOF_JOBS", "1"))


def _parse_config_vector(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")])


def cmd_gen_data(args) -> int:
    config = default_gen_config()
    config.update(_load_json(args.config))
    if args.seed is not None:
        config["seed"] = args.seed
    if args.n_workspaces is not None:
        config["n_workspaces"] = args.n_workspaces
    manifest = generate_dataset(config, args.out, jobs=_jobs(args))
    n_ok = len(manifest["shards"])
    n_bad = len(manifest["failures"])
    print(f"wrote {n_ok} shards to {args.out}" + (f" ({n_bad} failures)" if n_bad else ""))
    return EXIT_PARTIAL if n_bad else EXIT_OK


def cmd_train(args) -> int:
    manifest = load_manifest(args.dataset)
    model = RobotModel.from_json(manifest["robot"])
    shards = [load_shard(Path(args.dataset) / e["file"]) for e in manifest["shards"]]
    if not shards:
        raise ValueError("dataset has no shards")
    dofs = {s.dof for s in shards}
    if len(dofs) != 1:
        raise ValueError(f"dataset mixes dof values {sorted(dofs)}")

    overrides = _load_json(args.config)
    for key in ("epochs", "seed"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    for tuple_key in ("hidden", "encoder_widths"):
        if tuple_key in overrides:
            overrides[tuple_key] = tuple(overrides[tuple_key])
    cfg = TrainConfig(**overrides)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(shards, model, cfg, out_dir=out, log_every=args.log_every)
    write_log_csv(result.log_rows, out / "train_log.csv")
    effective = {
        "train": cfg.to_json(),
        "target_scale": result.target_scale,
        "dataset": str(args.dataset),
        "n_shards": len(shards),
        "dof": model.dof,
    }
    (out / "effective_config.json").write_text(json.dumps(effective, sort_keys=True, indent=1))
    final = result.log_rows[-1]
    print(
        f"trained {cfg.epochs} epochs; final loss {final['loss']:.6f}, "
        f"holdout {final['holdout_loss']:.6f}; checkpoint at "
        f"{result.checkpoint_paths[-1]}"
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    params, target_scale = load_checkpoint(args.checkpoint)
    config = _load_json(args.config)
    robot_cfg = config.pop("robot", None)
    wspec_cfg = config.pop("workspace", None)
    if robot_cfg is None or wspec_cfg is None:
        raise ValueError("bench config must carry 'robot' and 'workspace' sections")
    model = robot_from_config(robot_cfg)
    if model.dof != params.layout.child.dof:
        raise ValueError(
            f"checkpoint dof {params.layout.child.dof} does not match robot dof {model.dof}"
        )
    wspec = WorkspaceSpec.from_json(wspec_cfg)
    cfg = BenchConfig.from_json(config)
    if args.seed is not None:
        cfg.seed = args.seed
    rows, instances = run_benchmark(params, target_scale, model, wspec, cfg, out_dir=args.out)
    for row in rows:
        print(row.to_csv_line())
    print(f"wrote {len(instances)} instance records to {args.out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    from .hof import hof_forward
    from .workspace import sample_point_cloud

    params, _ = load_checkpoint(args.checkpoint)
    w = Workspace.load(args.workspace)
    cloud = sample_point_cloud(w, args.cloud_points, seed=args.seed or 0)
    emitted = hof_forward(params, cloud)
    start = _parse_config_vector(args.start)
    goal = _parse_config_vector(args.goal)
    opts = PlanOptions(**_load_json(args.plan_config)) if args.plan_config else PlanOptions()
    traj = plan_gradient_descent(emitted, start, goal, opts)
    line = traj.to_json_line()
    if args.robot:
        model = parse_robot_json(_load_json(args.robot))
        checker = CollisionChecker(model, w)
        report = validate_trajectory(traj, model, w, args.validation_step, checker)
        traj.extras["validated"] = report.collision_free
        traj.extras["validation_checks"] = report.checks_used
        line = traj.to_json_line()
    if args.out:
        Path(args.out).write_text(line + "\n")
    print(line)
    return EXIT_OK if traj.success else EXIT_PARTIAL


def cmd_export_costmap(args) -> int:
    w = Workspace.load(args.workspace)
    model = parse_robot_json(_load_json(args.robot))
    goal = _parse_config_vector(args.goal)
    params = None
    target_scale = 1.0
    if args.checkpoint:
        params, target_scale = load_checkpoint(args.checkpoint)
    meta = export_costmap(
        args.out, model, w, goal, args.resolution,
        hof_params=params, target_scale=target_scale,
    )
    print(json.dumps(meta["maps"], sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="c2ghof",
        description="cost-to-go hypernetwork planning workbench",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate oracle dataset shards")
    p.add_argument("--config", help="JSON generation config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-workspaces", type=int, dest="n_workspaces")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the weight-generating network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="benchmark planners on random workspaces")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True, help="JSON bench config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plan", help="plan one query with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--workspace", required=True)
    p.add_argument("--start", required=True, help="comma-separated joint angles")
    p.add_argument("--goal", required=True)
    p.add_argument("--plan-config", dest="plan_config")
    p.add_argument("--robot", help="robot JSON file; enables validation")
    p.add_argument("--validation-step", type=float, default=0.02)
    p.add_argument("--cloud-points", type=int, default=1024, dest="cloud_points")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("export-costmap", help="export cost maps as PGM images")
    p.add_argument("--workspace", required=True)
    p.add_argument("--robot", required=True, help="robot JSON file")
    p.add_argument("--goal", required=True)
    p.add_argument("--resolution", type=int, default=72)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--checkpoint", help="include predicted and error maps")
    p.set_defaults(func=cmd_export_costmap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
