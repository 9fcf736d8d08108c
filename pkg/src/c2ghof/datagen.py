"""Dataset generation: workspaces, oracle cost fields, and shards on disk.

Each workspace becomes one shard. Per-workspace work is independent and
seeded from (master seed, workspace id), so shard bytes are identical
regardless of worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .oracle import (
    Shard,
    build_grid_map,
    build_prm,
    dijkstra_cost_fields,
    emit_tuples,
    roadmap_cost_field,
    save_shard,
)
from .robot import PLANAR, RobotModel, planar_arm, yaw_pitch_arm
from .workspace import WorkspaceSpec, generate_random_workspace, sample_point_cloud

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def parse_robot_json(obj: dict) -> RobotModel:
    """Accept either the serialized RobotModel form or the config form."""
    if "joints" in obj:
        return RobotModel.from_json(obj)
    return robot_from_config(obj)


def robot_from_config(obj: dict) -> RobotModel:
    kind = obj.get("kind", PLANAR)
    if kind == PLANAR:
        return planar_arm(
            obj["link_lengths"],
            link_radius=float(obj.get("link_radius", 0.02)),
            base=obj.get("base"),
        )
    if kind == "yaw_pitch":
        return yaw_pitch_arm(
            obj["link_lengths"],
            link_radius=float(obj.get("link_radius", 0.02)),
            pitch_limits=tuple(obj.get("pitch_limits", (-np.pi / 2, np.pi / 2))),
            base=obj.get("base"),
        )
    raise ValueError(f"unknown robot kind {kind!r}")


def _seed_for(master: int, workspace_id: int, stage: int) -> int:
    ss = np.random.SeedSequence([master, workspace_id, stage])
    return int(ss.generate_state(1)[0])


def default_gen_config() -> dict:
    return {
        "robot": {"kind": "planar", "link_lengths": [0.5, 0.5], "link_radius": 0.02},
        "workspace": {
            "dim": 2,
            "bounds": [[-1.1, -1.1], [1.1, 1.1]],
            "n_obstacles": [3, 6],
            "size_range": [0.05, 0.15],
            "base_clearance": 0.55,
        },
        "oracle": "grid",
        "grid_cells": 72,
        "prm": {"n_vertices": 2000, "k": 10, "step": 0.05},
        "n_workspaces": 50,
        "goals_per_workspace": 20,
        "tuples_per_goal": 2000,
        "cloud_points": 1024,
        "seed": 0,
    }


def validate_gen_config(config: dict, model: RobotModel) -> None:
    if config["oracle"] not in ("grid", "prm"):
        raise ValueError(f"unknown oracle {config['oracle']!r}")
    if config["oracle"] == "grid" and model.dof > 3:
        raise ValueError("grid oracle is limited to dof <= 3; use the prm oracle")
    wdim = config["workspace"]["dim"]
    if wdim != model.workspace_dim:
        raise ValueError(f"workspace dim {wdim} does not match robot geometry")


def generate_one_shard(config: dict, workspace_id: int, out_dir: str | Path) -> dict:
    """Build and write one shard; returns its manifest entry."""
    model = robot_from_config(config["robot"])
    wspec = WorkspaceSpec.from_json(config["workspace"])
    master = int(config["seed"])
    w = generate_random_workspace(wspec, _seed_for(master, workspace_id, 0))
    cloud = sample_point_cloud(w, int(config["cloud_points"]), _seed_for(master, workspace_id, 1))

    goal_rng = np.random.default_rng(_seed_for(master, workspace_id, 2))
    n_goals = int(config["goals_per_workspace"])
    if config["oracle"] == "grid":
        grid = build_grid_map(model, w, config["grid_cells"])
        free = grid.free_flat_indices()
        if free.size <= n_goals:
            raise RuntimeError(f"workspace {workspace_id}: too few free cells")
        picks = goal_rng.choice(free.size, size=n_goals, replace=False)
        goals = [grid.unflat(int(free[i])) for i in picks]
        fields = dijkstra_cost_fields(grid, goals)
    else:
        prm_cfg = config["prm"]
        roadmap = build_prm(
            model, w,
            n_vertices=int(prm_cfg["n_vertices"]),
            k=int(prm_cfg["k"]),
            step=float(prm_cfg["step"]),
            seed=_seed_for(master, workspace_id, 3),
        )
        picks = goal_rng.choice(roadmap.n_vertices, size=n_goals, replace=False)
        fields = [roadmap_cost_field(roadmap, int(v)) for v in picks]

    tuples = emit_tuples(fields, int(config["tuples_per_goal"]), _seed_for(master, workspace_id, 4))
    shard = Shard(
        workspace=w, cloud=cloud, tuples=tuples,
        dof=model.dof, workspace_id=workspace_id,
    )
    path = Path(out_dir) / f"shard_{workspace_id:05d}.c2gd"
    save_shard(shard, path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return {
        "workspace_id": workspace_id,
        "file": path.name,
        "sha256": digest,
        "n_tuples": len(tuples),
        "status": "ok",
    }


def generate_dataset(config: dict, out_dir: str | Path, jobs: int = 1) -> dict:
    """Generate all shards plus a manifest with per-shard checksums.

    Per-shard failures are recorded in the manifest instead of aborting
    the run; the manifest's "failures" list is empty on full success.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = robot_from_config(config["robot"])
    validate_gen_config(config, model)
    n = int(config["n_workspaces"])
    entries: list[dict] = []
    failures: list[dict] = []

    def handle(wid: int, result, error: str | None):
        if error is None:
            entries.append(result)
        else:
            failures.append({"workspace_id": wid, "status": "failed", "error": error})
            log.error("workspace %d failed: %s", wid, error)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                wid: pool.submit(generate_one_shard, config, wid, out_dir)
                for wid in range(n)
            }
            for wid in range(n):
                try:
                    handle(wid, futures[wid].result(), None)
                except Exception as e:  # noqa: BLE001 - recorded per shard
                    handle(wid, None, str(e))
    else:
        for wid in range(n):
            try:
                handle(wid, generate_one_shard(config, wid, out_dir), None)
            except Exception as e:  # noqa: BLE001 - recorded per shard
                handle(wid, None, str(e))

    entries.sort(key=lambda e: e["workspace_id"])
    manifest = {
        "format": "C2GDSET",
        "version": 1,
        "dof": model.dof,
        "robot": model.to_json(),
        "config": config,
        "shards": entries,
        "failures": sorted(failures, key=lambda e: e["workspace_id"]),
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def load_manifest(dataset_dir: str | Path) -> dict:
    return json.loads((Path(dataset_dir) / MANIFEST_NAME).read_text())
