"""Shared desk-scale trained model for the acceptance suite.

Builds (or loads from a local cache) the dataset and checkpoint that the
learning-quality, planning-success, and trajectory-quality criteria all
evaluate. The cache key is a hash of the full configuration, so stale
caches can never satisfy a changed acceptance setup.

Run directly to prebuild:  python3 tests/desk_model.py
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
CACHE_DIR = REPO_ROOT / "build" / "acceptance_cache"

DESK_GEN_CONFIG = {
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
    "n_workspaces": 50,
    "goals_per_workspace": 20,
    "tuples_per_goal": 2000,
    "cloud_points": 1024,
    "seed": 0,
}

DESK_TRAIN_CONFIG = {
    "learning_rate": 3e-4,
    "epochs": 500,
    "tuples_per_iteration": 2000,
    "pointcloud_subsample": 256,
    "seed": 0,
    "n_basis": 64,
    "hidden": (64, 64),
    "encoder_widths": (64, 128, 256),
    "head_hidden": 512,
}

GRID_CELLS = DESK_GEN_CONFIG["grid_cells"]


def _cache_key() -> str:
    blob = json.dumps(
        {"gen": DESK_GEN_CONFIG, "train": {**DESK_TRAIN_CONFIG,
         "hidden": list(DESK_TRAIN_CONFIG["hidden"]),
         "encoder_widths": list(DESK_TRAIN_CONFIG["encoder_widths"])}},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_or_load():
    """Returns (model, shards, hof_params, target_scale, train_log_rows)."""
    from c2ghof.datagen import generate_dataset, load_manifest, robot_from_config
    from c2ghof.hof import TrainConfig, load_checkpoint, train, write_log_csv
    from c2ghof.oracle import load_shard

    key = _cache_key()
    cache = CACHE_DIR / key
    dataset_dir = cache / "dataset"
    ckpt_path = cache / "checkpoint_final.hofw"
    log_path = cache / "train_log.json"
    model = robot_from_config(DESK_GEN_CONFIG["robot"])

    if not (dataset_dir / "manifest.json").exists():
        print(f"[desk_model] generating dataset into {dataset_dir}", flush=True)
        t0 = time.time()
        manifest = generate_dataset(DESK_GEN_CONFIG, dataset_dir, jobs=1)
        assert not manifest["failures"], manifest["failures"]
        print(f"[desk_model] dataset done in {time.time() - t0:.1f}s", flush=True)
    manifest = load_manifest(dataset_dir)
    shards = [load_shard(dataset_dir / e["file"]) for e in manifest["shards"]]

    if not ckpt_path.exists():
        print("[desk_model] training desk-scale model", flush=True)
        t0 = time.time()
        cfg = TrainConfig(**DESK_TRAIN_CONFIG)
        result = train(shards, model, cfg, out_dir=cache, log_every=25)
        log_path.write_text(json.dumps(result.log_rows))
        write_log_csv(result.log_rows, cache / "train_log.csv")
        print(f"[desk_model] training done in {time.time() - t0:.1f}s; "
              f"final loss {result.log_rows[-1]['loss']:.6f}", flush=True)
    params, target_scale = load_checkpoint(ckpt_path)
    log_rows = json.loads(log_path.read_text()) if log_path.exists() else []
    return model, shards, params, target_scale, log_rows


if __name__ == "__main__":
    sys.path.insert(0, str(REPO_ROOT / "src"))
    build_or_load()
    print("[desk_model] ready")
