"""Benchmark harness, PRM-replan baseline, and cost-map image export.

Every planner in a benchmark run receives byte-identical
(workspace, start, goal) triples. Times are wall-clock per instance and
split into preprocessing, trajectory generation, and postprocessing;
per-workspace preprocessing (grid build, roadmap build, weight emission)
is amortized uniformly over that workspace's queries.
"""

from __future__ import annotations

import heapq
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import RrtParams, Trajectory, astar, make_trajectory, rrt_plan, shortcut_smooth
from .c2gnet import C2GParams, c2g_eval_batch
from .hof import HofParams, hof_forward
from .oracle import GridMap, Roadmap, build_grid_map, build_prm, dijkstra_cost_field, dijkstra_cost_fields
from .planner import PLANNER_TAG, PlanOptions, plan_gradient_descent, validate_trajectory
from .robot import CollisionChecker, RobotModel, config_distance, config_distances
from .workspace import Workspace, WorkspaceSpec, generate_random_workspace, sample_point_cloud

log = logging.getLogger(__name__)

RESERVED_INTENSITY = 255  # collision / unreachable cells in exported maps


# --- PGM + cost-map export -----------------------------------------------------

def write_pgm(path: str | Path, img: np.ndarray) -> None:
    """Binary (P5) grayscale image; img must be uint8 (H, W)."""
    img = np.asarray(img, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        f.write(img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    w, h, maxval = (int(x) for x in fields)
    if maxval != 255:
        raise ValueError("expected 8-bit PGM")
    pos += 1
    return np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w)


def _quantize(values: np.ndarray, finite_mask: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Scale finite values into 0..254; masked-out cells get the reserved byte."""
    finite_mask = finite_mask & np.isfinite(values)
    img = np.full(values.shape, RESERVED_INTENSITY, dtype=np.uint8)
    if np.any(finite_mask):
        vmin = float(values[finite_mask].min())
        vmax = float(values[finite_mask].max())
        spread = vmax - vmin if vmax > vmin else 1.0
        scaled = (values[finite_mask] - vmin) / spread * 254.0
        img[finite_mask] = np.clip(np.rint(scaled), 0, 254).astype(np.uint8)
    else:
        vmin = vmax = float("nan")
    return img, vmin, vmax


def export_costmap(
    out_prefix: str | Path,
    model: RobotModel,
    w: Workspace,
    goal: np.ndarray,
    resolution: int,
    hof_params: HofParams | None = None,
    target_scale: float = 1.0,
    predicted: np.ndarray | None = None,
) -> dict:
    """Write ground-truth, and optionally predicted and error, cost maps.

    Images are binary PGM at the grid resolution; a JSON sidecar records the
    value range of each map and the reserved collision intensity. The
    predicted map comes from the checkpoint's emitted network, or from a
    precomputed `predicted` field for oracle-vs-oracle comparisons.
    """
    if model.dof != 2:
        raise ValueError("cost-map export is limited to dof = 2")
    grid = build_grid_map(model, w, resolution)
    goal = np.asarray(goal, dtype=float)
    goal_cell = tuple(
        int(np.clip((goal[i] - grid.lo[i]) / grid.spacing[i], 0, resolution - 1))
        for i in range(2)
    )
    if bool(grid.occupancy[goal_cell]):
        raise ValueError("goal cell is occupied")
    gt = dijkstra_cost_field(grid, goal_cell)
    finite = np.isfinite(gt.cost)
    out_prefix = Path(out_prefix)
    meta: dict = {
        "resolution": resolution,
        "reserved_intensity": RESERVED_INTENSITY,
        "goal_cell": list(goal_cell),
        "maps": {},
    }

    img, vmin, vmax = _quantize(gt.cost, finite)
    write_pgm(out_prefix.with_name(out_prefix.name + "_gt.pgm"), img)
    meta["maps"]["gt"] = {"vmin": vmin, "vmax": vmax}

    if predicted is None and hof_params is not None:
        cloud = sample_point_cloud(w, 1024, seed=w.seed)
        child = hof_forward(hof_params, cloud)
        centers = grid.all_centers()
        predicted = (
            c2g_eval_batch(child, centers, np.tile(gt.goal_config, (centers.shape[0], 1)))
            * target_scale
        ).reshape(grid.cells_per_dim)
    if predicted is not None:
        img, vmin, vmax = _quantize(predicted, ~grid.occupancy)
        write_pgm(out_prefix.with_name(out_prefix.name + "_pred.pgm"), img)
        meta["maps"]["pred"] = {"vmin": vmin, "vmax": vmax}

        # inf - inf at mutually unreachable cells is fine; they are masked out
        with np.errstate(invalid="ignore"):
            err = np.abs(predicted - gt.cost)
        img, vmin, vmax = _quantize(err, finite)
        write_pgm(out_prefix.with_name(out_prefix.name + "_err.pgm"), img)
        meta["maps"]["err"] = {"vmin": vmin, "vmax": vmax}

    meta_path = out_prefix.with_name(out_prefix.name + "_meta.json")
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=1))
    return meta


# --- PRM with replanning ---------------------------------------------------------

class PrmReplanPlanner:
    """Roadmap built once per workspace; queries validate and replan.

    A query connects start and goal to their nearest roadmap vertices,
    searches the graph, then validates the found path at a finer step.
    Infeasible edges are removed and the search repeats until a validated
    path emerges or the graph disconnects.
    """

    def __init__(self, roadmap: Roadmap, checker: CollisionChecker, validation_step: float):
        self.roadmap = roadmap
        self.checker = checker
        self.validation_step = validation_step
        self.adj: dict[int, dict[int, float]] = {i: {} for i in range(roadmap.n_vertices)}
        for u, v, wgt in zip(roadmap.edges_u, roadmap.edges_v, roadmap.edges_w):
            self.adj[int(u)][int(v)] = float(wgt)
            self.adj[int(v)][int(u)] = float(wgt)

    def _dijkstra_path(self, src: int, dst: int) -> list[int] | None:
        dist = {src: 0.0}
        parent: dict[int, int] = {}
        heap = [(0.0, src)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == dst:
                break
            for v, wgt in self.adj[u].items():
                nd = d + wgt
                if nd < dist.get(v, np.inf):
                    dist[v] = nd
                    parent[v] = u
                    heapq.heappush(heap, (nd, v))
        if dst not in done:
            return None
        path = [dst]
        while path[-1] != src:
            path.append(parent[path[-1]])
        return path[::-1]

    def query(
        self, start: np.ndarray, goal: np.ndarray, k: int = 10
    ) -> tuple[Trajectory, float, float, float]:
        """Returns (trajectory, preproc_s, search_s, postproc_s)."""
        m = self.roadmap.model
        t0 = time.perf_counter()
        base_checks = self.checker.checks
        ids = {}
        for tag, q in (("start", start), ("goal", goal)):
            idx = self.roadmap.n_vertices + (0 if tag == "start" else 1)
            self.adj[idx] = {}
            d = config_distances(m, self.roadmap.vertices, q)
            order = np.argsort(d, kind="stable")[:k]
            for v in order:
                if not self.checker.edge_in_collision(q, self.roadmap.vertices[v], self.roadmap.step):
                    self.adj[idx][int(v)] = float(d[v])
                    self.adj[int(v)][idx] = float(d[v])
            ids[tag] = idx
        preproc = time.perf_counter() - t0

        configs = {
            ids["start"]: np.asarray(start, dtype=float),
            ids["goal"]: np.asarray(goal, dtype=float),
        }

        def config_of(i: int) -> np.ndarray:
            return configs.get(i, self.roadmap.vertices[i] if i < self.roadmap.n_vertices else None)

        search_s = 0.0
        postproc_s = 0.0
        replans = 0
        try:
            while True:
                t1 = time.perf_counter()
                path = self._dijkstra_path(ids["start"], ids["goal"])
                search_s += time.perf_counter() - t1
                if path is None:
                    return (
                        make_trajectory(
                            m, [start], "prm", success=False,
                            collision_checks=self.checker.checks - base_checks,
                            extras={"reason": "disconnected", "replans": replans},
                        ),
                        preproc, search_s, postproc_s,
                    )
                t2 = time.perf_counter()
                bad = None
                for a, b in zip(path[:-1], path[1:]):
                    if self.checker.edge_in_collision(
                        config_of(a), config_of(b), self.validation_step
                    ):
                        bad = (a, b)
                        break
                postproc_s += time.perf_counter() - t2
                if bad is None:
                    waypoints = np.asarray([config_of(i) for i in path])
                    traj = make_trajectory(
                        m, waypoints, "prm",
                        collision_checks=self.checker.checks - base_checks,
                        extras={"replans": replans},
                    )
                    traj.planning_time_s = search_s
                    return traj, preproc, search_s, postproc_s
                self.adj[bad[0]].pop(bad[1], None)
                self.adj[bad[1]].pop(bad[0], None)
                replans += 1
        finally:
            # Remove the temporary start/goal vertices.
            for idx in ids.values():
                for v in list(self.adj.get(idx, {})):
                    self.adj[v].pop(idx, None)
                self.adj.pop(idx, None)


# --- benchmark -------------------------------------------------------------------

@dataclass
class BenchConfig:
    n_workspaces: int = 20
    pairs_per_workspace: int = 10
    min_separation: float = np.pi
    grid_cells: int = 72
    cloud_points: int = 1024
    pointcloud_subsample: int = 256
    validation_step: float = 0.02
    rrt: RrtParams = field(default_factory=RrtParams)
    smooth_iters: int = 200
    prm_vertices: int = 2000
    prm_k: int = 10
    prm_step: float = 0.05
    plan: PlanOptions = field(default_factory=PlanOptions)
    seed: int = 0
    include_astar: bool = True
    include_prm: bool = True
    include_rrt: bool = True

    @staticmethod
    def from_json(obj: dict) -> "BenchConfig":
        cfg = BenchConfig()
        for key, value in obj.items():
            if key == "rrt":
                cfg.rrt = RrtParams(**value)
            elif key == "plan":
                cfg.plan = PlanOptions(**value)
            elif hasattr(cfg, key):
                setattr(cfg, key, value)
            else:
                raise ValueError(f"unknown benchmark option {key!r}")
        return cfg


@dataclass
class BenchRow:
    planner: str
    mean_time_s: float
    std_time_s: float
    mean_norm_length: float
    std_norm_length: float
    success_rate: float
    mean_collision_checks: float
    preproc_s: float
    postproc_s: float

    CSV_HEADER = (
        "planner,mean_time_s,std_time_s,mean_norm_length,std_norm_length,"
        "success_rate,mean_collision_checks,preproc_s,postproc_s"
    )

    def to_csv_line(self) -> str:
        def fmt(x):
            return "nan" if x is None or not np.isfinite(x) else f"{x:.6g}"

        return ",".join(
            [
                self.planner,
                fmt(self.mean_time_s),
                fmt(self.std_time_s),
                fmt(self.mean_norm_length),
                fmt(self.std_norm_length),
                fmt(self.success_rate),
                fmt(self.mean_collision_checks),
                fmt(self.preproc_s),
                fmt(self.postproc_s),
            ]
        )


def _seed_for(master: int, *key: int) -> int:
    return int(np.random.SeedSequence([master, *key]).generate_state(1)[0])


def sample_query_pairs(
    grid: GridMap, n_pairs: int, min_separation: float, rng: np.random.Generator,
    max_tries: int = 20000,
) -> list[tuple[tuple, tuple]]:
    """Free start/goal cell pairs separated by at least min_separation."""
    free = grid.free_flat_indices()
    pairs = []
    tries = 0
    m = grid.model
    while len(pairs) < n_pairs and tries < max_tries:
        tries += 1
        a, b = rng.choice(free.size, size=2, replace=False)
        ca, cb = grid.unflat(int(free[a])), grid.unflat(int(free[b]))
        if config_distance(m, grid.cell_center(ca), grid.cell_center(cb)) >= min_separation:
            pairs.append((ca, cb))
    if len(pairs) < n_pairs:
        log.warning("only %d/%d query pairs satisfied the separation", len(pairs), n_pairs)
    return pairs


def run_benchmark(
    hof_params: HofParams,
    target_scale: float,
    model: RobotModel,
    wspec: WorkspaceSpec,
    cfg: BenchConfig,
    out_dir: str | Path | None = None,
) -> tuple[list[BenchRow], list[dict]]:
    """Run every planner on identical query triples and aggregate rows."""
    instances: list[dict] = []
    use_astar = cfg.include_astar and model.dof <= 3
    for wid in range(cfg.n_workspaces):
        w = generate_random_workspace(wspec, _seed_for(cfg.seed, wid, 0))
        cloud = sample_point_cloud(w, cfg.cloud_points, _seed_for(cfg.seed, wid, 1))
        rng = np.random.default_rng(_seed_for(cfg.seed, wid, 2))

        t0 = time.perf_counter()
        grid = build_grid_map(model, w, cfg.grid_cells)
        grid.graph()
        grid_build_s = time.perf_counter() - t0

        t0 = time.perf_counter()
        pts = cloud.points
        if pts.shape[0] > cfg.pointcloud_subsample:
            idx = rng.choice(pts.shape[0], size=cfg.pointcloud_subsample, replace=False)
            pts = pts[idx]
        child = hof_forward(hof_params, pts)
        hof_s = time.perf_counter() - t0

        prm_planner = None
        prm_build_s = 0.0
        if cfg.include_prm:
            t0 = time.perf_counter()
            roadmap = build_prm(
                model, w, cfg.prm_vertices, cfg.prm_k, cfg.prm_step,
                seed=_seed_for(cfg.seed, wid, 3),
            )
            prm_build_s = time.perf_counter() - t0
            prm_planner = PrmReplanPlanner(
                roadmap, CollisionChecker(model, w), cfg.validation_step
            )

        pairs = sample_query_pairs(grid, cfg.pairs_per_workspace, cfg.min_separation, rng)
        n_queries = max(len(pairs), 1)
        for pid, (start_cell, goal_cell) in enumerate(pairs):
            start = grid.cell_center(start_cell)
            goal = grid.cell_center(goal_cell)
            base = {"workspace": wid, "pair": pid}
            pair_records: list[dict] = []

            astar_len = None
            if use_astar:
                traj = astar(grid, start_cell, goal_cell)
                astar_len = traj.length if traj.success else None
                pair_records.append(
                    base | {
                        "planner": "astar",
                        "success": traj.success,
                        "length": traj.length,
                        "time_s": traj.planning_time_s,
                        "collision_checks": 0,
                        "preproc_s": grid_build_s / n_queries,
                        "postproc_s": 0.0,
                    }
                )

            opts = PlanOptions(**{**cfg.plan.__dict__, "seed": _seed_for(cfg.seed, wid, 4, pid)})
            traj = plan_gradient_descent(child, start, goal, opts, topology=model)
            checker = CollisionChecker(model, w)
            t0 = time.perf_counter()
            report = validate_trajectory(traj, model, w, cfg.validation_step, checker)
            validate_s = time.perf_counter() - t0
            ok = traj.success and report.collision_free
            pair_records.append(
                base | {
                    "planner": PLANNER_TAG,
                    "success": bool(ok),
                    "length": traj.length,
                    "time_s": traj.planning_time_s,
                    "collision_checks": report.checks_used,
                    "preproc_s": hof_s / n_queries,
                    "postproc_s": validate_s,
                    "descent_steps": traj.extras["descent_steps"],
                    "perturbations_used": traj.extras["perturbations_used"],
                    "validated": report.collision_free,
                    "reached": traj.success,
                }
            )

            if cfg.include_rrt:
                params = RrtParams(**{**cfg.rrt.__dict__, "seed": _seed_for(cfg.seed, wid, 5, pid)})
                rrt_traj = rrt_plan(model, w, start, goal, params)
                pair_records.append(
                    base | {
                        "planner": "rrt",
                        "success": rrt_traj.success,
                        "length": rrt_traj.length,
                        "time_s": rrt_traj.planning_time_s,
                        "collision_checks": rrt_traj.collision_checks,
                        "preproc_s": 0.0,
                        "postproc_s": 0.0,
                    }
                )
                if rrt_traj.success:
                    sm = shortcut_smooth(
                        rrt_traj, model, w, iters=cfg.smooth_iters,
                        seed=_seed_for(cfg.seed, wid, 6, pid),
                        check_step=cfg.validation_step,
                    )
                    pair_records.append(
                        base | {
                            "planner": "rrt-smooth",
                            "success": sm.success,
                            "length": sm.length,
                            "time_s": rrt_traj.planning_time_s,
                            "collision_checks": rrt_traj.collision_checks + sm.collision_checks,
                            "preproc_s": 0.0,
                            "postproc_s": sm.planning_time_s,
                        }
                    )
                else:
                    pair_records.append(
                        base | {
                            "planner": "rrt-smooth", "success": False,
                            "length": rrt_traj.length, "time_s": rrt_traj.planning_time_s,
                            "collision_checks": rrt_traj.collision_checks,
                            "preproc_s": 0.0, "postproc_s": 0.0,
                        }
                    )

            if prm_planner is not None:
                traj, pre_s, search_s, post_s = prm_planner.query(start, goal, k=cfg.prm_k)
                pair_records.append(
                    base | {
                        "planner": "prm",
                        "success": traj.success,
                        "length": traj.length,
                        "time_s": search_s,
                        "collision_checks": traj.collision_checks,
                        "preproc_s": prm_build_s / n_queries + pre_s,
                        "postproc_s": post_s,
                        "replans": traj.extras.get("replans", 0),
                    }
                )

            if astar_len and astar_len > 0:
                for rec in pair_records:
                    if rec["success"]:
                        rec["norm_length"] = rec["length"] / astar_len
            instances.extend(pair_records)

    rows = aggregate_rows(instances)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "instances.jsonl", "w") as f:
            for rec in instances:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        write_summary_csv(rows, out_dir / "summary.csv")
        write_timing_csv(rows, out_dir / "timing.csv")
    return rows, instances


def aggregate_rows(instances: list[dict]) -> list[BenchRow]:
    """One row per planner; times over successes, lengths over commonly solved."""
    planners = sorted({r["planner"] for r in instances})
    keys = sorted({(r["workspace"], r["pair"]) for r in instances})
    solved_by_all = {
        key: all(
            r["success"]
            for r in instances
            if (r["workspace"], r["pair"]) == key
        )
        for key in keys
    }
    rows = []
    for tag in planners:
        recs = [r for r in instances if r["planner"] == tag]
        succ = [r for r in recs if r["success"]]
        times = np.array([r["time_s"] for r in succ]) if succ else np.array([np.nan])
        norm = np.array(
            [
                r["norm_length"]
                for r in recs
                if solved_by_all[(r["workspace"], r["pair"])] and "norm_length" in r
            ]
        )
        rows.append(
            BenchRow(
                planner=tag,
                mean_time_s=float(np.mean(times)),
                std_time_s=float(np.std(times)),
                mean_norm_length=float(np.mean(norm)) if norm.size else float("nan"),
                std_norm_length=float(np.std(norm)) if norm.size else float("nan"),
                success_rate=len(succ) / len(recs) if recs else 0.0,
                mean_collision_checks=float(np.mean([r["collision_checks"] for r in recs])),
                preproc_s=float(np.mean([r["preproc_s"] for r in recs])),
                postproc_s=float(np.mean([r["postproc_s"] for r in recs])),
            )
        )
    return rows


SUMMARY_FOOTER = (
    "# times averaged over successful runs; lengths normalized by the grid-optimal"
    " planner over instances solved by every planner; per-workspace preprocessing"
    " amortized uniformly across its queries"
)


def write_summary_csv(rows: list[BenchRow], path: str | Path) -> None:
    lines = [BenchRow.CSV_HEADER] + [r.to_csv_line() for r in rows] + [SUMMARY_FOOTER]
    Path(path).write_text("\n".join(lines) + "\n")


def write_timing_csv(rows: list[BenchRow], path: str | Path) -> None:
    lines = ["planner,preproc_s,traj_s,postproc_s,total_s"]
    for r in rows:
        total = r.preproc_s + r.mean_time_s + r.postproc_s
        lines.append(
            f"{r.planner},{r.preproc_s:.6g},{r.mean_time_s:.6g},"
            f"{r.postproc_s:.6g},{total:.6g}"
        )
    lines.append("# traj_s is the mean trajectory-generation time over successful runs")
    Path(path).write_text("\n".join(lines) + "\n")


# --- model-quality evaluation (held-out goals) -----------------------------------

def evaluate_learning_quality(
    shards,
    model: RobotModel,
    hof_params: HofParams,
    target_scale: float,
    grid_cells: int,
    goals_per_workspace: int = 5,
    subsample: int = 256,
    seed: int = 12345,
) -> dict:
    """Median absolute cost error on freshly drawn (held-out) goals.

    For each shard workspace, new goal cells are sampled (disjoint from any
    training draw by seed separation), ground truth comes from grid
    Dijkstra, and the emitted network predicts all finite cells at once.
    """
    errors = []
    gt_costs = []
    for shard in shards:
        rng = np.random.default_rng(_seed_for(seed, shard.workspace_id))
        grid = build_grid_map(model, shard.workspace, grid_cells)
        free = grid.free_flat_indices()
        picks = rng.choice(free.size, size=goals_per_workspace, replace=False)
        goals = [grid.unflat(int(free[i])) for i in picks]
        fields = dijkstra_cost_fields(grid, goals)
        pts = shard.cloud.points
        if pts.shape[0] > subsample:
            idx = rng.choice(pts.shape[0], size=subsample, replace=False)
            pts = pts[idx]
        child = hof_forward(hof_params, pts)
        for f in fields:
            configs, costs = f.finite_sources()
            pred = c2g_eval_batch(
                child, configs, np.tile(f.goal_config, (configs.shape[0], 1))
            ) * target_scale
            errors.append(np.abs(pred - costs))
            gt_costs.append(costs)
    errors = np.concatenate(errors)
    gt_costs = np.concatenate(gt_costs)
    return {
        "median_abs_error": float(np.median(errors)),
        "mean_abs_error": float(np.mean(errors)),
        "mean_gt_cost": float(np.mean(gt_costs)),
        "ratio": float(np.median(errors) / np.mean(gt_costs)),
        "n_points": int(errors.size),
    }


def evaluate_planning(
    shards,
    model: RobotModel,
    hof_params: HofParams,
    grid_cells: int,
    n_pairs_total: int,
    min_separation: float,
    plan_opts: PlanOptions,
    validation_step: float = 0.02,
    subsample: int = 256,
    seed: int = 54321,
) -> dict:
    """Gradient-descent planning over training workspaces vs grid-optimal A*.

    Success requires both reaching the goal tolerance and passing
    validation. Length ratios are relative to the A* optimum on the same
    query.
    """
    per_ws = max(1, int(np.ceil(n_pairs_total / len(shards))))
    n_success = 0
    n_reached = 0
    n_validated = 0
    n_total = 0
    ratios = []
    zero_check_violations = 0
    for shard in shards:
        rng = np.random.default_rng(_seed_for(seed, shard.workspace_id))
        grid = build_grid_map(model, shard.workspace, grid_cells)
        pts = shard.cloud.points
        if pts.shape[0] > subsample:
            idx = rng.choice(pts.shape[0], size=subsample, replace=False)
            pts = pts[idx]
        child = hof_forward(hof_params, pts)
        pairs = sample_query_pairs(grid, per_ws, min_separation, rng)
        for pid, (sc, gc) in enumerate(pairs):
            if n_total >= n_pairs_total:
                break
            n_total += 1
            start, goal = grid.cell_center(sc), grid.cell_center(gc)
            opts = PlanOptions(**{**plan_opts.__dict__, "seed": _seed_for(seed, shard.workspace_id, pid)})
            checker = CollisionChecker(model, shard.workspace)
            traj = plan_gradient_descent(child, start, goal, opts, topology=model)
            if checker.checks != 0 or traj.collision_checks != 0:
                zero_check_violations += 1
            report = validate_trajectory(traj, model, shard.workspace, validation_step, checker)
            if traj.success:
                n_reached += 1
            if report.collision_free:
                n_validated += 1
            if traj.success and report.collision_free:
                n_success += 1
                ref = astar(grid, sc, gc)
                if ref.success and ref.length > 0:
                    ratios.append(traj.length / ref.length)
    return {
        "n_total": n_total,
        "success_rate": n_success / max(n_total, 1),
        "reached_rate": n_reached / max(n_total, 1),
        "validated_rate": n_validated / max(n_total, 1),
        "mean_length_ratio": float(np.mean(ratios)) if ratios else float("nan"),
        "zero_check_violations": zero_check_violations,
        "n_ratio": len(ratios),
    }
