"""Comparison planners: grid A*, bidirectional goal-biased RRT, shortcut smoothing."""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .oracle import GridMap, stencil_offsets
from .robot import (
    CollisionChecker,
    RobotModel,
    config_distance,
    wrap_config,
    wrap_diff,
)
from .workspace import Workspace


@dataclass
class Trajectory:
    """Ordered configuration sequence with bookkeeping stats."""

    waypoints: np.ndarray  # (n, dof)
    length: float
    planner_tag: str
    success: bool = True
    planning_time_s: float = 0.0
    collision_checks: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        if self.waypoints.shape[0] < 1:
            raise ValueError("trajectory needs at least one waypoint")

    def to_json_line(self) -> str:
        obj = {
            "planner": self.planner_tag,
            "waypoints": self.waypoints.tolist(),
            "length": self.length,
            "planning_time_s": self.planning_time_s,
            "collision_checks": self.collision_checks,
            "success": self.success,
        }
        obj.update(self.extras)
        return json.dumps(obj, sort_keys=True)


def path_length(m: RobotModel, waypoints: np.ndarray) -> float:
    """Sum of torus-metric distances over consecutive waypoints."""
    waypoints = np.atleast_2d(waypoints)
    return float(
        sum(
            config_distance(m, waypoints[i], waypoints[i + 1])
            for i in range(waypoints.shape[0] - 1)
        )
    )


def make_trajectory(m: RobotModel, waypoints, tag: str, **kw) -> Trajectory:
    waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
    return Trajectory(waypoints=waypoints, length=path_length(m, waypoints), planner_tag=tag, **kw)


# --- grid A* -------------------------------------------------------------------

def _torus_cell_distance(g: GridMap, a: np.ndarray, b: np.ndarray) -> float:
    ca = g.cell_center(a)
    cb = g.cell_center(b)
    d = cb - ca
    span = g.hi - g.lo
    wrapped = np.where(g.periodic, np.abs(d) % span, np.abs(d))
    wrapped = np.where(g.periodic & (wrapped > span / 2), span - wrapped, wrapped)
    return float(np.linalg.norm(wrapped))


def astar(g: GridMap, start, goal) -> Trajectory:
    """Optimal grid path under the same stencil and weights as the cost fields.

    The heuristic is the torus Euclidean distance between cell centers,
    which never exceeds any stencil path cost. Ties break toward the
    smaller flat cell index so runs are deterministic.
    """
    start = tuple(int(i) for i in start)
    goal = tuple(int(i) for i in goal)
    if bool(g.occupancy[start]) or bool(g.occupancy[goal]):
        raise ValueError("start and goal cells must be collision-free")
    t0 = time.perf_counter()
    shape = g.cells_per_dim
    start_f = g.flat(start)
    goal_f = g.flat(goal)
    if start_f == goal_f:
        return make_trajectory(
            g.model, [g.cell_center(start)], "astar",
            planning_time_s=time.perf_counter() - t0,
        )

    offsets = stencil_offsets(g.dof)
    weights = np.linalg.norm(offsets * g.spacing, axis=1)
    occ = g.occupancy
    n = g.n_cells
    gcost = np.full(n, np.inf)
    gcost[start_f] = 0.0
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=bool)
    goal_idx = np.asarray(goal)

    h0 = _torus_cell_distance(g, np.asarray(start), goal_idx)
    heap: list[tuple[float, int]] = [(h0, start_f)]
    while heap:
        f, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        closed[cur] = True
        if cur == goal_f:
            break
        cidx = np.asarray(np.unravel_index(cur, shape))
        for off, w in zip(offsets, weights):
            nb = cidx + off
            ok = True
            for i in range(g.dof):
                if g.periodic[i]:
                    nb[i] %= shape[i]
                elif not 0 <= nb[i] < shape[i]:
                    ok = False
                    break
            if not ok:
                continue
            nb_t = tuple(int(x) for x in nb)
            if occ[nb_t]:
                continue
            nf = g.flat(nb_t)
            cand = gcost[cur] + w
            if cand < gcost[nf]:
                gcost[nf] = cand
                parent[nf] = cur
                heapq.heappush(heap, (cand + _torus_cell_distance(g, nb, goal_idx), nf))

    elapsed = time.perf_counter() - t0
    if not np.isfinite(gcost[goal_f]):
        return make_trajectory(
            g.model, [g.cell_center(start)], "astar", success=False,
            planning_time_s=elapsed, extras={"reason": "no_path"},
        )
    cells = []
    cur = goal_f
    while cur != -1:
        cells.append(g.unflat(cur))
        cur = int(parent[cur])
    cells.reverse()
    waypoints = np.stack([g.cell_center(c) for c in cells])
    return make_trajectory(g.model, waypoints, "astar", planning_time_s=elapsed)


# --- bidirectional RRT -----------------------------------------------------------

@dataclass
class RrtParams:
    step: float = 0.1
    goal_bias: float = 0.03
    max_iters: int = 50_000
    check_step: float = 0.05
    seed: int = 0


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int, dof: int):
        self.nodes = np.empty((max(capacity, 16), dof))
        self.parents = np.empty(max(capacity, 16), dtype=np.int64)
        self.nodes[0] = root
        self.parents[0] = -1
        self.size = 1

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.size == self.nodes.shape[0]:
            self.nodes = np.concatenate([self.nodes, np.empty_like(self.nodes)])
            self.parents = np.concatenate([self.parents, np.empty_like(self.parents)])
        self.nodes[self.size] = q
        self.parents[self.size] = parent
        self.size += 1
        return self.size - 1

    def nearest(self, m: RobotModel, q: np.ndarray) -> int:
        d = np.linalg.norm(wrap_diff(m, self.nodes[: self.size], q), axis=1)
        return int(np.argmin(d))

    def path_to_root(self, i: int) -> list[np.ndarray]:
        out = []
        while i != -1:
            out.append(self.nodes[i].copy())
            i = int(self.parents[i])
        return out


def _sample_config(m: RobotModel, rng: np.random.Generator) -> np.ndarray:
    lo = np.where(m.periodic_mask, -np.pi, m.joint_lo)
    hi = np.where(m.periodic_mask, np.pi, m.joint_hi)
    return lo + (hi - lo) * rng.random(m.dof)


def _extend(
    m: RobotModel, tree: _Tree, q_target: np.ndarray, params: RrtParams,
    checker: CollisionChecker,
) -> tuple[str, int]:
    """One RRT extension toward q_target: 'reached', 'advanced', or 'trapped'."""
    near = tree.nearest(m, q_target)
    q_near = tree.nodes[near]
    diff = wrap_diff(m, q_near, q_target)
    dist = float(np.linalg.norm(diff))
    if dist <= 1e-12:
        return "reached", near
    if dist <= params.step:
        q_new = wrap_config(m, np.asarray(q_target, dtype=float))
        status = "reached"
    else:
        q_new = wrap_config(m, q_near + (params.step / dist) * diff)
        status = "advanced"
    if checker.edge_in_collision(q_near, q_new, params.check_step):
        return "trapped", near
    return status, tree.add(q_new, near)


def rrt_plan(
    m: RobotModel,
    w: Workspace,
    start: np.ndarray,
    goal: np.ndarray,
    params: RrtParams | None = None,
    checker: CollisionChecker | None = None,
) -> Trajectory:
    """Bidirectional RRT-Connect with goal-biased sampling.

    Each iteration extends one tree toward a sample (biased toward the
    opposite root with probability goal_bias) and greedily connects the
    other tree to the new node. Every kept edge passed the collision check
    at check_step spacing.
    """
    params = params or RrtParams()
    checker = checker or CollisionChecker(m, w)
    t0 = time.perf_counter()
    base_checks = checker.checks
    start = wrap_config(m, np.asarray(start, dtype=float))
    goal = wrap_config(m, np.asarray(goal, dtype=float))
    if checker.config_in_collision(start) or checker.config_in_collision(goal):
        raise ValueError("start and goal must be collision-free")
    rng = np.random.default_rng(params.seed)
    tree_a, tree_b = _Tree(start, 64, m.dof), _Tree(goal, 64, m.dof)
    a_is_start = True

    for it in range(params.max_iters):
        if rng.random() < params.goal_bias:
            q_rand = tree_b.nodes[0].copy()
        else:
            q_rand = _sample_config(m, rng)
        status, new_i = _extend(m, tree_a, q_rand, params, checker)
        if status != "trapped":
            q_new = tree_a.nodes[new_i]
            # Greedy connect of the other tree toward the fresh node.
            while True:
                status_b, i_b = _extend(m, tree_b, q_new, params, checker)
                if status_b != "advanced":
                    break
            if status_b == "reached":
                path_a = tree_a.path_to_root(new_i)[::-1]
                path_b = tree_b.path_to_root(i_b)
                if np.allclose(path_a[-1], path_b[0]):
                    path_b = path_b[1:]
                waypoints = np.asarray(path_a + path_b)
                if not a_is_start:
                    waypoints = waypoints[::-1]
                return make_trajectory(
                    m, waypoints, "rrt",
                    planning_time_s=time.perf_counter() - t0,
                    collision_checks=checker.checks - base_checks,
                    extras={"iterations": it + 1},
                )
        tree_a, tree_b = tree_b, tree_a
        a_is_start = not a_is_start

    return make_trajectory(
        m, [start], "rrt", success=False,
        planning_time_s=time.perf_counter() - t0,
        collision_checks=checker.checks - base_checks,
        extras={"reason": "max_iters"},
    )


# --- shortcut smoothing -----------------------------------------------------------

def _point_along(
    m: RobotModel, waypoints: np.ndarray, cum: np.ndarray, s: float
) -> tuple[int, np.ndarray]:
    """Configuration at arc length s; returns (segment index, config)."""
    seg = int(np.searchsorted(cum, s, side="right") - 1)
    seg = min(max(seg, 0), waypoints.shape[0] - 2)
    seg_len = cum[seg + 1] - cum[seg]
    t = 0.0 if seg_len <= 0 else (s - cum[seg]) / seg_len
    d = wrap_diff(m, waypoints[seg], waypoints[seg + 1])
    return seg, wrap_config(m, waypoints[seg] + t * d)


def shortcut_smooth(
    t: Trajectory,
    m: RobotModel,
    w: Workspace,
    iters: int = 200,
    seed: int = 0,
    check_step: float = 0.05,
    checker: CollisionChecker | None = None,
) -> Trajectory:
    """Replace random sub-paths with direct geodesics when collision-free.

    Cut points are drawn uniformly by arc length (not only at waypoints).
    The returned length never exceeds the input length.
    """
    checker = checker or CollisionChecker(m, w)
    base_checks = checker.checks
    t0 = time.perf_counter()
    waypoints = t.waypoints.copy()
    rng = np.random.default_rng(seed)
    accepted = 0
    for _ in range(iters):
        if waypoints.shape[0] < 2:
            break
        seg_lens = np.array(
            [
                config_distance(m, waypoints[i], waypoints[i + 1])
                for i in range(waypoints.shape[0] - 1)
            ]
        )
        total = float(seg_lens.sum())
        if total <= 0:
            break
        cum = np.concatenate([[0.0], np.cumsum(seg_lens)])
        s1, s2 = sorted(rng.random(2) * total)
        i1, p1 = _point_along(m, waypoints, cum, s1)
        i2, p2 = _point_along(m, waypoints, cum, s2)
        if i2 < i1 or (i1 == i2):
            continue  # both cuts on one segment: geodesic already
        direct = config_distance(m, p1, p2)
        removed = (cum[i1 + 1] - s1) + (cum[i2] - cum[i1 + 1]) + (s2 - cum[i2])
        if direct > removed:
            continue
        if checker.edge_in_collision(p1, p2, check_step):
            continue
        waypoints = np.concatenate(
            [waypoints[: i1 + 1], [p1, p2], waypoints[i2 + 1 :]]
        )
        accepted += 1
    new_length = path_length(m, waypoints)
    if new_length > t.length:  # float guard; geometry guarantees <=
        waypoints, new_length = t.waypoints.copy(), t.length
    return Trajectory(
        waypoints=waypoints,
        length=new_length,
        planner_tag="rrt-smooth" if t.planner_tag == "rrt" else f"{t.planner_tag}-smooth",
        success=t.success,
        planning_time_s=time.perf_counter() - t0,
        collision_checks=checker.checks - base_checks,
        extras={"shortcuts_accepted": accepted},
    )
