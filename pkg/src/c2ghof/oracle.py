"""Ground-truth cost-to-go supervision.

Low-DoF arms get a dense C-space grid with Dijkstra cost fields; higher
DoF gets a probabilistic roadmap with graph Dijkstra. Both feed the same
training-tuple emitter and the shard writer.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .robot import RobotModel, config_distances, configs_in_collision, interpolate_edge
from .serialize import (
    DATASET_MAGIC,
    expect_magic,
    read_f32_array,
    read_json_block,
    read_u32,
    read_u64,
    write_f32_array,
    write_json_block,
    write_magic,
    write_u32,
    write_u64,
)
from .workspace import PointCloud, Workspace, read_point_cloud, write_point_cloud

log = logging.getLogger(__name__)


class GridBudgetError(RuntimeError):
    """Requested grid exceeds the configured cell budget."""


class RejectionBudgetError(RuntimeError):
    """Rejection sampling could not find enough collision-free configurations."""


def stencil_offsets(d: int) -> np.ndarray:
    """All 3^d - 1 nonzero offsets in {-1, 0, 1}^d."""
    offs = np.array(list(itertools.product((-1, 0, 1), repeat=d)))
    return offs[np.any(offs != 0, axis=1)]


@dataclass
class GridMap:
    """Uniform C-space occupancy grid; periodic joints wrap."""

    model: RobotModel
    cells_per_dim: tuple[int, ...]
    lo: np.ndarray
    hi: np.ndarray
    periodic: np.ndarray
    occupancy: np.ndarray  # bool, shape cells_per_dim; True = collision
    _graph: csr_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def dof(self) -> int:
        return len(self.cells_per_dim)

    @property
    def spacing(self) -> np.ndarray:
        return (self.hi - self.lo) / np.asarray(self.cells_per_dim)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_dim))

    def cell_center(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=float)
        return self.lo + (idx + 0.5) * self.spacing

    def all_centers(self) -> np.ndarray:
        grids = np.indices(self.cells_per_dim).reshape(self.dof, -1).T
        return self.cell_center(grids)

    def flat(self, idx) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in idx), self.cells_per_dim))

    def unflat(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.cells_per_dim))

    def free_flat_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.occupancy.reshape(-1))

    def graph(self) -> csr_matrix:
        """Directed CSR over free cells with Euclidean stencil weights (cached)."""
        if self._graph is None:
            self._graph = _build_grid_graph(self)
        return self._graph


def build_grid_map(
    m: RobotModel, w: Workspace, cells_per_dim, max_cells: int = 4_000_000
) -> GridMap:
    """Collision occupancy at every cell center. Grids are capped at dof <= 3."""
    if m.dof > 3:
        raise ValueError("grid oracles are limited to dof <= 3")
    if isinstance(cells_per_dim, int):
        cells_per_dim = (cells_per_dim,) * m.dof
    cells_per_dim = tuple(int(c) for c in cells_per_dim)
    if len(cells_per_dim) != m.dof or any(c < 1 for c in cells_per_dim):
        raise ValueError("cells_per_dim must give a positive count per joint")
    if int(np.prod(cells_per_dim)) > max_cells:
        raise GridBudgetError(
            f"{np.prod(cells_per_dim)} cells exceed the budget of {max_cells}"
        )
    per = m.periodic_mask
    if any(per[i] and cells_per_dim[i] < 3 for i in range(m.dof)):
        raise ValueError("periodic dimensions need at least 3 cells")
    lo = np.where(per, -np.pi, m.joint_lo)
    hi = np.where(per, np.pi, m.joint_hi)
    g = GridMap(
        model=m,
        cells_per_dim=cells_per_dim,
        lo=lo,
        hi=hi,
        periodic=per,
        occupancy=np.zeros(cells_per_dim, dtype=bool),
    )
    centers = g.all_centers()
    g.occupancy = configs_in_collision(m, centers, w).reshape(cells_per_dim)
    return g


def _build_grid_graph(g: GridMap) -> csr_matrix:
    shape = g.cells_per_dim
    d = g.dof
    n = g.n_cells
    free = ~g.occupancy.reshape(-1)
    idx = np.indices(shape).reshape(d, -1)
    spacing = g.spacing
    rows, cols, weights = [], [], []
    for off in stencil_offsets(d):
        nb = idx + off[:, None]
        valid = np.ones(n, dtype=bool)
        for i in range(d):
            if g.periodic[i]:
                nb[i] %= shape[i]
            else:
                valid &= (nb[i] >= 0) & (nb[i] < shape[i])
        src = np.ravel_multi_index(idx[:, valid], shape)
        dst = np.ravel_multi_index(nb[:, valid], shape)
        ok = free[src] & free[dst]
        rows.append(src[ok])
        cols.append(dst[ok])
        wgt = float(np.linalg.norm(off * spacing))
        weights.append(np.full(int(ok.sum()), wgt))
    return csr_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


@dataclass
class GridCostField:
    """Exact cost-to-go over a grid for one goal cell; +inf where unreachable."""

    grid: GridMap
    goal: tuple[int, ...]
    cost: np.ndarray  # shape cells_per_dim

    @property
    def goal_config(self) -> np.ndarray:
        return self.grid.cell_center(self.goal)

    def value_at(self, idx) -> float:
        return float(self.cost[tuple(int(i) for i in idx)])

    def finite_sources(self) -> tuple[np.ndarray, np.ndarray]:
        """Configurations and costs of all finite-cost cells (goal included)."""
        flat_cost = self.cost.reshape(-1)
        finite = np.isfinite(flat_cost)
        grids = np.indices(self.grid.cells_per_dim).reshape(self.grid.dof, -1).T
        return self.grid.cell_center(grids[finite]), flat_cost[finite]


def dijkstra_cost_fields(g: GridMap, goals: list[tuple[int, ...]]) -> list[GridCostField]:
    """Cost fields for several goal cells, sharing one graph build."""
    for goal in goals:
        if bool(g.occupancy[tuple(int(i) for i in goal)]):
            raise ValueError(f"goal cell {tuple(goal)} is occupied")
    graph = g.graph()
    flats = [g.flat(goal) for goal in goals]
    dist = _csgraph_dijkstra(graph, directed=True, indices=flats)
    dist = np.atleast_2d(dist)
    fields = []
    for goal, row in zip(goals, dist):
        cost = row.reshape(g.cells_per_dim).copy()
        cost[g.occupancy] = np.inf
        fields.append(GridCostField(grid=g, goal=tuple(int(i) for i in goal), cost=cost))
    return fields


def dijkstra_cost_field(g: GridMap, goal) -> GridCostField:
    """Single-goal convenience wrapper around dijkstra_cost_fields."""
    return dijkstra_cost_fields(g, [tuple(int(i) for i in goal)])[0]


# --- probabilistic roadmap ---------------------------------------------------

def sample_free_configs(
    m: RobotModel,
    w: Workspace,
    n: int,
    rng: np.random.Generator,
    max_attempt_factor: int = 200,
) -> np.ndarray:
    """Rejection-sample n collision-free configurations."""
    lo = np.where(m.periodic_mask, -np.pi, m.joint_lo)
    hi = np.where(m.periodic_mask, np.pi, m.joint_hi)
    out = np.empty((n, m.dof))
    got = 0
    attempts = 0
    budget = max_attempt_factor * n
    while got < n:
        chunk = min(max(2 * (n - got), 128), budget - attempts)
        if chunk <= 0:
            raise RejectionBudgetError(
                f"found {got}/{n} free configurations in {attempts} attempts"
            )
        Q = lo + (hi - lo) * rng.random((chunk, m.dof))
        attempts += chunk
        ok = ~configs_in_collision(m, Q, w)
        take = min(int(ok.sum()), n - got)
        out[got : got + take] = Q[ok][:take]
        got += take
    return out


def _knn_torus(m: RobotModel, V: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Indices of the k nearest roadmap vertices per vertex (ties by index)."""
    n = V.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for s in range(0, n, chunk):
        e = min(s + chunk, n)
        d = config_distances(m, V[s:e, None, :], V[None, :, :])
        d[np.arange(s, e) - s, np.arange(s, e)] = np.inf
        out[s:e] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


@dataclass
class Roadmap:
    """Collision-free configuration graph with validated edges."""

    model: RobotModel
    vertices: np.ndarray  # (n, dof)
    edges_u: np.ndarray  # canonical u < v
    edges_v: np.ndarray
    edges_w: np.ndarray
    k: int
    step: float
    seed: int
    _graph: csr_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def graph(self) -> csr_matrix:
        if self._graph is None:
            n = self.n_vertices
            u = np.concatenate([self.edges_u, self.edges_v])
            v = np.concatenate([self.edges_v, self.edges_u])
            w = np.concatenate([self.edges_w, self.edges_w])
            self._graph = csr_matrix((w, (u, v)), shape=(n, n))
        return self._graph

    def degree(self, i: int) -> int:
        return int(np.sum(self.edges_u == i) + np.sum(self.edges_v == i))


def build_prm(
    m: RobotModel,
    w: Workspace,
    n_vertices: int,
    k: int,
    step: float,
    seed: int,
    max_attempt_factor: int = 200,
) -> Roadmap:
    """Sample vertices, connect k nearest neighbors, keep collision-free edges."""
    if n_vertices < 2 or k < 1:
        raise ValueError("need n_vertices >= 2 and k >= 1")
    rng = np.random.default_rng(seed)
    V = sample_free_configs(m, w, n_vertices, rng, max_attempt_factor)
    nbrs = _knn_torus(m, V, min(k, n_vertices - 1))
    seen: set[tuple[int, int]] = set()
    eu, ev, ew = [], [], []
    for u in range(n_vertices):
        for v in nbrs[u]:
            key = (min(u, int(v)), max(u, int(v)))
            if key in seen:
                continue
            seen.add(key)
            samples = interpolate_edge(m, V[key[0]], V[key[1]], step)
            if not np.any(configs_in_collision(m, samples, w)):
                eu.append(key[0])
                ev.append(key[1])
                ew.append(float(config_distances(m, V[key[0]], V[key[1]])))
    return Roadmap(
        model=m,
        vertices=V,
        edges_u=np.asarray(eu, dtype=np.int64),
        edges_v=np.asarray(ev, dtype=np.int64),
        edges_w=np.asarray(ew, dtype=float),
        k=k,
        step=step,
        seed=seed,
    )


@dataclass
class RoadmapCostField:
    """Graph cost-to-go over roadmap vertices for one goal vertex."""

    roadmap: Roadmap
    goal_vertex: int
    cost: np.ndarray  # (n_vertices,)

    @property
    def goal_config(self) -> np.ndarray:
        return self.roadmap.vertices[self.goal_vertex]

    def finite_sources(self) -> tuple[np.ndarray, np.ndarray]:
        finite = np.isfinite(self.cost)
        return self.roadmap.vertices[finite], self.cost[finite]


def roadmap_cost_field(r: Roadmap, goal_vertex: int) -> RoadmapCostField:
    """Shortest-path distances from every vertex to the goal vertex."""
    if not 0 <= goal_vertex < r.n_vertices:
        raise ValueError("goal vertex out of range")
    dist = _csgraph_dijkstra(r.graph(), directed=True, indices=goal_vertex)
    return RoadmapCostField(roadmap=r, goal_vertex=int(goal_vertex), cost=dist)


# --- training tuples ---------------------------------------------------------

class CostTuple(NamedTuple):
    q1: np.ndarray
    q2: np.ndarray
    c: float


@dataclass
class TupleSet:
    """Struct-of-arrays batch of (source, goal, cost-to-go) records."""

    q1: np.ndarray  # (n, dof)
    q2: np.ndarray  # (n, dof)
    c: np.ndarray  # (n,)

    def __len__(self) -> int:
        return self.c.shape[0]

    def __getitem__(self, i: int) -> CostTuple:
        return CostTuple(self.q1[i], self.q2[i], float(self.c[i]))

    def take(self, idx) -> "TupleSet":
        return TupleSet(self.q1[idx], self.q2[idx], self.c[idx])

    @staticmethod
    def concatenate(parts: list["TupleSet"]) -> "TupleSet":
        if not parts:
            raise ValueError("nothing to concatenate")
        return TupleSet(
            np.concatenate([p.q1 for p in parts]),
            np.concatenate([p.q2 for p in parts]),
            np.concatenate([p.c for p in parts]),
        )


def emit_tuples(fields: list, n_per_goal: int, seed: int) -> TupleSet:
    """Sample training tuples from cost fields.

    For each field, n_per_goal finite-cost sources are drawn uniformly with
    replacement; q2 is the field's goal configuration. Fields whose only
    finite entry is the goal itself are skipped with a warning. Sources with
    infinite cost are never emitted.
    """
    if not fields:
        raise ValueError("fields must be non-empty")
    rng = np.random.default_rng(seed)
    parts = []
    dof = None
    for fi, f in enumerate(fields):
        configs, costs = f.finite_sources()
        dof = configs.shape[1] if dof is None else dof
        if configs.shape[0] <= 1:
            log.warning("cost field %d has no finite sources besides the goal; skipped", fi)
            continue
        idx = rng.integers(0, configs.shape[0], size=n_per_goal)
        goal = np.asarray(f.goal_config, dtype=float)
        parts.append(
            TupleSet(configs[idx], np.tile(goal, (n_per_goal, 1)), costs[idx].copy())
        )
    if not parts:
        return TupleSet(np.empty((0, dof or 0)), np.empty((0, dof or 0)), np.empty(0))
    return TupleSet.concatenate(parts)


# --- dataset shards ----------------------------------------------------------

SHARD_VERSION = 1


@dataclass
class Shard:
    """One workspace worth of supervision: cloud plus cost tuples."""

    workspace: Workspace
    cloud: PointCloud
    tuples: TupleSet
    dof: int
    workspace_id: int
    version: int = SHARD_VERSION


def write_shard(shard: Shard, f: BinaryIO) -> None:
    write_magic(f, DATASET_MAGIC)
    write_u32(f, shard.version)
    write_u32(f, shard.dof)
    write_u32(f, shard.workspace_id)
    write_json_block(f, shard.workspace.to_json())
    write_point_cloud(shard.cloud, f)
    write_u64(f, len(shard.tuples))
    rec = np.concatenate(
        [shard.tuples.q1, shard.tuples.q2, shard.tuples.c[:, None]], axis=1
    )
    write_f32_array(f, rec)


def read_shard(f: BinaryIO) -> Shard:
    expect_magic(f, DATASET_MAGIC)
    version = read_u32(f)
    dof = read_u32(f)
    wid = read_u32(f)
    w = Workspace.from_json(read_json_block(f))
    cloud = read_point_cloud(f)
    n = read_u64(f)
    rec = read_f32_array(f, n * (2 * dof + 1)).reshape(n, 2 * dof + 1)
    tuples = TupleSet(rec[:, :dof], rec[:, dof : 2 * dof], rec[:, 2 * dof])
    return Shard(
        workspace=w, cloud=cloud, tuples=tuples, dof=dof, workspace_id=wid, version=version
    )


def save_shard(shard: Shard, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_shard(shard, f)


def load_shard(path: str | Path) -> Shard:
    with open(path, "rb") as f:
        return read_shard(f)
