"""Random obstacle workspaces and the point clouds that describe them.

A workspace is an axis-aligned box containing disk (2D) or box (3D)
obstacles. Point clouds are sampled uniformly from the union of obstacle
interiors and are the raw input consumed by the weight-generating network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .serialize import (
    POINTCLOUD_MAGIC,
    expect_magic,
    read_f32_array,
    read_u32,
    write_f32_array,
    write_magic,
    write_u32,
)

DISK2D = "disk2d"
BOX3D = "box3d"

# Sentinel clouds for empty workspaces sit this many box-extents beyond the
# upper bounds corner, so the encoder's max-pool sees a fixed constant.
_SENTINEL_EXTENTS = 10.0


class InfeasibleWorkspaceError(RuntimeError):
    """Obstacle placement failed within the rejection budget."""


@dataclass
class Obstacle:
    """A single solid obstacle: a disk in 2D, an axis-aligned box in 3D."""

    kind: str
    center: np.ndarray
    radius: float = 0.0
    half_extents: np.ndarray | None = None

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.kind == DISK2D:
            if self.center.shape != (2,):
                raise ValueError("disk2d center must be a 2-vector")
            if not self.radius > 0:
                raise ValueError("disk2d radius must be positive")
        elif self.kind == BOX3D:
            if self.center.shape != (3,):
                raise ValueError("box3d center must be a 3-vector")
            self.half_extents = np.asarray(self.half_extents, dtype=float)
            if self.half_extents.shape != (3,) or not np.all(self.half_extents > 0):
                raise ValueError("box3d half_extents must be a positive 3-vector")
        else:
            raise ValueError(f"unknown obstacle kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def measure(self) -> float:
        """Area (2D) or volume (3D)."""
        if self.kind == DISK2D:
            return float(np.pi * self.radius**2)
        return float(8.0 * np.prod(self.half_extents))

    def outer_radius(self) -> float:
        if self.kind == DISK2D:
            return float(self.radius)
        return float(np.linalg.norm(self.half_extents))

    def min_corner(self) -> np.ndarray:
        if self.kind == DISK2D:
            return self.center - self.radius
        return self.center - self.half_extents

    def max_corner(self) -> np.ndarray:
        if self.kind == DISK2D:
            return self.center + self.radius
        return self.center + self.half_extents

    def contains(self, p: np.ndarray) -> bool:
        return bool(self.contains_many(np.asarray(p, dtype=float)[None, :])[0])

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        """Boundary-inclusive membership test for an (N, dim) array."""
        if self.kind == DISK2D:
            d2 = np.sum((points - self.center) ** 2, axis=1)
            return d2 <= self.radius**2
        return np.all(np.abs(points - self.center) <= self.half_extents, axis=1)

    def distance_to_point(self, p: np.ndarray) -> float:
        """Euclidean distance from p to the obstacle (0 if inside)."""
        p = np.asarray(p, dtype=float)
        if self.kind == DISK2D:
            return max(0.0, float(np.linalg.norm(p - self.center)) - self.radius)
        gap = np.maximum(np.abs(p - self.center) - self.half_extents, 0.0)
        return float(np.linalg.norm(gap))

    def sample_interior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((n, self.dim))
        if self.kind == DISK2D:
            r = self.radius * np.sqrt(u[:, 0])
            ang = 2.0 * np.pi * u[:, 1]
            return self.center + np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
        return self.center - self.half_extents + 2.0 * self.half_extents * u

    def to_json(self) -> dict:
        if self.kind == DISK2D:
            return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}
        return {
            "kind": self.kind,
            "center": self.center.tolist(),
            "half_extents": self.half_extents.tolist(),
        }

    @staticmethod
    def from_json(obj: dict) -> "Obstacle":
        return Obstacle(
            kind=obj["kind"],
            center=np.asarray(obj["center"], dtype=float),
            radius=float(obj.get("radius", 0.0)),
            half_extents=obj.get("half_extents"),
        )


@dataclass
class Workspace:
    """An axis-aligned workspace box with a list of solid obstacles."""

    dim: int
    bounds: np.ndarray  # (2, dim): row 0 lower corner, row 1 upper corner
    obstacles: list[Obstacle] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.shape != (2, self.dim):
            raise ValueError("bounds must be a (2, dim) array")
        if not np.all(self.bounds[1] > self.bounds[0]):
            raise ValueError("upper bounds must exceed lower bounds")
        for ob in self.obstacles:
            if ob.dim != self.dim:
                raise ValueError("obstacle dimension mismatch")

    def sentinel_point(self) -> np.ndarray:
        extent = self.bounds[1] - self.bounds[0]
        return self.bounds[1] + _SENTINEL_EXTENTS * extent

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "bounds": self.bounds.tolist(),
            "obstacles": [ob.to_json() for ob in self.obstacles],
            "seed": int(self.seed),
        }

    @staticmethod
    def from_json(obj: dict) -> "Workspace":
        return Workspace(
            dim=int(obj["dim"]),
            bounds=np.asarray(obj["bounds"], dtype=float),
            obstacles=[Obstacle.from_json(o) for o in obj["obstacles"]],
            seed=int(obj.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))

    @staticmethod
    def load(path: str | Path) -> "Workspace":
        return Workspace.from_json(json.loads(Path(path).read_text()))


@dataclass
class PointCloud:
    """Fixed-size sample of obstacle interiors; the network's workspace input."""

    dim: int
    points: np.ndarray  # (N, dim)
    sentinel: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.dim)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass
class WorkspaceSpec:
    """Parameters of the random workspace generator."""

    dim: int
    bounds: np.ndarray
    n_obstacles: tuple[int, int]
    size_range: tuple[float, float]
    base_clearance: float = 0.0
    base: np.ndarray | None = None
    boxes_on_floor: bool = True
    max_rejects: int = 2000  # per obstacle

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.base is None:
            self.base = np.zeros(self.dim)
        self.base = np.asarray(self.base, dtype=float)
        lo, hi = self.n_obstacles
        if lo < 0 or hi < lo:
            raise ValueError("n_obstacles must be a nonempty 0-based range")
        if self.size_range[0] <= 0 and hi > 0:
            raise ValueError("obstacle sizes must be positive")

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "bounds": self.bounds.tolist(),
            "n_obstacles": list(self.n_obstacles),
            "size_range": list(self.size_range),
            "base_clearance": self.base_clearance,
            "base": self.base.tolist(),
            "boxes_on_floor": self.boxes_on_floor,
        }

    @staticmethod
    def from_json(obj: dict) -> "WorkspaceSpec":
        return WorkspaceSpec(
            dim=int(obj["dim"]),
            bounds=np.asarray(obj["bounds"], dtype=float),
            n_obstacles=tuple(obj["n_obstacles"]),
            size_range=tuple(obj["size_range"]),
            base_clearance=float(obj.get("base_clearance", 0.0)),
            base=obj.get("base"),
            boxes_on_floor=bool(obj.get("boxes_on_floor", True)),
        )


def _propose_obstacle(spec: WorkspaceSpec, rng: np.random.Generator) -> Obstacle | None:
    """One placement attempt; None when the size cannot fit the bounds."""
    lo, hi = spec.bounds
    smin, smax = spec.size_range
    if spec.dim == 2:
        r = smin + (smax - smin) * rng.random()
        clo, chi = lo + r, hi - r
        if np.any(chi < clo):
            return None
        c = clo + (chi - clo) * rng.random(2)
        return Obstacle(DISK2D, c, radius=r)
    h = smin + (smax - smin) * rng.random(3)
    clo, chi = lo + h, hi - h
    if np.any(chi < clo):
        return None
    c = clo + (chi - clo) * rng.random(3)
    if spec.boxes_on_floor:
        c[2] = lo[2] + h[2]
    return Obstacle(BOX3D, c, half_extents=h)


def generate_random_workspace(spec: WorkspaceSpec, seed: int) -> Workspace:
    """Deterministically generate a workspace satisfying all placement rules.

    Obstacles are rejection-resampled until they lie inside the bounds and
    keep the configured clearance around the arm base. Raises
    InfeasibleWorkspaceError when the per-obstacle rejection budget runs out.
    """
    rng = np.random.default_rng(seed)
    nmin, nmax = spec.n_obstacles
    count = int(rng.integers(nmin, nmax + 1))
    obstacles: list[Obstacle] = []
    for i in range(count):
        for _ in range(spec.max_rejects):
            ob = _propose_obstacle(spec, rng)
            if ob is None:
                continue
            if ob.distance_to_point(spec.base) < spec.base_clearance:
                continue
            obstacles.append(ob)
            break
        else:
            raise InfeasibleWorkspaceError(
                f"could not place obstacle {i + 1}/{count} within "
                f"{spec.max_rejects} attempts (bounds too tight or base "
                f"clearance {spec.base_clearance} unsatisfiable)"
            )
    return Workspace(dim=spec.dim, bounds=spec.bounds.copy(), obstacles=obstacles, seed=seed)


def point_in_obstacle(w: Workspace, p: np.ndarray) -> bool:
    """True iff p lies inside or on the boundary of any obstacle."""
    p = np.asarray(p, dtype=float)
    if p.shape != (w.dim,):
        raise ValueError(f"point must have dimension {w.dim}")
    return any(ob.contains(p) for ob in w.obstacles)


def points_in_obstacles(w: Workspace, points: np.ndarray) -> np.ndarray:
    """Vectorized point_in_obstacle over an (N, dim) array."""
    points = np.asarray(points, dtype=float)
    mask = np.zeros(points.shape[0], dtype=bool)
    for ob in w.obstacles:
        mask |= ob.contains_many(points)
    return mask


def sample_point_cloud(w: Workspace, n: int, seed: int) -> PointCloud:
    """Sample n points uniformly from the union of obstacle interiors.

    Obstacles may overlap; a candidate drawn from obstacle i is kept only
    when i is the lowest-index obstacle containing it, which makes the
    accepted points exactly uniform on the union. Empty workspaces yield a
    sentinel cloud of max(n, 1) copies of a fixed point outside the bounds.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if not w.obstacles:
        point = w.sentinel_point()
        return PointCloud(w.dim, np.tile(point, (max(n, 1), 1)), sentinel=True)
    if n == 0:
        raise ValueError("n must be >= 1 for non-empty workspaces")

    rng = np.random.default_rng(seed)
    weights = np.array([ob.measure() for ob in w.obstacles])
    weights = weights / weights.sum()
    out = np.empty((n, w.dim))
    got = 0
    while got < n:
        chunk = max(2 * (n - got), 64)
        picks = rng.choice(len(w.obstacles), size=chunk, p=weights)
        cand = np.empty((chunk, w.dim))
        for i, ob in enumerate(w.obstacles):
            sel = picks == i
            if np.any(sel):
                cand[sel] = ob.sample_interior(rng, int(sel.sum()))
        contains = np.stack([ob.contains_many(cand) for ob in w.obstacles], axis=1)
        first = np.argmax(contains, axis=1)
        accept = first == picks
        take = min(int(accept.sum()), n - got)
        out[got : got + take] = cand[accept][:take]
        got += take
    return PointCloud(w.dim, out)


def write_point_cloud(pc: PointCloud, f: BinaryIO) -> None:
    write_magic(f, POINTCLOUD_MAGIC)
    write_u32(f, pc.n)
    write_u32(f, pc.dim)
    write_f32_array(f, pc.points)


def read_point_cloud(f: BinaryIO) -> PointCloud:
    expect_magic(f, POINTCLOUD_MAGIC)
    n = read_u32(f)
    dim = read_u32(f)
    pts = read_f32_array(f, n * dim).reshape(n, dim)
    return PointCloud(dim, pts)


def save_point_cloud(pc: PointCloud, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_point_cloud(pc, f)


def load_point_cloud(path: str | Path) -> PointCloud:
    with open(path, "rb") as f:
        return read_point_cloud(f)
