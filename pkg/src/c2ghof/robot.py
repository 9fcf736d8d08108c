"""Serial revolute-arm kinematics, joint-space metric, and collision tests.

Two geometries are supported: a planar chain (one link per joint, for 2D
workspaces) and a yaw-pitch chain (base yaw plus pitch joints driving
dof - 1 links, for 3D workspaces). Links are capsules: segments inflated
by link_radius. All collision semantics are boundary-inclusive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .workspace import BOX3D, DISK2D, Workspace

PERIODIC = "periodic"
LIMITED = "limited"

PLANAR = "planar"
YAW_PITCH = "yaw_pitch"

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Joint:
    kind: str
    lo: float = -np.pi
    hi: float = np.pi

    def __post_init__(self):
        if self.kind not in (PERIODIC, LIMITED):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        if self.kind == LIMITED and not self.lo < self.hi:
            raise ValueError("limited joint needs lo < hi")


@dataclass
class RobotModel:
    """Immutable description of a serial revolute arm."""

    link_lengths: np.ndarray
    link_radius: float
    joints: tuple[Joint, ...]
    geometry: str = PLANAR
    base: np.ndarray | None = None

    def __post_init__(self):
        self.link_lengths = np.asarray(self.link_lengths, dtype=float)
        if np.any(self.link_lengths <= 0):
            raise ValueError("link lengths must be positive")
        if self.link_radius < 0:
            raise ValueError("link radius must be nonnegative")
        d = len(self.joints)
        if d < 1:
            raise ValueError("need at least one joint")
        if self.geometry == PLANAR:
            if self.link_lengths.shape != (d,):
                raise ValueError("planar arm needs one link per joint")
            dim = 2
        elif self.geometry == YAW_PITCH:
            if d < 2 or self.link_lengths.shape != (d - 1,):
                raise ValueError("yaw-pitch arm needs dof - 1 links, dof >= 2")
            dim = 3
        else:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.base is None:
            self.base = np.zeros(dim)
        self.base = np.asarray(self.base, dtype=float)
        if self.base.shape != (dim,):
            raise ValueError(f"base must be a {dim}-vector")

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def workspace_dim(self) -> int:
        return 2 if self.geometry == PLANAR else 3

    @property
    def n_links(self) -> int:
        return self.link_lengths.shape[0]

    @property
    def periodic_mask(self) -> np.ndarray:
        return np.array([j.kind == PERIODIC for j in self.joints])

    @property
    def joint_lo(self) -> np.ndarray:
        return np.array([j.lo for j in self.joints])

    @property
    def joint_hi(self) -> np.ndarray:
        return np.array([j.hi for j in self.joints])

    def to_json(self) -> dict:
        return {
            "dof": self.dof,
            "link_lengths": self.link_lengths.tolist(),
            "link_radius": self.link_radius,
            "joints": [{"type": j.kind, "lo": j.lo, "hi": j.hi} for j in self.joints],
            "geometry": self.geometry,
            "base": self.base.tolist(),
        }

    @staticmethod
    def from_json(obj: dict) -> "RobotModel":
        joints = tuple(
            Joint(j["type"], float(j.get("lo", -np.pi)), float(j.get("hi", np.pi)))
            for j in obj["joints"]
        )
        return RobotModel(
            link_lengths=np.asarray(obj["link_lengths"], dtype=float),
            link_radius=float(obj["link_radius"]),
            joints=joints,
            geometry=obj.get("geometry", PLANAR),
            base=obj.get("base"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))

    @staticmethod
    def load(path: str | Path) -> "RobotModel":
        return RobotModel.from_json(json.loads(Path(path).read_text()))


def planar_arm(link_lengths, link_radius: float = 0.02, base=None) -> RobotModel:
    """Planar chain with all joints periodic."""
    n = len(link_lengths)
    return RobotModel(
        link_lengths=np.asarray(link_lengths, dtype=float),
        link_radius=link_radius,
        joints=tuple(Joint(PERIODIC) for _ in range(n)),
        geometry=PLANAR,
        base=base,
    )


def yaw_pitch_arm(
    link_lengths,
    link_radius: float = 0.02,
    pitch_limits: tuple[float, float] = (-np.pi / 2, np.pi / 2),
    base=None,
) -> RobotModel:
    """3D chain: periodic base yaw plus limited pitch joints, one per link."""
    n = len(link_lengths)
    joints = (Joint(PERIODIC),) + tuple(
        Joint(LIMITED, pitch_limits[0], pitch_limits[1]) for _ in range(n)
    )
    return RobotModel(
        link_lengths=np.asarray(link_lengths, dtype=float),
        link_radius=link_radius,
        joints=joints,
        geometry=YAW_PITCH,
        base=base,
    )


# --- angle arithmetic -------------------------------------------------------

def wrap_to_pi(x: np.ndarray) -> np.ndarray:
    """Wrap angles into [-pi, pi) using exact fmod/shift steps.

    fmod is exact and the +/- 2*pi shifts satisfy the Sterbenz condition, so
    values that are equal modulo the float 2*pi wrap to identical floats.
    """
    w = np.fmod(np.asarray(x, dtype=float), TWO_PI)
    w = np.where(w >= np.pi, w - TWO_PI, w)
    w = np.where(w < -np.pi, w + TWO_PI, w)
    return w


def _wrap_diff_upper(x: np.ndarray) -> np.ndarray:
    """Wrap differences into (-pi, pi]."""
    w = np.fmod(np.asarray(x, dtype=float), TWO_PI)
    w = np.where(w > np.pi, w - TWO_PI, w)
    w = np.where(w <= -np.pi, w + TWO_PI, w)
    return w


def wrap_config(m: RobotModel, q: np.ndarray) -> np.ndarray:
    """Canonicalize a configuration: periodic joints into [-pi, pi)."""
    q = np.asarray(q, dtype=float)
    per = m.periodic_mask
    out = q.copy()
    out[..., per] = wrap_to_pi(q[..., per])
    return out


def wrap_diff(m: RobotModel, q_from: np.ndarray, q_to: np.ndarray) -> np.ndarray:
    """Per-joint shortest-arc difference q_to - q_from.

    Periodic joints wrap into (-pi, pi]; limited joints subtract directly.
    """
    d = np.asarray(q_to, dtype=float) - np.asarray(q_from, dtype=float)
    per = m.periodic_mask
    d = np.array(d, dtype=float)
    d[..., per] = _wrap_diff_upper(d[..., per])
    return d


def config_distance(m: RobotModel, q1: np.ndarray, q2: np.ndarray) -> float:
    """Euclidean joint-space distance with shortest-arc wrap on periodic joints."""
    return float(np.linalg.norm(wrap_diff(m, q1, q2)))


def config_distances(m: RobotModel, Q1: np.ndarray, Q2: np.ndarray) -> np.ndarray:
    """Batched config_distance; Q1/Q2 broadcast to (N, dof)."""
    return np.linalg.norm(wrap_diff(m, Q1, Q2), axis=-1)


def clamp_config(m: RobotModel, q: np.ndarray) -> np.ndarray:
    """Wrap periodic joints and clip limited joints to their range."""
    q = wrap_config(m, q)
    per = m.periodic_mask
    lim = ~per
    if np.any(lim):
        q[..., lim] = np.clip(q[..., lim], m.joint_lo[lim], m.joint_hi[lim])
    return q


# --- kinematics -------------------------------------------------------------

def fk_points(m: RobotModel, Q: np.ndarray) -> np.ndarray:
    """Joint positions for a batch of configurations.

    Q has shape (M, dof); the result has shape (M, n_links + 1, dim) with
    row 0 the base.
    """
    Q = np.asarray(Q, dtype=float)
    M = Q.shape[0]
    L = m.n_links
    dim = m.workspace_dim
    pts = np.empty((M, L + 1, dim))
    pts[:, 0] = m.base
    if m.geometry == PLANAR:
        ang = np.cumsum(Q, axis=1)
        dx = m.link_lengths * np.cos(ang)
        dy = m.link_lengths * np.sin(ang)
        pts[:, 1:, 0] = m.base[0] + np.cumsum(dx, axis=1)
        pts[:, 1:, 1] = m.base[1] + np.cumsum(dy, axis=1)
    else:
        yaw = Q[:, 0:1]
        pitch = np.cumsum(Q[:, 1:], axis=1)
        horiz = m.link_lengths * np.cos(pitch)
        dz = m.link_lengths * np.sin(pitch)
        pts[:, 1:, 0] = m.base[0] + np.cumsum(horiz * np.cos(yaw), axis=1)
        pts[:, 1:, 1] = m.base[1] + np.cumsum(horiz * np.sin(yaw), axis=1)
        pts[:, 1:, 2] = m.base[2] + np.cumsum(dz, axis=1)
    return pts


def forward_kinematics(m: RobotModel, q: np.ndarray) -> np.ndarray:
    """World-frame link segments for one configuration: (n_links, 2, dim)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (m.dof,):
        raise ValueError(f"configuration must have dimension {m.dof}")
    pts = fk_points(m, q[None, :])[0]
    return np.stack([pts[:-1], pts[1:]], axis=1)


# --- collision geometry -----------------------------------------------------

def _dist_point_segments(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from point p to each segment a[i]-b[i]."""
    ab = b - a
    ap = p - a
    denom = np.sum(ab * ab, axis=1)
    t = np.zeros_like(denom)
    nz = denom > 0
    t[nz] = np.clip(np.sum(ap[nz] * ab[nz], axis=1) / denom[nz], 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(closest - p, axis=1)


def _point_box_sqdist(p: np.ndarray, center: np.ndarray, half: np.ndarray) -> np.ndarray:
    gap = np.maximum(np.abs(p - center) - half, 0.0)
    return np.sum(gap * gap, axis=-1)


def _dist_segments_box(
    a: np.ndarray, b: np.ndarray, center: np.ndarray, half: np.ndarray
) -> np.ndarray:
    """Min distance from segments a[i]-b[i] to an axis-aligned box.

    The squared point-box distance is convex along the segment, so a
    fixed-count ternary search converges to machine precision.
    """
    lo = np.zeros(a.shape[0])
    hi = np.ones(a.shape[0])
    ab = b - a
    for _ in range(100):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = _point_box_sqdist(a + m1[:, None] * ab, center, half)
        f2 = _point_box_sqdist(a + m2[:, None] * ab, center, half)
        take1 = f1 <= f2
        hi = np.where(take1, m2, hi)
        lo = np.where(take1, lo, m1)
    t = 0.5 * (lo + hi)
    return np.sqrt(_point_box_sqdist(a + t[:, None] * ab, center, half))


def configs_in_collision(m: RobotModel, Q: np.ndarray, w: Workspace) -> np.ndarray:
    """Vectorized capsule-vs-obstacle test for a batch of configurations."""
    Q = np.asarray(Q, dtype=float)
    if not w.obstacles:
        return np.zeros(Q.shape[0], dtype=bool)
    pts = fk_points(m, Q)
    a = pts[:, :-1].reshape(-1, m.workspace_dim)
    b = pts[:, 1:].reshape(-1, m.workspace_dim)
    hit = np.zeros(a.shape[0], dtype=bool)
    for ob in w.obstacles:
        if ob.kind == DISK2D:
            d = _dist_point_segments(ob.center, a, b)
            hit |= d <= ob.radius + m.link_radius
        elif ob.kind == BOX3D:
            d = _dist_segments_box(a, b, ob.center, ob.half_extents)
            hit |= d <= m.link_radius
    return hit.reshape(Q.shape[0], m.n_links).any(axis=1)


def config_in_collision(m: RobotModel, q: np.ndarray, w: Workspace) -> bool:
    """True iff any link capsule intersects any obstacle (boundary inclusive)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (m.dof,):
        raise ValueError(f"configuration must have dimension {m.dof}")
    return bool(configs_in_collision(m, q[None, :], w)[0])


def interpolate_edge(m: RobotModel, q1: np.ndarray, q2: np.ndarray, step: float) -> np.ndarray:
    """Sample the per-joint shortest-arc geodesic from q1 to q2.

    Spacing is at most `step` in the max-norm; endpoints are included.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    q1 = np.asarray(q1, dtype=float)
    d = wrap_diff(m, q1, q2)
    span = float(np.max(np.abs(d))) if d.size else 0.0
    n = max(1, int(math.ceil(span / step)))
    t = np.linspace(0.0, 1.0, n + 1)
    return wrap_config(m, q1 + t[:, None] * d)


def edge_in_collision(
    m: RobotModel,
    q1: np.ndarray,
    q2: np.ndarray,
    w: Workspace,
    step: float,
    check: Callable[[np.ndarray], bool] | None = None,
) -> bool:
    """True iff any sample along the q1-q2 geodesic collides.

    With `check` supplied (e.g. a counting checker) samples are tested one
    by one with short-circuiting; otherwise the whole batch is tested at
    once. Both paths examine identical sample sets.
    """
    samples = interpolate_edge(m, q1, q2, step)
    if check is None:
        return bool(np.any(configs_in_collision(m, samples, w)))
    return any(check(q) for q in samples)


class CollisionChecker:
    """Counts every configuration collision test issued through it."""

    def __init__(self, model: RobotModel, workspace: Workspace):
        self.model = model
        self.workspace = workspace
        self.checks = 0

    def config_in_collision(self, q: np.ndarray) -> bool:
        self.checks += 1
        return config_in_collision(self.model, q, self.workspace)

    def edge_in_collision(self, q1: np.ndarray, q2: np.ndarray, step: float) -> bool:
        return edge_in_collision(
            self.model, q1, q2, self.workspace, step, check=self.config_in_collision
        )
