"""Weight-generating network and its training loop.

A shared per-point MLP with max pooling encodes the workspace point cloud;
a dense head emits the flat parameter vector of the cost-to-go network.
The whole stack is trained end-to-end with hand-derived reverse-mode
gradients and Adam against oracle cost tuples.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO

import numpy as np
from scipy.special import expit

from .c2gnet import (
    C2GLayout,
    C2GParams,
    _child_backward,
    _child_forward,
    _pair_inputs,
    inv_softplus,
    layout_for_robot,
)
from .oracle import Shard, TupleSet
from .robot import RobotModel
from .serialize import (
    HOF_PARAMS_MAGIC,
    expect_magic,
    read_f64_array,
    read_json_block,
    read_u32,
    write_f64_array,
    write_json_block,
    write_magic,
    write_u32,
)
from .workspace import PointCloud

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HofLayout:
    """Encoder and head widths around a child cost-to-go layout."""

    child: C2GLayout
    point_dim: int
    encoder_widths: tuple[int, ...] = (64, 128, 256)
    head_hidden: int = 512

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        prev = self.point_dim
        for i, width in enumerate(self.encoder_widths):
            shapes.append((f"enc_w{i}", (width, prev)))
            shapes.append((f"enc_b{i}", (width,)))
            prev = width
        shapes.append(("head_w1", (self.head_hidden, prev)))
        shapes.append(("head_b1", (self.head_hidden,)))
        shapes.append(("head_w2", (self.child.total_params, self.head_hidden)))
        shapes.append(("head_b2", (self.child.total_params,)))
        return shapes

    def segment_slices(self) -> dict[str, tuple[slice, tuple[int, ...]]]:
        out = {}
        pos = 0
        for name, shape in self.layer_shapes():
            size = int(np.prod(shape))
            out[name] = (slice(pos, pos + size), shape)
            pos += size
        return out

    @property
    def total_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.layer_shapes())

    def to_json(self) -> dict:
        return {
            "child": self.child.to_json(),
            "point_dim": self.point_dim,
            "encoder_widths": list(self.encoder_widths),
            "head_hidden": self.head_hidden,
        }

    @staticmethod
    def from_json(obj: dict) -> "HofLayout":
        return HofLayout(
            child=C2GLayout.from_json(obj["child"]),
            point_dim=int(obj["point_dim"]),
            encoder_widths=tuple(obj["encoder_widths"]),
            head_hidden=int(obj["head_hidden"]),
        )


@dataclass
class HofParams:
    """Flat parameter vector of the weight-generating network."""

    layout: HofLayout
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if self.theta.shape[0] != self.layout.total_params:
            raise ValueError("theta length does not match layout")

    def views(self) -> dict[str, np.ndarray]:
        return {
            name: self.theta[sl].reshape(shape)
            for name, (sl, shape) in self.layout.segment_slices().items()
        }


def _template_child_theta(child: C2GLayout, rng: np.random.Generator, mid_cost: float) -> np.ndarray:
    """A sensible child parameter vector for the head's output bias.

    Centers are embeddings of random configuration pairs (on the input
    manifold), bandwidth pre-activations give beta = 1, dense layers get
    fan-in init, and the output bias lands softplus at mid-range cost.
    """
    lo = np.asarray(child.lo)
    hi = np.asarray(child.hi)
    per = np.asarray(child.periodic)
    slo = np.where(per, -np.pi, lo)
    shi = np.where(per, np.pi, hi)
    b, h1, h2 = child.n_basis, child.hidden[0], child.hidden[1]
    q1 = slo + (shi - slo) * rng.random((b, child.dof))
    q2 = slo + (shi - slo) * rng.random((b, child.dof))
    centers = _pair_inputs(child, q1, q2)
    bandwidths = np.full(b, inv_softplus(1.0))

    def fan_in(shape):
        bound = 1.0 / np.sqrt(shape[-1])
        return rng.uniform(-bound, bound, size=shape)

    w1 = fan_in((h1, b))
    b1 = np.zeros(h1)
    w2 = fan_in((h2, h1))
    b2 = np.zeros(h2)
    w3 = fan_in((h2,))
    b3 = np.array([inv_softplus(mid_cost)])
    return np.concatenate(
        [centers.ravel(), bandwidths, w1.ravel(), b1, w2.ravel(), b2, w3, b3]
    )


def init_hof_params(
    layout: HofLayout,
    seed: int,
    head_out_scale: float = 0.01,
    mid_cost: float = 0.35,
) -> HofParams:
    """Fan-in initialization; the head output stays near a shared child template.

    The small head_out_scale keeps emitted children close to the template at
    the start of training, which avoids degenerate generated networks.
    """
    rng = np.random.default_rng(seed)
    theta = np.empty(layout.total_params)
    params = HofParams(layout, theta)
    v = params.views()
    prev = layout.point_dim
    for i, width in enumerate(layout.encoder_widths):
        bound = 1.0 / np.sqrt(prev)
        v[f"enc_w{i}"][...] = rng.uniform(-bound, bound, size=(width, prev))
        v[f"enc_b{i}"][...] = rng.uniform(-bound, bound, size=width)
        prev = width
    bound = 1.0 / np.sqrt(prev)
    v["head_w1"][...] = rng.uniform(-bound, bound, size=v["head_w1"].shape)
    v["head_b1"][...] = rng.uniform(-bound, bound, size=v["head_b1"].shape)
    bound = head_out_scale / np.sqrt(layout.head_hidden)
    v["head_w2"][...] = rng.uniform(-bound, bound, size=v["head_w2"].shape)
    v["head_b2"][...] = _template_child_theta(layout.child, rng, mid_cost)
    return params


def _as_points(pc) -> np.ndarray:
    if isinstance(pc, PointCloud):
        if pc.n == 0 and not pc.sentinel:
            raise ValueError("empty point cloud without sentinel marker")
        return pc.points
    pts = np.asarray(pc, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("point cloud must be a non-empty (N, dim) array")
    return pts


def _hof_forward_cached(h: HofParams, pts: np.ndarray) -> tuple[np.ndarray, dict]:
    v = h.views()
    acts = [pts]
    pre = []
    a = pts
    for i in range(len(h.layout.encoder_widths)):
        z = a @ v[f"enc_w{i}"].T + v[f"enc_b{i}"]
        pre.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    pooled = a.max(axis=0)
    argmax = a.argmax(axis=0)
    zh = v["head_w1"] @ pooled + v["head_b1"]
    hh = np.maximum(zh, 0.0)
    theta = v["head_w2"] @ hh + v["head_b2"]
    cache = {"v": v, "acts": acts, "pre": pre, "pooled": pooled, "argmax": argmax,
             "zh": zh, "hh": hh}
    return theta, cache


def hof_forward(h: HofParams, pc) -> C2GParams:
    """Emit the cost-to-go network for a workspace point cloud.

    Permutation-invariant and duplication-invariant in the points via the
    coordinate-wise max pool.
    """
    pts = _as_points(pc)
    if pts.shape[1] != h.layout.point_dim:
        raise ValueError(f"point cloud dim {pts.shape[1]} != {h.layout.point_dim}")
    theta, _ = _hof_forward_cached(h, pts)
    return C2GParams(h.layout.child, theta)


def _hof_backward(h: HofParams, cache: dict, dtheta: np.ndarray) -> np.ndarray:
    v = cache["v"]
    flat = np.empty(h.layout.total_params)
    slices = h.layout.segment_slices()

    def out(name: str) -> np.ndarray:
        sl, shape = slices[name]
        return flat[sl].reshape(shape)

    # Outer products land directly in the flat gradient; they dominate cost.
    np.multiply(dtheta[:, None], cache["hh"][None, :], out=out("head_w2"))
    out("head_b2")[...] = dtheta
    dhh = v["head_w2"].T @ dtheta
    dzh = dhh * (cache["zh"] > 0)
    np.multiply(dzh[:, None], cache["pooled"][None, :], out=out("head_w1"))
    out("head_b1")[...] = dzh
    dpooled = v["head_w1"].T @ dzh
    a_last = cache["acts"][-1]
    dA = np.zeros_like(a_last)
    dA[cache["argmax"], np.arange(a_last.shape[1])] = dpooled
    for i in reversed(range(len(h.layout.encoder_widths))):
        dZ = dA * (cache["pre"][i] > 0)
        np.matmul(dZ.T, cache["acts"][i], out=out(f"enc_w{i}"))
        out(f"enc_b{i}")[...] = dZ.sum(axis=0)
        if i > 0:
            dA = dZ @ v[f"enc_w{i}"]
    return flat


def hof_loss(h: HofParams, pc, tuples: TupleSet, target_scale: float = 1.0) -> float:
    """MSE between emitted-network predictions and scaled oracle costs."""
    pts = _as_points(pc)
    theta, _ = _hof_forward_cached(h, pts)
    X = _pair_inputs(h.layout.child, tuples.q1, tuples.q2)
    y, _ = _child_forward(C2GParams(h.layout.child, theta).views(), X)
    resid = y - tuples.c / target_scale
    return float(np.mean(resid**2))


def loss_and_gradients(
    h: HofParams, pc, tuples: TupleSet, target_scale: float = 1.0
) -> tuple[float, np.ndarray]:
    """Loss plus the exact reverse-mode gradient through both networks."""
    if len(tuples) == 0:
        raise ValueError("tuples must be non-empty")
    pts = _as_points(pc)
    theta, cache = _hof_forward_cached(h, pts)
    child = C2GParams(h.layout.child, theta)
    X = _pair_inputs(h.layout.child, tuples.q1, tuples.q2)
    y, child_cache = _child_forward(child.views(), X)
    resid = y - tuples.c / target_scale
    loss = float(np.mean(resid**2))
    dy = 2.0 * resid / len(tuples)
    dtheta, _ = _child_backward(child_cache, dy, want_params=True, want_inputs=False)
    grad = _hof_backward(h, cache, dtheta)
    return loss, grad


# --- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    _scratch: np.ndarray | None = field(default=None, repr=False, compare=False)

    @staticmethod
    def zeros(n: int) -> "AdamState":
        return AdamState(m=np.zeros(n), v=np.zeros(n), t=0)

    def scratch(self) -> np.ndarray:
        if self._scratch is None or self._scratch.shape != self.m.shape:
            self._scratch = np.empty_like(self.m)
        return self._scratch


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults are the desk-scale settings."""

    learning_rate: float = 3e-4
    epochs: int = 500
    tuples_per_iteration: int = 2000
    pointcloud_subsample: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    target_scale: float | None = None  # None: dof * pi
    n_basis: int = 64
    hidden: tuple[int, int] = (64, 64)
    encoder_widths: tuple[int, ...] = (64, 128, 256)
    head_hidden: int = 512
    embed: bool = True
    holdout_fraction: float = 0.05
    holdout_max_per_shard: int = 200
    batch_workspaces: int = 1
    checkpoint_every: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["hidden"] = list(self.hidden)
        out["encoder_widths"] = list(self.encoder_widths)
        return out


def adam_step(
    state: AdamState, params: np.ndarray, grad: np.ndarray, cfg: TrainConfig
) -> tuple[AdamState, np.ndarray]:
    """Standard Adam update with bias correction; mutates and returns both."""
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ValueError("parameter, gradient, and moment shapes must match")
    state.t += 1
    s = state.scratch()
    # m = b1*m + (1-b1)*g ; v = b2*v + (1-b2)*g*g, allocation-free
    state.m *= cfg.beta1
    np.multiply(grad, 1.0 - cfg.beta1, out=s)
    state.m += s
    state.v *= cfg.beta2
    np.multiply(grad, grad, out=s)
    s *= 1.0 - cfg.beta2
    state.v += s
    # params -= lr * (m / bc1) / (sqrt(v / bc2) + eps)
    np.divide(state.v, 1.0 - cfg.beta2**state.t, out=s)
    np.sqrt(s, out=s)
    s += cfg.eps
    np.divide(state.m, s, out=s)
    s *= cfg.learning_rate / (1.0 - cfg.beta1**state.t)
    params -= s
    return state, params


# --- training loop ------------------------------------------------------------

@dataclass
class TrainResult:
    params: HofParams
    log_rows: list[dict]
    target_scale: float
    checkpoint_paths: list[Path] = field(default_factory=list)


def _subsample_points(rng: np.random.Generator, pts: np.ndarray, n: int) -> np.ndarray:
    if pts.shape[0] <= n:
        return pts
    idx = rng.choice(pts.shape[0], size=n, replace=False)
    return pts[idx]


def train(
    shards: list[Shard],
    model: RobotModel,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Train the weight-generating network on oracle shards.

    One epoch visits every shard once in a seeded random order; each visit
    draws a fresh point subsample and tuple batch and applies one Adam
    step. Deterministic for a fixed seed in single-threaded execution.
    """
    if not shards:
        raise ValueError("dataset is empty")
    dofs = {s.dof for s in shards}
    if dofs != {model.dof}:
        raise ValueError(f"shard dof {sorted(dofs)} does not match model dof {model.dof}")

    child = layout_for_robot(model, cfg.n_basis, cfg.hidden, embed=cfg.embed)
    layout = HofLayout(
        child=child,
        point_dim=shards[0].cloud.dim,
        encoder_widths=cfg.encoder_widths,
        head_hidden=cfg.head_hidden,
    )
    target_scale = cfg.target_scale if cfg.target_scale else model.dof * np.pi
    rng = np.random.default_rng(cfg.seed)
    params = init_hof_params(layout, seed=int(rng.integers(2**32)))
    state = AdamState.zeros(layout.total_params)

    # Per-shard train/holdout split plus a fixed holdout batch and cloud.
    train_sets, holdout_sets, holdout_pts = [], [], []
    for s in shards:
        n = len(s.tuples)
        perm = rng.permutation(n)
        n_hold = min(int(cfg.holdout_fraction * n), cfg.holdout_max_per_shard)
        holdout_sets.append(s.tuples.take(perm[:n_hold]))
        train_sets.append(s.tuples.take(perm[n_hold:]))
        holdout_pts.append(_subsample_points(rng, s.cloud.points, cfg.pointcloud_subsample))

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_paths: list[Path] = []
    log_rows: list[dict] = []
    t0 = time.perf_counter()
    n_shards = len(shards)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_shards)
        losses = []
        for group_start in range(0, n_shards, cfg.batch_workspaces):
            group = order[group_start : group_start + cfg.batch_workspaces]
            grad_sum = np.zeros(layout.total_params)
            loss_sum = 0.0
            for si in group:
                s = shards[si]
                pts = _subsample_points(rng, s.cloud.points, cfg.pointcloud_subsample)
                tset = train_sets[si]
                idx = rng.integers(0, len(tset), size=cfg.tuples_per_iteration)
                loss, grad = loss_and_gradients(params, pts, tset.take(idx), target_scale)
                grad_sum += grad
                loss_sum += loss
            state, params.theta = adam_step(
                state, params.theta, grad_sum / len(group), cfg
            )
            losses.append(loss_sum / len(group))
        holdout = float(
            np.mean(
                [
                    hof_loss(params, holdout_pts[i], holdout_sets[i], target_scale)
                    for i in range(n_shards)
                    if len(holdout_sets[i])
                ]
            )
        )
        row = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "holdout_loss": holdout,
            "wall_s": time.perf_counter() - t0,
        }
        log_rows.append(row)
        if log_every and epoch % log_every == 0:
            log.info(
                "epoch %d loss %.6f holdout %.6f", epoch, row["loss"], row["holdout_loss"]
            )
        if out_dir is not None and cfg.checkpoint_every and (
            (epoch + 1) % cfg.checkpoint_every == 0 and epoch + 1 < cfg.epochs
        ):
            path = out_dir / f"checkpoint_ep{epoch + 1}.hofw"
            save_checkpoint(params, target_scale, path)
            checkpoint_paths.append(path)
    if out_dir is not None:
        path = out_dir / "checkpoint_final.hofw"
        save_checkpoint(params, target_scale, path)
        checkpoint_paths.append(path)
    return TrainResult(
        params=params,
        log_rows=log_rows,
        target_scale=target_scale,
        checkpoint_paths=checkpoint_paths,
    )


def write_log_csv(log_rows: list[dict], path: str | Path) -> None:
    lines = ["epoch,loss,holdout_loss,wall_s"]
    for r in log_rows:
        lines.append(
            f"{r['epoch']},{r['loss']!r},{r['holdout_loss']!r},{r['wall_s']:.3f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


# --- checkpoint IO --------------------------------------------------------------

def write_checkpoint(params: HofParams, target_scale: float, f: BinaryIO) -> None:
    write_magic(f, HOF_PARAMS_MAGIC)
    write_u32(f, CHECKPOINT_VERSION)
    write_json_block(
        f, {"layout": params.layout.to_json(), "target_scale": target_scale}
    )
    write_f64_array(f, params.theta)


def save_checkpoint(params: HofParams, target_scale: float, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_checkpoint(params, target_scale, f)


def read_checkpoint(f: BinaryIO) -> tuple[HofParams, float]:
    expect_magic(f, HOF_PARAMS_MAGIC)
    read_u32(f)  # version, currently always 1
    info = read_json_block(f)
    layout = HofLayout.from_json(info["layout"])
    theta = read_f64_array(f, layout.total_params)
    return HofParams(layout, theta), float(info["target_scale"])


def load_checkpoint(path: str | Path) -> tuple[HofParams, float]:
    with open(path, "rb") as f:
        return read_checkpoint(f)
