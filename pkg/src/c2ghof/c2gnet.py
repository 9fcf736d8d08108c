"""Continuous cost-to-go network over configuration pairs.

A radial-basis-function network: isotropic exponential kernels around
learned centers, two ReLU dense layers, and a softplus output head that
keeps costs nonnegative. Evaluation and all gradients (with respect to
inputs and to the flat parameter vector) are hand-derived numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np
from scipy.special import expit

from .robot import RobotModel, wrap_to_pi
from .serialize import (
    C2G_PARAMS_MAGIC,
    expect_magic,
    read_f64_array,
    read_json_block,
    read_u32,
    write_f64_array,
    write_json_block,
    write_magic,
    write_u32,
)

PARAMS_VERSION = 1


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


@dataclass(frozen=True)
class C2GLayout:
    """Shapes and parameter layout of the cost-to-go network.

    With the angle embedding enabled each periodic joint contributes
    (cos, sin) and each limited joint one normalized value, per input
    configuration; raw mode feeds joint angles directly so a configuration
    contributes dof values.
    """

    dof: int
    n_basis: int
    hidden: tuple[int, int]
    periodic: tuple[bool, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    embed: bool = True

    def __post_init__(self):
        if self.dof < 1 or self.n_basis < 1 or min(self.hidden) < 1:
            raise ValueError("dof, n_basis, and hidden widths must be positive")
        if len(self.periodic) != self.dof:
            raise ValueError("periodic mask must have one entry per joint")

    @property
    def config_width(self) -> int:
        if not self.embed:
            return self.dof
        return int(sum(2 if p else 1 for p in self.periodic))

    @property
    def input_dim(self) -> int:
        return 2 * self.config_width

    @property
    def total_params(self) -> int:
        b, d = self.n_basis, self.input_dim
        h1, h2 = self.hidden
        return b * d + b + (b * h1 + h1) + (h1 * h2 + h2) + (h2 + 1)

    def segment_slices(self) -> dict[str, tuple[slice, tuple[int, ...]]]:
        b, d = self.n_basis, self.input_dim
        h1, h2 = self.hidden
        order = [
            ("centers", (b, d)),
            ("bandwidths", (b,)),
            ("w1", (h1, b)),
            ("b1", (h1,)),
            ("w2", (h2, h1)),
            ("b2", (h2,)),
            ("w3", (h2,)),
            ("b3", (1,)),
        ]
        out = {}
        pos = 0
        for name, shape in order:
            size = int(np.prod(shape))
            out[name] = (slice(pos, pos + size), shape)
            pos += size
        assert pos == self.total_params
        return out

    def to_json(self) -> dict:
        return {
            "dof": self.dof,
            "n_basis": self.n_basis,
            "hidden": list(self.hidden),
            "periodic": list(self.periodic),
            "lo": list(self.lo),
            "hi": list(self.hi),
            "embed": self.embed,
        }

    @staticmethod
    def from_json(obj: dict) -> "C2GLayout":
        return C2GLayout(
            dof=int(obj["dof"]),
            n_basis=int(obj["n_basis"]),
            hidden=tuple(obj["hidden"]),
            periodic=tuple(bool(p) for p in obj["periodic"]),
            lo=tuple(float(x) for x in obj["lo"]),
            hi=tuple(float(x) for x in obj["hi"]),
            embed=bool(obj["embed"]),
        )


def layout_for_robot(
    m: RobotModel, n_basis: int = 64, hidden: tuple[int, int] = (64, 64), embed: bool = True
) -> C2GLayout:
    return C2GLayout(
        dof=m.dof,
        n_basis=n_basis,
        hidden=hidden,
        periodic=tuple(bool(p) for p in m.periodic_mask),
        lo=tuple(m.joint_lo),
        hi=tuple(m.joint_hi),
        embed=embed,
    )


def param_count(dof: int, n_basis: int, hidden: tuple[int, int], input_dim: int | None = None) -> int:
    """Parameter count of the layout; defaults to the raw pair width 2*dof."""
    if input_dim is None:
        input_dim = 2 * dof
    h1, h2 = hidden
    b = n_basis
    return b * input_dim + b + (b * h1 + h1) + (h1 * h2 + h2) + (h2 + 1)


@dataclass
class C2GParams:
    """Flat parameter vector plus its layout."""

    layout: C2GLayout
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if self.theta.shape[0] != self.layout.total_params:
            raise ValueError(
                f"theta has {self.theta.shape[0]} entries, layout wants "
                f"{self.layout.total_params}"
            )

    def views(self) -> dict[str, np.ndarray]:
        return {
            name: self.theta[sl].reshape(shape)
            for name, (sl, shape) in self.layout.segment_slices().items()
        }


def embed_configs(layout: C2GLayout, Q: np.ndarray) -> np.ndarray:
    """Map configurations (M, dof) to network inputs (M, config_width)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if not layout.embed:
        return Q
    cols = []
    for j in range(layout.dof):
        if layout.periodic[j]:
            a = wrap_to_pi(Q[:, j])
            cols.append(np.cos(a))
            cols.append(np.sin(a))
        else:
            lo, hi = layout.lo[j], layout.hi[j]
            cols.append(2.0 * (Q[:, j] - lo) / (hi - lo) - 1.0)
    return np.stack(cols, axis=1)


def _embed_backward(layout: C2GLayout, Q: np.ndarray, dE: np.ndarray) -> np.ndarray:
    """Chain embedding gradients back to joint angles."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if not layout.embed:
        return dE
    dQ = np.zeros_like(Q)
    col = 0
    for j in range(layout.dof):
        if layout.periodic[j]:
            a = wrap_to_pi(Q[:, j])
            dQ[:, j] = -np.sin(a) * dE[:, col] + np.cos(a) * dE[:, col + 1]
            col += 2
        else:
            dQ[:, j] = dE[:, col] * 2.0 / (layout.hi[j] - layout.lo[j])
            col += 1
    return dQ


def _pair_inputs(layout: C2GLayout, Q1: np.ndarray, Q2: np.ndarray) -> np.ndarray:
    return np.concatenate([embed_configs(layout, Q1), embed_configs(layout, Q2)], axis=1)


def _child_forward(v: dict[str, np.ndarray], X: np.ndarray) -> tuple[np.ndarray, dict]:
    """Forward pass over a batch of pair inputs X (M, input_dim)."""
    diff = X[:, None, :] - v["centers"][None, :, :]  # (M, B, D)
    r2 = np.einsum("mbd,mbd->mb", diff, diff)
    beta = softplus(v["bandwidths"])
    phi = np.exp(-beta[None, :] * r2)
    a1 = phi @ v["w1"].T + v["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ v["w2"].T + v["b2"]
    h2 = np.maximum(a2, 0.0)
    z = h2 @ v["w3"] + v["b3"][0]
    y = softplus(z)
    cache = {
        "X": X, "diff": diff, "r2": r2, "beta": beta, "phi": phi,
        "a1": a1, "h1": h1, "a2": a2, "h2": h2, "z": z, "v": v,
    }
    return y, cache


def _child_backward(
    cache: dict, dy: np.ndarray, want_params: bool, want_inputs: bool
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Reverse pass; dy has shape (M,). relu'(0) = 0, softplus' = logistic."""
    v = cache["v"]
    dz = dy * expit(cache["z"])
    dh2 = dz[:, None] * v["w3"][None, :]
    da2 = dh2 * (cache["a2"] > 0)
    dh1 = da2 @ v["w2"]
    da1 = dh1 * (cache["a1"] > 0)
    dphi = da1 @ v["w1"]
    common = dphi * cache["phi"]  # (M, B)
    cb = common * cache["beta"][None, :]

    dtheta = None
    if want_params:
        dcenters = 2.0 * np.einsum("mb,mbd->bd", cb, cache["diff"])
        draw = -np.sum(common * cache["r2"], axis=0) * expit(v["bandwidths"])
        dw1 = da1.T @ cache["phi"]
        db1 = da1.sum(axis=0)
        dw2 = da2.T @ cache["h1"]
        db2 = da2.sum(axis=0)
        dw3 = cache["h2"].T @ dz
        db3 = np.array([dz.sum()])
        dtheta = np.concatenate(
            [dcenters.ravel(), draw, dw1.ravel(), db1, dw2.ravel(), db2, dw3, db3]
        )
    dX = None
    if want_inputs:
        dX = -2.0 * np.einsum("mb,mbd->md", cb, cache["diff"])
    return dtheta, dX


def c2g_eval_batch(p: C2GParams, Q1: np.ndarray, Q2: np.ndarray) -> np.ndarray:
    """Nonnegative cost-to-go for each configuration pair."""
    X = _pair_inputs(p.layout, Q1, Q2)
    y, _ = _child_forward(p.views(), X)
    return y


def c2g_eval(p: C2GParams, q1: np.ndarray, q2: np.ndarray) -> float:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q1.shape != (p.layout.dof,) or q2.shape != (p.layout.dof,):
        raise ValueError(f"configurations must have dimension {p.layout.dof}")
    return float(c2g_eval_batch(p, q1[None, :], q2[None, :])[0])


def c2g_input_gradient(
    p: C2GParams, q1: np.ndarray, q2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of c2g_eval with respect to both configurations."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q1.shape != (p.layout.dof,) or q2.shape != (p.layout.dof,):
        raise ValueError(f"configurations must have dimension {p.layout.dof}")
    X = _pair_inputs(p.layout, q1[None, :], q2[None, :])
    _, cache = _child_forward(p.views(), X)
    _, dX = _child_backward(cache, np.ones(1), want_params=False, want_inputs=True)
    w = p.layout.config_width
    g1 = _embed_backward(p.layout, q1[None, :], dX[:, :w])[0]
    g2 = _embed_backward(p.layout, q2[None, :], dX[:, w:])[0]
    return g1, g2


def save_c2g_params(p: C2GParams, path: str | Path) -> None:
    with open(path, "wb") as f:
        write_c2g_params(p, f)


def write_c2g_params(p: C2GParams, f: BinaryIO) -> None:
    write_magic(f, C2G_PARAMS_MAGIC)
    write_u32(f, PARAMS_VERSION)
    write_json_block(f, p.layout.to_json())
    write_f64_array(f, p.theta)


def load_c2g_params(path: str | Path) -> C2GParams:
    with open(path, "rb") as f:
        return read_c2g_params(f)


def read_c2g_params(f: BinaryIO) -> C2GParams:
    expect_magic(f, C2G_PARAMS_MAGIC)
    read_u32(f)  # version, currently always 1
    layout = C2GLayout.from_json(read_json_block(f))
    theta = read_f64_array(f, layout.total_params)
    return C2GParams(layout=layout, theta=theta)
