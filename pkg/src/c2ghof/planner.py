"""Trajectory generation by gradient descent on the learned cost field.

Descent performs zero collision checks; feasibility is established
afterwards by validate_trajectory. Stalls trigger seeded random
perturbations with a bounded restart budget, so the planner always
terminates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .baselines import Trajectory, make_trajectory
from .c2gnet import C2GParams, c2g_input_gradient
from .robot import CollisionChecker, RobotModel, clamp_config, config_distance, wrap_config
from .workspace import Workspace

PLANNER_TAG = "c2g-hof"


@dataclass
class PlanOptions:
    # stall_threshold must exceed step_size: an iterate oscillating across a
    # basin bottom still nets ~step_size of displacement per window, so a
    # smaller threshold would never fire.
    step_size: float = 0.05
    max_steps: int = 2000
    goal_tolerance: float = 0.1
    stall_window: int = 25
    stall_threshold: float = 0.15
    perturb_scale: float = 0.2
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        vals = [
            self.step_size, self.max_steps, self.goal_tolerance,
            self.stall_window, self.stall_threshold, self.perturb_scale,
        ]
        if any(v <= 0 for v in vals) or self.restarts < 0:
            raise ValueError("plan options must be positive")
        if not self.goal_tolerance < self.step_size * self.max_steps:
            raise ValueError("goal_tolerance must be reachable within the step budget")


@dataclass
class ValidationReport:
    collision_free: bool
    checks_used: int
    first_violation: int | None = None

    def __post_init__(self):
        if self.collision_free != (self.first_violation is None):
            raise ValueError("collision_free must match the absence of a violation")


class _Topology:
    """Joint topology extracted from a network layout.

    Duck-types the slice of RobotModel that the wrap/clamp/distance
    arithmetic reads; descent never needs link geometry.
    """

    def __init__(self, p: C2GParams):
        self.dof = p.layout.dof
        self.periodic_mask = np.asarray(p.layout.periodic, dtype=bool)
        self.joint_lo = np.asarray(p.layout.lo, dtype=float)
        self.joint_hi = np.asarray(p.layout.hi, dtype=float)


def plan_gradient_descent(
    p: C2GParams,
    start: np.ndarray,
    goal: np.ndarray,
    opts: PlanOptions | None = None,
    topology: RobotModel | None = None,
) -> Trajectory:
    """Follow the negative cost gradient from start with the goal held fixed.

    Steps are unit-normalized and of fixed size; periodic joints wrap each
    step. Stalls (small net displacement over stall_window steps) trigger a
    seeded perturbation and reset the per-attempt step budget, at most
    `restarts` times. No collision checks happen here.
    """
    opts = opts or PlanOptions()
    m = topology or _Topology(p)
    t0 = time.perf_counter()
    rng = np.random.default_rng(opts.seed)
    q = wrap_config(m, np.asarray(start, dtype=float))
    goal = wrap_config(m, np.asarray(goal, dtype=float))
    waypoints = [q.copy()]
    perturbations_used = 0
    attempt_steps = 0
    descent_steps = 0
    history: list[np.ndarray] = [q.copy()]
    status = "running"

    while True:
        if config_distance(m, q, goal) <= opts.goal_tolerance:
            waypoints.append(goal.copy())
            status = "success"
            break
        if attempt_steps >= opts.max_steps:
            status = "max_steps"
            break
        g1, _ = c2g_input_gradient(p, q, goal)
        if not np.all(np.isfinite(g1)):
            status = "non_finite_gradient"
            break
        norm = float(np.linalg.norm(g1))
        step = np.zeros_like(q) if norm < 1e-12 else -(opts.step_size / norm) * g1
        q = clamp_config(m, q + step)
        waypoints.append(q.copy())
        history.append(q.copy())
        attempt_steps += 1
        descent_steps += 1
        if len(history) > opts.stall_window:
            moved = config_distance(m, q, history[-opts.stall_window - 1])
            if moved < opts.stall_threshold:
                if perturbations_used >= opts.restarts:
                    status = "stalled"
                    break
                direction = rng.standard_normal(m.dof)
                direction /= max(np.linalg.norm(direction), 1e-12)
                q = clamp_config(m, q + opts.perturb_scale * direction)
                waypoints.append(q.copy())
                history = [q.copy()]
                perturbations_used += 1
                attempt_steps = 0

    traj = make_trajectory(
        m, np.asarray(waypoints), PLANNER_TAG,
        success=status == "success",
        planning_time_s=time.perf_counter() - t0,
        collision_checks=0,
        extras={
            "descent_steps": descent_steps,
            "perturbations_used": perturbations_used,
            "status": status,
            "validated": None,
        },
    )
    return traj


def validate_trajectory(
    t: Trajectory,
    m: RobotModel,
    w: Workspace,
    step: float,
    checker: CollisionChecker | None = None,
) -> ValidationReport:
    """Edge-check consecutive waypoints, short-circuiting at the first hit.

    checks_used is the exact number of configuration collision tests spent.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    checker = checker or CollisionChecker(m, w)
    before = checker.checks
    wps = t.waypoints
    if wps.shape[0] == 1:
        bad = checker.config_in_collision(wps[0])
        return ValidationReport(
            collision_free=not bad,
            checks_used=checker.checks - before,
            first_violation=0 if bad else None,
        )
    for i in range(wps.shape[0] - 1):
        if checker.edge_in_collision(wps[i], wps[i + 1], step):
            return ValidationReport(
                collision_free=False,
                checks_used=checker.checks - before,
                first_violation=i,
            )
    return ValidationReport(collision_free=True, checks_used=checker.checks - before)
