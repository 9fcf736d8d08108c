"""Cost-to-go hypernetwork motion-planning workbench.

A weight-generating network maps workspace point clouds to the parameters
of a continuous cost-to-go network over a manipulator's configuration
space. Classical oracles (grid Dijkstra, PRM) provide supervision; A*,
RRT, and shortcut smoothing serve as benchmark baselines.
"""

from .baselines import RrtParams, Trajectory, astar, rrt_plan, shortcut_smooth
from .c2gnet import (
    C2GLayout,
    C2GParams,
    c2g_eval,
    c2g_eval_batch,
    c2g_input_gradient,
    layout_for_robot,
    load_c2g_params,
    param_count,
    save_c2g_params,
)
from .hof import (
    AdamState,
    HofLayout,
    HofParams,
    TrainConfig,
    adam_step,
    hof_forward,
    hof_loss,
    init_hof_params,
    load_checkpoint,
    loss_and_gradients,
    save_checkpoint,
    train,
)
from .oracle import (
    CostTuple,
    GridCostField,
    GridMap,
    Roadmap,
    RoadmapCostField,
    Shard,
    TupleSet,
    build_grid_map,
    build_prm,
    dijkstra_cost_field,
    dijkstra_cost_fields,
    emit_tuples,
    load_shard,
    roadmap_cost_field,
    save_shard,
)
from .planner import PlanOptions, ValidationReport, plan_gradient_descent, validate_trajectory
from .robot import (
    CollisionChecker,
    Joint,
    RobotModel,
    config_distance,
    config_in_collision,
    edge_in_collision,
    forward_kinematics,
    planar_arm,
    yaw_pitch_arm,
)
from .workspace import (
    Obstacle,
    PointCloud,
    Workspace,
    WorkspaceSpec,
    generate_random_workspace,
    load_point_cloud,
    point_in_obstacle,
    sample_point_cloud,
    save_point_cloud,
)

__version__ = "0.1.0"
