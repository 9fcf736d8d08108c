import numpy as np
import pytest

from c2ghof import Obstacle, Workspace, WorkspaceSpec, planar_arm


@pytest.fixture
def arm2():
    return planar_arm([0.5, 0.5], link_radius=0.02)


@pytest.fixture
def desk_spec():
    return WorkspaceSpec(
        dim=2,
        bounds=[[-1.1, -1.1], [1.1, 1.1]],
        n_obstacles=(3, 6),
        size_range=(0.05, 0.15),
        base_clearance=0.55,
    )


@pytest.fixture
def empty_workspace():
    return Workspace(dim=2, bounds=np.array([[-1.1, -1.1], [1.1, 1.1]]))


@pytest.fixture
def one_disk_workspace():
    return Workspace(
        dim=2,
        bounds=np.array([[-1.1, -1.1], [1.1, 1.1]]),
        obstacles=[Obstacle("disk2d", np.array([0.7, 0.0]), radius=0.12)],
    )
