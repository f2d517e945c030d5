import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from armstack import quat
from armstack.kinematics import Joint, KinematicChain, Pose


def random_chain(rng: np.random.Generator, n: int = 7) -> KinematicChain:
    """Random revolute chain with unit axes and nonzero link offsets."""
    joints = []
    for _ in range(n):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        offset = Pose(rng.uniform(-0.2, 0.2, size=3), quat.random_unit(rng))
        joints.append(Joint(axis=axis, offset=offset))
    tool = Pose(rng.uniform(-0.1, 0.1, size=3), quat.random_unit(rng))
    return KinematicChain(joints=tuple(joints), tool_offset=tool)


def planar_chain(link_lengths=(1.0, 1.0)) -> KinematicChain:
    """Planar arm in the xy-plane: all joints about z, links along x."""
    joints = [Joint(axis=(0.0, 0.0, 1.0), offset=Pose.identity())]
    for length in link_lengths[:-1]:
        joints.append(
            Joint(axis=(0.0, 0.0, 1.0), offset=Pose((length, 0.0, 0.0)))
        )
    return KinematicChain(
        joints=tuple(joints), tool_offset=Pose((link_lengths[-1], 0.0, 0.0))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def default_chain():
    from armstack.config import default_chain as _default_chain

    return _default_chain()


@pytest.fixture(scope="session")
def mission_env():
    from armstack.config import default_chain, default_mission_params, default_world

    return default_chain(), default_world(), default_mission_params()


def run_default_mission(mission_env, action, sub_action="none", **kwargs):
    from armstack.mission import Command, compile_mission, run_mission
    from armstack.world import SimConfig, initial_world, perceive

    chain, layout, params = mission_env
    world = initial_world(layout)
    perception = perceive(world, SimConfig())
    script = compile_mission(Command("water", action, sub_action), world, perception, params)
    return script, run_mission(script, world, chain, params, **kwargs)


@pytest.fixture(scope="session")
def move_run(mission_env):
    return run_default_mission(mission_env, "move", "right")


@pytest.fixture(scope="session")
def drink_run(mission_env):
    return run_default_mission(mission_env, "drink")
