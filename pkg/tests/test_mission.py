import math
import queue
from dataclasses import replace

import numpy as np
import pytest

from armstack.config import default_mission_params
from armstack.errors import UnknownObjectError
from armstack.kinematics import Pose
from armstack.mission import (
    GOAL_TASK_ID,
    JOINT2_TASK_ID,
    JOINT4_TASK_ID,
    OBSTACLE_TASK_ID,
    Command,
    MissionStatus,
    compile_mission,
    run_mission,
    try_pause,
    try_resume,
)
from armstack.world import SimConfig, initial_world, perceive
from conftest import run_default_mission


def fresh_world_and_perception(mission_env):
    _, layout, _ = mission_env
    world = initial_world(layout)
    return world, perceive(world, SimConfig())


class TestCompileMission:
    def test_move_stack_matches_experiment_hierarchy(self, mission_env):
        world, perception = fresh_world_and_perception(mission_env)
        script = compile_mission(Command("water", "move", "right"), world, perception, mission_env[2])
        ids = [t.id for t in script.hierarchy.tasks]
        assert ids == [JOINT4_TASK_ID, OBSTACLE_TASK_ID, GOAL_TASK_ID]
        joint4 = script.hierarchy.tasks[0]
        assert joint4.bounds.lower == pytest.approx(0.7)
        assert joint4.bounds.upper == pytest.approx(5.5)
        obstacle = script.hierarchy.tasks[1]
        assert obstacle.bounds.lower == pytest.approx(0.25)
        assert obstacle.bounds.upper == math.inf
        assert script.obstacle_id == "coke"

    def test_drink_stack_inserts_joint2_at_second_priority(self, mission_env):
        world, perception = fresh_world_and_perception(mission_env)
        script = compile_mission(Command("water", "drink"), world, perception, mission_env[2])
        ids = [t.id for t in script.hierarchy.tasks]
        assert ids == [JOINT4_TASK_ID, JOINT2_TASK_ID, OBSTACLE_TASK_ID, GOAL_TASK_ID]
        joint2 = script.hierarchy.tasks[1]
        assert joint2.bounds.lower == pytest.approx(1.9)
        assert joint2.bounds.upper == pytest.approx(5.1)
        assert joint2.params["joint_index"] == 1
        # carrying phases control the bottle top
        frames = {p.frame for p in script.phases}
        assert frames == {"tool", "bottle_top"}
        top_goal = script.hierarchy_for("bottle_top").tasks[-1]
        assert top_goal.params["frame"] == "bottle_top"

    def test_selecting_coke_makes_water_the_obstacle(self, mission_env):
        world, perception = fresh_world_and_perception(mission_env)
        script = compile_mission(Command("coke", "move", "left"), world, perception, mission_env[2])
        assert script.obstacle_id == "water"
        assert script.hierarchy.tasks[1].params["obstacle"] == "water"

    def test_unknown_object_rejected(self, mission_env):
        world, perception = fresh_world_and_perception(mission_env)
        with pytest.raises(UnknownObjectError):
            compile_mission(Command("juice", "move", "left"), world, perception, mission_env[2])

    def test_move_requires_side(self, mission_env):
        world, perception = fresh_world_and_perception(mission_env)
        with pytest.raises(ValueError):
            compile_mission(Command("water", "move"), world, perception, mission_env[2])


class TestMoveMission:
    def test_completes_with_all_bounds_respected(self, move_run):
        script, result = move_run
        assert result.status.state == "completed"
        for row in result.rows:
            assert 0.7 <= row.q[3] <= 5.5
            if OBSTACLE_TASK_ID in row.sigma:
                assert row.sigma[OBSTACLE_TASK_ID] >= 0.25
        assert result.final_position_error < 0.005
        assert result.final_orientation_error < 0.02

    def test_every_phase_converged(self, move_run):
        script, result = move_run
        assert len(result.phase_durations) == len(script.phases)

    def test_phase_index_is_monotone(self, move_run):
        _, result = move_run
        phases = [row.phase for row in result.rows]
        assert all(a <= b for a, b in zip(phases, phases[1:]))

    def test_feasible_set_never_empty(self, move_run):
        _, result = move_run
        assert all(row.feasible_count >= 1 for row in result.rows if row.n_candidates)

    def test_obstacle_task_genuinely_activates(self, move_run):
        script, result = move_run
        bit = script.hierarchy.set_based_bits[OBSTACLE_TASK_ID]
        assert any(row.active_mask & (1 << bit) for row in result.rows)


class TestDrinkMission:
    def test_completes_with_all_bounds_respected(self, drink_run):
        _, result = drink_run
        assert result.status.state == "completed"
        for row in result.rows:
            assert 0.7 <= row.q[3] <= 5.5
            assert 1.9 <= row.q[1] <= 5.1
            if OBSTACLE_TASK_ID in row.sigma:
                assert row.sigma[OBSTACLE_TASK_ID] >= 0.25

    def test_every_phase_converged_within_tolerance(self, drink_run):
        script, result = drink_run
        assert len(result.phase_durations) == len(script.phases)
        assert result.final_position_error < 0.005
        assert result.final_orientation_error < 0.02


class TestAntiChattering:
    @pytest.mark.parametrize("fixture", ["move_run", "drink_run"])
    def test_no_consecutive_tick_alternation(self, fixture, request):
        script, result = request.getfixturevalue(fixture)
        for task_id, bit in script.hierarchy.set_based_bits.items():
            states = [bool(row.active_mask & (1 << bit)) for row in result.rows if not row.paused]
            flips = [i for i in range(1, len(states)) if states[i] != states[i - 1]]
            assert all(b - a > 1 for a, b in zip(flips, flips[1:])), task_id
            activations = sum(
                1 for i in range(1, len(states)) if states[i] and not states[i - 1]
            )
            assert activations <= 4, task_id


class TestOperatorCommands:
    def test_emergency_stop_mid_transfer(self, mission_env):
        inbox = queue.SimpleQueue()
        stop_at_tick = 450  # mid-mission, during/after the grasp approach
        observed = []

        def observer(status, world, diag):
            observed.append(status.state)
            if len(observed) == stop_at_tick:
                inbox.put("stop")

        script, result = run_default_mission(
            mission_env, "move", "right", inbox=inbox, observer=observer
        )
        assert result.status.state == "stopped_emergency"
        last = result.rows[-1]
        assert last.tick == stop_at_tick  # zero velocity on the very next tick
        assert all(v == 0.0 for v in last.qdot)

    def test_pause_holds_velocity_and_phase_then_resumes(self, mission_env):
        inbox = queue.SimpleQueue()
        ticks = {"count": 0}

        def observer(status, world, diag):
            ticks["count"] += 1
            if ticks["count"] == 200:
                inbox.put("pause")
            if ticks["count"] == 700:
                inbox.put("resume")

        script, paused_result = run_default_mission(
            mission_env, "move", "right", inbox=inbox, observer=observer
        )
        assert paused_result.status.state == "completed"
        paused_rows = [r for r in paused_result.rows if r.paused]
        assert len(paused_rows) == 500  # 5 s hold at dt=0.01
        assert all(all(v == 0.0 for v in r.qdot) for r in paused_rows)
        assert len({r.phase for r in paused_rows}) == 1  # phase retained

        _, plain_result = run_default_mission(mission_env, "move", "right")
        # after the hold the trajectory replays the uninterrupted run
        # shifted in time
        np.testing.assert_allclose(
            paused_result.rows[-1].q, plain_result.rows[-1].q, atol=1e-9
        )
        assert paused_result.rows[-1].clock == pytest.approx(
            plain_result.rows[-1].clock + 5.0
        )
        shifted = paused_result.rows[900]
        original = plain_result.rows[400]
        np.testing.assert_allclose(shifted.q, original.q, atol=1e-12)

    def test_pause_resume_transition_rules(self):
        running = MissionStatus(state="running")
        paused, ok = try_pause(running)
        assert ok and paused.state == "paused"
        resumed, ok = try_resume(paused)
        assert ok and resumed.state == "running"
        _, ok = try_resume(running)
        assert not ok
        idle = MissionStatus(state="idle")
        rejected, ok = try_pause(idle)
        assert not ok and rejected.state == "idle"


class TestFaults:
    def test_duration_cap_fails_mission(self, mission_env):
        chain, layout, params = mission_env
        params = replace(params, duration_cap=0.5)
        world = initial_world(layout)
        perception = perceive(world, SimConfig())
        script = compile_mission(Command("water", "move", "right"), world, perception, params)
        result = run_mission(script, world, chain, params)
        assert result.status.state == "failed"
        assert "duration cap" in result.status.fault

    def test_grasp_failure_fails_mission(self, mission_env):
        chain, layout, params = mission_env
        world = initial_world(layout)
        perception = perceive(world, SimConfig())
        script = compile_mission(Command("water", "move", "right"), world, perception, params)
        # teleport the bottle after compile: the tool converges on the
        # stale waypoint and the grasp misses
        moved = replace(
            world.object("water"),
            pose=Pose(
                world.object("water").pose.position + np.array([0.05, 0.0, 0.0]),
                world.object("water").pose.orientation,
            ),
        )
        objects = dict(world.objects)
        objects["water"] = moved
        result = run_mission(script, replace(world, objects=objects), chain, params)
        assert result.status.state == "failed"
        assert "grasp" in result.status.fault.lower() or "away" in result.status.fault


class TestPerceptionNoiseRobustness:
    def test_move_succeeds_with_5mm_noise(self, mission_env):
        chain, layout, params = mission_env
        params = replace(params, noise=0.005)
        world = initial_world(layout)
        rng = np.random.default_rng(42)
        perception = perceive(world, SimConfig(noise=0.005), rng)
        script = compile_mission(Command("water", "move", "right"), world, perception, params)
        result = run_mission(script, world, chain, params, rng=rng)
        assert result.status.state == "completed"
