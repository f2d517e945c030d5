import math

import numpy as np
import pytest

from armstack.bruteforce import brute_force_choice, random_scenario
from armstack.errors import (
    CombinatorialLimitError,
    HardLimitBreachError,
    OverConstrainedError,
)
from armstack.kinematics import forward_kinematics, null_space_projector
from armstack.solver import (
    ActiveStack,
    ActiveTask,
    Candidate,
    SolverParams,
    StackEntry,
    TaskHierarchy,
    build_active_stack,
    cap_velocity,
    choose_solution,
    clik_velocity,
    enumerate_solutions,
    filter_feasible,
    solve_step,
)
from armstack.tasks import EvalContext, SetBounds, TaskReading, TaskSpec


def eq_spec(sid="eq0", gain=1.0):
    return TaskSpec(sid, "equality", 3, gain * np.eye(3), "position")


def set_spec(sid, bounds, gain=1.0):
    return TaskSpec(
        sid, "set_based", 1, np.array([[gain]]), "joint_value", {"joint_index": 0}, bounds=bounds
    )


UNIT_BOUNDS = SetBounds.with_midpoint_safety(lower=-1.0, upper=1.0, buffer=0.2)


def entry(J, v, permanent=True, key="t"):
    return StackEntry(key, np.atleast_2d(np.asarray(J, float)), np.atleast_1d(np.asarray(v, float)), permanent)


class TestClikVelocity:
    def test_single_task_is_pinv_times_gain_error(self, rng):
        J = rng.normal(size=(3, 7))
        err = rng.normal(size=3)
        K = np.diag([1.0, 2.0, 0.5])
        qdot = clik_velocity([entry(J, K @ err)], 7)
        np.testing.assert_allclose(qdot, np.linalg.pinv(J) @ K @ err, atol=0)

    def test_orthogonal_tasks_both_satisfied(self, rng):
        # build two Jacobians with orthogonal row spaces
        basis = np.linalg.qr(rng.normal(size=(7, 7)))[0]
        J1, J2 = basis[:, :3].T, basis[:, 3:5].T
        v1, v2 = rng.normal(size=3), rng.normal(size=2)
        qdot = clik_velocity(
            [entry(J1, v1, key="a"), entry(J2, v2, key="b")], 7
        )
        np.testing.assert_allclose(J1 @ qdot, v1, atol=1e-9)
        np.testing.assert_allclose(J2 @ qdot, v2, atol=1e-9)

    def test_conflicting_tasks_keep_priority(self, rng):
        J1 = rng.normal(size=(3, 7))
        J2 = J1.copy()  # fully shared row space
        v1, v2 = rng.normal(size=3), rng.normal(size=3)
        qdot = clik_velocity([entry(J1, v1, key="a"), entry(J2, v2, key="b")], 7)
        np.testing.assert_allclose(J1 @ qdot, v1, atol=1e-9)
        # the conflicting secondary contribution is annihilated entirely
        np.testing.assert_allclose(qdot, np.linalg.pinv(J1) @ v1, atol=1e-9)

    def test_lower_priority_does_not_disturb_higher(self, rng):
        for _ in range(25):
            J1 = rng.normal(size=(3, 7))
            J2 = rng.normal(size=(2, 7))
            J3 = rng.normal(size=(2, 7))
            entries = [
                entry(J1, rng.normal(size=3), key="a"),
                entry(J2, rng.normal(size=2), key="b"),
                entry(J3, rng.normal(size=2), key="c"),
            ]
            qdot = clik_velocity(entries, 7)
            only_first = clik_velocity(entries[:1], 7)
            np.testing.assert_allclose(J1 @ qdot, J1 @ only_first, atol=1e-9)

    def test_over_constrained_equality_rows(self, rng):
        entries = [
            entry(rng.normal(size=(4, 7)), np.zeros(4), key="a"),
            entry(rng.normal(size=(4, 7)), np.zeros(4), key="b"),
        ]
        with pytest.raises(OverConstrainedError):
            clik_velocity(entries, 7)

    def test_activated_set_based_rows_may_exceed_n(self, rng):
        # 6 equality rows + 2 temporary set-based rows on a 7-DOF arm is legal
        entries = [
            entry(rng.normal(size=(1, 7)), [0.1], permanent=False, key="s1"),
            entry(rng.normal(size=(1, 7)), [0.1], permanent=False, key="s2"),
            entry(rng.normal(size=(6, 7)), rng.normal(size=6), key="pose"),
        ]
        qdot = clik_velocity(entries, 7)
        assert np.all(np.isfinite(qdot))


class TestBuildActiveStack:
    def make_hierarchy(self, bounds):
        return TaskHierarchy((set_spec("limit", bounds), eq_spec("pose")))

    def readings(self, n, sigma):
        return {
            "limit": TaskReading(np.array([sigma]), np.zeros((1, n))),
            "pose": TaskReading(np.zeros(3), np.zeros((3, n))),
        }

    def test_upper_activation_with_paper_joint4_numbers(self):
        bounds = SetBounds.with_midpoint_safety(lower=0.7, upper=5.5, buffer=0.1)
        hierarchy = self.make_hierarchy(bounds)
        active = build_active_stack(hierarchy, self.readings(7, 5.45))
        (sb,) = active.set_based
        assert sb.side == "upper"
        assert sb.target == pytest.approx(5.45)

    def test_interior_value_stays_inactive(self):
        bounds = SetBounds.with_midpoint_safety(lower=0.7, upper=5.5, buffer=0.1)
        active = build_active_stack(self.make_hierarchy(bounds), self.readings(7, 3.0))
        assert active.n_active == 0
        assert len(active.entries) == 1  # the equality task is always a member

    def test_lower_activation_with_paper_obstacle_numbers(self):
        bounds = SetBounds.with_midpoint_safety(lower=0.25, buffer=0.03)
        active = build_active_stack(self.make_hierarchy(bounds), self.readings(7, 0.26))
        (sb,) = active.set_based
        assert sb.side == "lower"
        assert sb.target == pytest.approx(0.265)

    def test_hard_limit_breach(self):
        bounds = SetBounds.with_midpoint_safety(lower=0.7, upper=5.5, buffer=0.1)
        with pytest.raises(HardLimitBreachError):
            build_active_stack(self.make_hierarchy(bounds), self.readings(7, 6.1))
        with pytest.raises(HardLimitBreachError):
            build_active_stack(self.make_hierarchy(bounds), self.readings(7, 0.1))


class TestEnumerateSolutions:
    def test_candidate_counts(self, rng):
        for n_a, expected in [(0, 1), (2, 4), (3, 8)]:
            scenario = random_scenario(rng, n_active=n_a) if n_a else None
            if scenario is None:
                active = ActiveStack((ActiveTask(eq_spec(), TaskReading(rng.normal(size=3), rng.normal(size=(3, 7)))),))
                targets = {"eq0": np.zeros(3)}
            else:
                active, targets = scenario.active, scenario.targets
            candidates = enumerate_solutions(active, targets, 7)
            assert len(candidates) == expected
            assert [c.mask for c in candidates] == list(range(expected))

    def test_mask_zero_matches_pure_equality_stack(self, rng):
        scenario = random_scenario(rng, n_active=3)
        candidates = enumerate_solutions(scenario.active, scenario.targets, 7)
        equality_only = ActiveStack(tuple(e for e in scenario.active.entries if e.side is None))
        pure = enumerate_solutions(equality_only, scenario.targets, 7)
        assert len(pure) == 1
        assert np.array_equal(candidates[0].velocity, pure[0].velocity)

    def test_combinatorial_limit(self, rng):
        scenario = random_scenario(rng, n_active=3)
        with pytest.raises(CombinatorialLimitError):
            enumerate_solutions(scenario.active, scenario.targets, 7, max_active=2)


class TestFilterFeasible:
    def single_task_active(self, side):
        spec = set_spec("s", UNIT_BOUNDS)
        reading = TaskReading(np.array([0.9 if side == "upper" else -0.9]), np.array([[1.0, 0.0]]))
        target = UNIT_BOUNDS.safety_upper if side == "upper" else UNIT_BOUNDS.safety_lower
        return ActiveStack((ActiveTask(spec, reading, side=side, target=target),))

    def test_candidate_moving_away_is_kept(self):
        active = self.single_task_active("upper")
        kept = filter_feasible([Candidate(0, np.array([-0.3, 0.0]))], active)
        assert [c.mask for c in kept] == [0]

    def test_candidate_moving_toward_bound_is_dropped(self):
        active = self.single_task_active("upper")
        kept = filter_feasible(
            [Candidate(0, np.array([0.2, 0.0])), Candidate(1, np.array([0.2, 0.0]))], active
        )
        assert [c.mask for c in kept] == [1]  # full-bitmask candidate survives anything

    def test_lower_side_sign(self):
        active = self.single_task_active("lower")
        kept = filter_feasible([Candidate(0, np.array([0.2, 0.0]))], active)
        assert [c.mask for c in kept] == [0]
        kept = filter_feasible([Candidate(0, np.array([-0.2, 0.0]))], active)
        assert kept == []

    def test_zero_rate_is_tolerated(self):
        active = self.single_task_active("upper")
        kept = filter_feasible([Candidate(0, np.array([0.0, 0.5]))], active)
        assert [c.mask for c in kept] == [0]


class TestChooseSolution:
    def test_highest_norm_wins(self):
        a = Candidate(0, np.array([0.4, 0.0]))
        b = Candidate(1, np.array([0.9, 0.0]))
        assert choose_solution([a, b]) is b

    def test_tie_prefers_fewest_bits_then_lowest_mask(self):
        v = np.array([0.5, 0.0])
        candidates = [Candidate(3, v.copy()), Candidate(1, v.copy()), Candidate(0, v.copy())]
        assert choose_solution(candidates).mask == 0
        assert choose_solution([Candidate(2, v.copy()), Candidate(1, v.copy())]).mask == 1

    def test_empty_feasible_rejected(self):
        with pytest.raises(ValueError):
            choose_solution([])


class TestOracleEquivalence:
    def test_matches_brute_force_exactly(self, rng):
        from armstack.solver import choose_solution, enumerate_solutions, filter_feasible

        for _ in range(100):
            scenario = random_scenario(rng, n_active=int(rng.integers(1, 4)))
            candidates = enumerate_solutions(scenario.active, scenario.targets, scenario.n)
            feasible = filter_feasible(candidates, scenario.active)
            chosen = choose_solution(feasible)
            mask, velocity, _ = brute_force_choice(scenario.active, scenario.targets, scenario.n)
            assert chosen.mask == mask
            assert np.array_equal(chosen.velocity, velocity)

    def test_matches_brute_force_with_damping(self, rng):
        for _ in range(50):
            scenario = random_scenario(rng, n_active=2)
            candidates = enumerate_solutions(scenario.active, scenario.targets, scenario.n, damping=0.01)
            feasible = filter_feasible(candidates, scenario.active)
            chosen = choose_solution(feasible)
            mask, velocity, _ = brute_force_choice(
                scenario.active, scenario.targets, scenario.n, damping=0.01
            )
            assert chosen.mask == mask
            np.testing.assert_allclose(chosen.velocity, velocity, atol=1e-12)

    def test_feasible_never_empty(self, rng):
        for _ in range(500):
            scenario = random_scenario(rng, n_active=int(rng.integers(1, 4)))
            candidates = enumerate_solutions(scenario.active, scenario.targets, scenario.n)
            assert len(filter_feasible(candidates, scenario.active)) >= 1


class TestPriorityInvariants:
    def test_priority_strictness_undamped(self, rng):
        for _ in range(50):
            J1 = rng.normal(size=(3, 7))
            v1 = rng.normal(size=3)
            entries = [
                entry(J1, v1, key="a"),
                entry(rng.normal(size=(2, 7)), rng.normal(size=2), key="b"),
            ]
            qdot = clik_velocity(entries, 7, damping=0.0)
            np.testing.assert_allclose(J1 @ qdot, v1, atol=1e-9)

    def test_null_space_annihilation(self, rng):
        for _ in range(50):
            dims = [3, 2, 1]
            Js = [rng.normal(size=(m, 7)) for m in dims]
            for i in range(1, len(Js)):
                J_aug = np.vstack(Js[:i])
                N = null_space_projector(J_aug)
                assert np.max(np.abs(J_aug @ N)) <= 1e-9


class TestCapVelocity:
    def test_no_scaling_below_cap(self):
        q = np.array([0.5, -0.7])
        out, scale = cap_velocity(q, 0.8)
        assert scale == 1.0
        np.testing.assert_allclose(out, q)

    def test_uniform_scaling_preserves_direction(self):
        q = np.array([1.6, -0.4])
        out, scale = cap_velocity(q, 0.8)
        assert scale == pytest.approx(0.5)
        np.testing.assert_allclose(out, q * 0.5)
        assert np.max(np.abs(out)) <= 0.8 + 1e-15


class TestSolveStep:
    def pose_hierarchy(self, chain, bounds_list):
        specs = [
            set_spec(f"lim{i}", b) if isinstance(b, SetBounds) else b
            for i, b in enumerate(bounds_list)
        ]
        specs.append(TaskSpec("reach", "equality", 3, 2.0 * np.eye(3), "position"))
        return TaskHierarchy(tuple(specs))

    def test_inactive_stack_equals_pure_clik(self, default_chain, rng):
        q = np.array([math.pi] * 7)
        bounds = SetBounds.with_midpoint_safety(lower=0.7, upper=5.5, buffer=0.1)
        spec_limit = TaskSpec(
            "lim", "set_based", 1, np.eye(1), "joint_value", {"joint_index": 3}, bounds=bounds
        )
        spec_pose = TaskSpec("reach", "equality", 3, 2.0 * np.eye(3), "position")
        hierarchy = TaskHierarchy((spec_limit, spec_pose))
        ctx = EvalContext.at(default_chain, q)
        target = forward_kinematics(default_chain, q).position + np.array([0.05, 0.0, -0.05])
        params = SolverParams(damping=0.0, velocity_cap=0.0)
        qdot, diag = solve_step(hierarchy, ctx, {"reach": target}, params)
        assert diag.active_mask == 0
        assert diag.candidate_norms == (pytest.approx(float(np.linalg.norm(qdot))),)
        pure = TaskHierarchy((spec_pose,))
        qdot_pure, _ = solve_step(pure, ctx, {"reach": target}, params)
        np.testing.assert_allclose(qdot, qdot_pure, atol=0)

    def test_joint_limit_snapshot_moves_away_from_upper_bound(self, default_chain):
        # fourth joint just past the activation threshold while the reach
        # target pulls it back toward the interior
        q = np.array([math.pi] * 7)
        q[3] = 5.42
        q_relief = q.copy()
        q_relief[3] = 4.6
        target = forward_kinematics(default_chain, q_relief).position
        bounds = SetBounds.with_midpoint_safety(lower=0.7, upper=5.5, buffer=0.1)
        hierarchy = TaskHierarchy(
            (
                TaskSpec("lim4", "set_based", 1, np.eye(1), "joint_value", {"joint_index": 3}, bounds=bounds),
                TaskSpec("reach", "equality", 3, 2.0 * np.eye(3), "position"),
            )
        )
        ctx = EvalContext.at(default_chain, q)
        qdot, diag = solve_step(hierarchy, ctx, {"reach": target}, SolverParams(damping=0.0))
        assert diag.active_mask == 1
        assert qdot[3] <= 1e-9

    def test_obstacle_snapshot_does_not_close_distance(self, default_chain):
        q = np.array([math.pi, math.pi - 0.5, math.pi, math.pi - 1.1, math.pi, math.pi - 0.6, math.pi])
        tool = forward_kinematics(default_chain, q).position
        obstacle = tool + np.array([0.27, 0.0, 0.0])
        target = tool - np.array([0.2, 0.0, 0.0])  # pull away from the obstacle
        bounds = SetBounds.with_midpoint_safety(lower=0.25, buffer=0.03)
        hierarchy = TaskHierarchy(
            (
                TaskSpec("obs", "set_based", 1, np.eye(1), "obstacle_distance", {"obstacle": "coke"}, bounds=bounds),
                TaskSpec("reach", "equality", 3, 2.0 * np.eye(3), "position"),
            )
        )
        ctx = EvalContext.at(default_chain, q, points={"coke": obstacle})
        qdot, diag = solve_step(hierarchy, ctx, {"reach": target}, SolverParams(damping=0.0))
        assert diag.active_mask == 1
        rate = float(diag.readings["obs"].jacobian[0] @ qdot)
        assert rate >= -1e-9

    def test_velocity_cap_applies(self, default_chain):
        q = np.array([math.pi] * 7)
        hierarchy = TaskHierarchy((TaskSpec("reach", "equality", 3, 50.0 * np.eye(3), "position"),))
        target = forward_kinematics(default_chain, q).position + np.array([0.3, 0.3, -0.3])
        qdot, diag = solve_step(hierarchy, EvalContext.at(default_chain, q), {"reach": target})
        assert np.max(np.abs(qdot)) <= 0.8 + 1e-12
        assert diag.scale < 1.0


class TestConvergenceBound:
    @pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
    def test_single_task_exponential_decay(self, default_chain, k):
        dt = 0.01
        q = np.array([math.pi, math.pi - 0.4, math.pi, math.pi - 0.9, math.pi, math.pi - 0.5, math.pi])
        # target pulls inward: outward targets approach the stretch
        # singularity where Euler-step curvature breaks the decay bound
        target = forward_kinematics(default_chain, q).position + np.array([-0.08, 0.06, -0.05])
        spec = TaskSpec("reach", "equality", 3, k * np.eye(3), "position")
        hierarchy = TaskHierarchy((spec,))
        params = SolverParams(damping=0.0, velocity_cap=0.0)  # cap disabled
        err0 = None
        for tick in range(600):
            ctx = EvalContext.at(default_chain, q)
            qdot, diag = solve_step(hierarchy, ctx, {"reach": target}, params)
            err = float(np.linalg.norm(diag.error["reach"]))
            if err0 is None:
                err0 = err
            t = tick * dt
            bound = err0 * math.exp(-k * t) + 10.0 * dt * k * err0
            assert err <= bound + 1e-12, f"t={t}: {err} > {bound}"
            q = q + qdot * dt
