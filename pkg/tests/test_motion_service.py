import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from conftest import arc_anchor, arc_points, make_history, make_state
from trajgrpo.models import History, Trajectory, Vec2, VehicleSpec
from trajgrpo.services.motion_service import (
    SCENARIO_KINDS,
    MotionError,
    avg_acceleration,
    derive_motion,
    lateral_offset,
    perturb_ground_truth,
    rollout_constant_accel,
    steering_from_heading,
    synth_corpus,
    synth_scenario,
)

finite = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


class TestModels:
    def test_vec2_rejects_nan(self):
        with pytest.raises(ValidationError):
            Vec2(x=float("nan"), y=0.0)

    def test_history_needs_uniform_spacing(self):
        with pytest.raises(ValidationError):
            History(states=[make_state(-1.0), make_state(-0.5), make_state(0.5)])

    def test_history_needs_two_states(self):
        with pytest.raises(ValidationError):
            History(states=[make_state(0.0)])

    def test_trajectory_defaults_to_half_second(self):
        traj = Trajectory.from_points([(1, 0)])
        assert traj.dt == 0.5

    def test_vehicle_spec_delta_max_range(self):
        with pytest.raises(ValidationError):
            VehicleSpec(delta_max=math.pi / 2)


class TestDeriveMotion:
    def test_straight_line(self):
        traj = Trajectory.from_points([(k, 0) for k in range(1, 7)])
        anchor = make_state(0.0, velocity=(2.0, 0.0))
        profile = derive_motion(traj, anchor)
        assert profile.headings == [0.0] * 7
        assert profile.speeds == pytest.approx([2.0] * 7)
        assert profile.accels == pytest.approx([0.0] * 6)

    def test_stationary_step_keeps_heading(self):
        anchor = make_state(0.0, heading=0.3)
        profile = derive_motion(Trajectory.from_points([(0, 0)]), anchor)
        assert profile.headings == [0.3, 0.3]
        assert profile.speeds[1] == 0.0

    def test_quarter_circle_heading_increments(self):
        radius, speed = 10.0, 5.0
        points = arc_points(radius, speed, 12)
        profile = derive_motion(Trajectory.from_points(points), arc_anchor(radius, speed))

        anchored = [(0.0, 0.0)] + points
        chords = [math.atan2(b[1] - a[1], b[0] - a[0]) for a, b in zip(anchored, anchored[1:])]
        assert profile.headings[1:] == pytest.approx(chords, abs=1e-6)
        increments = np.diff(profile.headings[1:])
        assert increments == pytest.approx([0.25] * len(increments), abs=1e-6)

    def test_unwraps_across_pi(self):
        points = [(-1.0, 0.1), (-2.0, 0.0), (-3.0, -0.1)]
        profile = derive_motion(Trajectory.from_points(points), make_state(0.0, heading=math.pi - 0.05))
        assert all(abs(b - a) <= math.pi for a, b in zip(profile.headings, profile.headings[1:]))
        assert profile.headings[-1] > math.pi

    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_speeds_nonnegative_and_headings_continuous(self, points):
        profile = derive_motion(Trajectory.from_points(points), make_state(0.0))
        assert all(v >= 0 for v in profile.speeds)
        assert all(abs(b - a) <= math.pi + 1e-12 for a, b in zip(profile.headings, profile.headings[1:]))


class TestAvgAcceleration:
    def test_mean(self):
        history = History(states=[make_state(-0.5, acceleration=(1, 0)), make_state(0.0, acceleration=(3, 0))])
        assert avg_acceleration(history).as_tuple() == (2.0, 0.0)

    def test_zero(self):
        assert avg_acceleration(make_history()).as_tuple() == (0.0, 0.0)

    def test_single_state(self):
        result = avg_acceleration([make_state(0.0, acceleration=(0.4, -0.2))])
        assert result.x == pytest.approx(0.4)
        assert result.y == pytest.approx(-0.2)

    def test_empty(self):
        with pytest.raises(MotionError, match="empty history"):
            avg_acceleration([])


class TestRollout:
    def test_at_rest(self):
        traj = rollout_constant_accel(make_history(), steps=6)
        assert np.all(traj.as_array() == 0.0)

    def test_constant_velocity(self):
        traj = rollout_constant_accel(make_history(velocity=(2, 0)), steps=3, dt=0.5)
        assert traj.as_array().tolist() == [[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]

    def test_constant_acceleration_matches_closed_form(self):
        traj = rollout_constant_accel(make_history(acceleration=(2, 0)), steps=2, dt=0.5)
        # p(t) = a t^2 / 2 at t = 0.5 and 1.0
        assert traj.as_array()[:, 0] == pytest.approx([0.25, 1.0], abs=1e-12)

    @given(finite, finite, finite, finite, st.integers(min_value=1, max_value=10))
    @settings(max_examples=50, deadline=None)
    def test_telescoping_identity(self, vx, vy, ax, ay, steps):
        traj = rollout_constant_accel(make_history(velocity=(vx, vy), acceleration=(ax, ay)), steps, 0.5)
        t = 0.5 * np.arange(1, steps + 1)[:, None]
        expected = np.array([vx, vy]) * t + 0.5 * np.array([ax, ay]) * t * t
        assert np.allclose(traj.as_array(), expected, rtol=0, atol=1e-9 * max(1.0, np.abs(expected).max()))

    def test_zero_acceleration_is_linear(self):
        traj = rollout_constant_accel(make_history(velocity=(3.3, -1.1)), steps=6)
        for k, w in enumerate(traj.waypoints, start=1):
            assert w.x == pytest.approx(k * 0.5 * 3.3, abs=1e-12)
            assert w.y == pytest.approx(k * 0.5 * -1.1, abs=1e-12)

    def test_rejects_zero_steps(self):
        with pytest.raises(MotionError):
            rollout_constant_accel(make_history(), steps=0)


class TestLateralOffset:
    def test_values(self):
        assert lateral_offset(10, 0) == 0
        assert lateral_offset(10, math.pi / 4) == pytest.approx(10.0)
        assert lateral_offset(5, 0.1) == pytest.approx(0.50167, abs=1e-5)

    def test_out_of_range(self):
        with pytest.raises(MotionError, match="steering out of range"):
            lateral_offset(5, math.pi / 2)


class TestSynthScenario:
    def test_deterministic(self):
        a = synth_scenario(1, "straight")
        b = synth_scenario(1, "straight")
        assert a.model_dump_json() == b.model_dump_json()

    def test_default_and_custom_vehicle(self):
        assert synth_scenario(2, "accel", spec=None).spec == VehicleSpec()
        custom = VehicleSpec(wheelbase_L=3.1, jerk_limit=1.5)
        assert synth_scenario(2, "accel", spec=custom).spec == custom
        assert {s.spec for s in synth_corpus(2, 4, spec=custom)} == {custom}

    @pytest.mark.parametrize("kind", ["straight", "accel", "brake"])
    def test_longitudinal_ground_truth_is_the_rollout(self, kind):
        for seed in range(5):
            scenario = synth_scenario(seed, kind)
            rollout = rollout_constant_accel(scenario.history, len(scenario.ground_truth), scenario.ground_truth.dt)
            assert np.allclose(rollout.as_array(), scenario.ground_truth.as_array(), rtol=0, atol=1e-9)

    def test_constant_turn_heading_increments(self):
        for seed in range(5):
            scenario = synth_scenario(seed, "constant_turn")
            profile = derive_motion(scenario.ground_truth, scenario.anchor)
            increments = np.diff(profile.headings[1:])
            assert np.allclose(increments, increments[0], rtol=0, atol=1e-6)

    def test_history_shape(self):
        scenario = synth_scenario(9, "brake")
        assert [s.t for s in scenario.history.states] == [-1.5, -1.0, -0.5, 0.0]
        assert scenario.anchor.position.as_tuple() == (0.0, 0.0)
        assert len(scenario.ground_truth) == 6

    def test_unknown_kind(self):
        with pytest.raises(MotionError):
            synth_scenario(0, "drift")

    def test_corpus_round_robin(self):
        corpus = synth_corpus(2, 9)
        assert [s.id.split("-")[0] for s in corpus[:4]] == list(SCENARIO_KINDS)
        assert len({s.id for s in corpus}) == 9

    def test_perturb_translates_ground_truth(self, straight_scenario):
        shifted = perturb_ground_truth(straight_scenario, Vec2.of(0.3, 0.4))
        diff = shifted.ground_truth.as_array() - straight_scenario.ground_truth.as_array()
        assert np.allclose(diff, [0.3, 0.4])
        assert shifted.history == straight_scenario.history


class TestSteeringFromHeading:
    def test_straight_is_zero(self, straight_scenario, spec):
        profile = derive_motion(straight_scenario.ground_truth, straight_scenario.anchor)
        assert steering_from_heading(profile, straight_scenario.ground_truth, spec) == pytest.approx([0.0] * 6)

    def test_constant_turn_recovers_steering(self, turn_scenario, spec):
        traj = turn_scenario.ground_truth
        profile = derive_motion(traj, turn_scenario.anchor)
        steering = steering_from_heading(profile, traj, spec)
        # first step only covers half the heading change, the rest match the bicycle model
        assert steering[1:] == pytest.approx([turn_scenario.anchor.steering] * 5, abs=2e-3)
