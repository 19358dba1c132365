import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_state, random_scenario
from trajgrpo.models import MotionProfile, Trajectory
from trajgrpo.services.grpo_service import advantages
from trajgrpo.services.motion_service import derive_motion
from trajgrpo.services.response_codec import ModelResponse, serialize_response
from trajgrpo.services.reward_service import (
    RewardError,
    RewardWeights,
    r_acc,
    r_pos,
    r_ste,
    r_tem,
    r_vel,
    total_reward,
)


def profile(headings, speeds, dt=0.5):
    accels = [(b - a) / dt for a, b in zip(speeds, speeds[1:])]
    return MotionProfile(headings=headings, speeds=speeds, accels=accels)


def naive_components(pred_pts, gt_pts, anchor_pos, anchor_heading, anchor_speed, dt):
    """Loop-based reimplementation of the four error terms, independent of the production code."""

    def motion(points):
        headings = [anchor_heading]
        speeds = [anchor_speed]
        px, py = anchor_pos
        for x, y in points:
            dx, dy = x - px, y - py
            length = math.sqrt(dx * dx + dy * dy)
            if length < 1e-9:
                headings.append(headings[-1])
            else:
                raw = math.atan2(dy, dx)
                delta = raw - headings[-1]
                while delta > math.pi:
                    delta -= 2 * math.pi
                while delta <= -math.pi:
                    delta += 2 * math.pi
                headings.append(headings[-1] + delta)
            speeds.append(length / dt)
            px, py = x, y
        return headings, speeds

    n = len(gt_pts)
    pos = 0.0
    for (x, y), (gx, gy) in zip(pred_pts, gt_pts):
        pos += (x - gx) ** 2 + (y - gy) ** 2
    pos /= n

    ph, ps = motion(pred_pts)
    gh, gs = motion(gt_pts)
    ste = sum((ph[j] - gh[j]) ** 2 for j in range(1, n + 1)) / n
    vel = sum((ps[k] - gs[k]) ** 2 for k in range(1, n + 1)) / n
    tem = sum((ph[j] - ph[j - 1]) ** 2 for j in range(1, n + 1)) / n
    tem += sum((ps[k] - ps[k - 1]) ** 2 for k in range(1, n + 1)) / n
    return pos, ste, vel, tem


def close(a, b, rel=1e-12):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


class TestComponents:
    def test_r_pos_identity(self):
        traj = Trajectory.from_points([(1, 2), (3, 4)])
        assert r_pos(traj, traj) == 0.0

    def test_r_pos_hand_value(self):
        pred = Trajectory.from_points([(1, 0), (2, 0)])
        gt = Trajectory.from_points([(0, 0), (2, 0)])
        assert r_pos(pred, gt) == pytest.approx(0.5)

    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_r_pos_constant_offset(self, points):
        gt = Trajectory.from_points(points)
        pred = Trajectory.from_array(gt.as_array() + [0.3, 0.4])
        assert r_pos(pred, gt) == pytest.approx(0.25, abs=1e-9)

    def test_r_pos_length_mismatch(self):
        with pytest.raises(RewardError):
            r_pos(Trajectory.from_points([(0, 0)]), Trajectory.from_points([(0, 0), (1, 1)]))

    def test_r_pos_translation_and_scale(self, rng):
        gt = rng.normal(size=(6, 2)) * 10
        pred = gt + rng.normal(size=(6, 2))
        base = r_pos(Trajectory.from_array(pred), Trajectory.from_array(gt))
        shift = np.array([123.0, -45.0])
        moved = r_pos(Trajectory.from_array(pred + shift), Trajectory.from_array(gt + shift))
        assert moved == pytest.approx(base, rel=1e-12, abs=1e-12)
        scaled = r_pos(Trajectory.from_array(gt + 3.0 * (pred - gt)), Trajectory.from_array(gt))
        assert scaled == pytest.approx(9.0 * base, rel=1e-9)

    def test_r_ste(self):
        same = profile([0, 0.1, 0.2], [2, 2, 2])
        assert r_ste(same, same) == 0.0
        shifted = profile([0, 0.2, 0.3], [2, 2, 2])
        assert r_ste(shifted, same) == pytest.approx(0.01)
        assert r_ste(profile([0, 0, 0.2], [1, 1, 1]), profile([0, 0, 0], [1, 1, 1])) == pytest.approx(0.02)

    def test_r_vel(self):
        gt = profile([0, 0, 0], [2, 2, 3])
        assert r_vel(gt, gt) == 0.0
        assert r_vel(profile([0, 0, 0], [2, 2.5, 3.5]), gt) == pytest.approx(0.25)
        assert r_vel(profile([0, 0, 0], [2, 2, 2]), gt) == pytest.approx(0.5)

    def test_r_tem(self):
        assert r_tem(profile([0.3] * 4, [5.0] * 4)) == 0.0
        assert r_tem(profile([0, 0.1, 0.1], [2, 2, 2])) == pytest.approx(0.005)
        assert r_tem(profile([0, 0, 0], [0, 1, 2])) == pytest.approx(1.0)


class TestAccuracy:
    def test_perfect_prediction_leaves_smoothness(self, turn_scenario):
        gt = turn_scenario.ground_truth
        breakdown = r_acc(gt, gt, turn_scenario.anchor)
        assert breakdown.r_acc == r_tem(derive_motion(gt, turn_scenario.anchor))

    def test_zero_weights(self, rng):
        scenario = random_scenario(rng)
        pred = Trajectory.from_array(rng.normal(size=(6, 2)))
        zero = RewardWeights(lambda_pos=0, lambda_ste=0, lambda_vel=0, lambda_tem=0)
        assert r_acc(pred, scenario.ground_truth, scenario.anchor, zero).r_acc == 0.0

    def test_linear_in_weights(self, rng):
        scenario = random_scenario(rng)
        pred = Trajectory.from_array(rng.normal(size=(6, 2)) * 5)
        b = r_acc(pred, scenario.ground_truth, scenario.anchor)
        w = RewardWeights(lambda_pos=2.0, lambda_ste=0.5, lambda_vel=3.0, lambda_tem=0.25)
        weighted = r_acc(pred, scenario.ground_truth, scenario.anchor, w)
        expected = 2.0 * b.r_pos + 0.5 * b.r_ste + 3.0 * b.r_vel + 0.25 * b.r_tem
        assert weighted.r_acc == pytest.approx(expected, rel=1e-12)

    def test_naive_oracle_equivalence(self):
        rng = np.random.default_rng(7)
        start = time.perf_counter()
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            gt = np.cumsum(rng.uniform(-2, 6, size=(n, 2)), axis=0)
            pred = gt + rng.normal(scale=rng.uniform(0.01, 3.0), size=(n, 2))
            heading = float(rng.uniform(-math.pi, math.pi))
            speed = float(rng.uniform(0, 20))
            anchor = make_state(0.0, velocity=(speed * math.cos(heading), speed * math.sin(heading)), heading=heading)

            b = r_acc(Trajectory.from_array(pred), Trajectory.from_array(gt), anchor)
            pos, ste, vel, tem = naive_components(pred.tolist(), gt.tolist(), (0.0, 0.0), heading, anchor.speed, 0.5)
            assert close(b.r_pos, pos)
            assert close(b.r_ste, ste)
            assert close(b.r_vel, vel)
            assert close(b.r_tem, tem)
            assert close(b.r_acc, pos + ste + vel + tem)
        assert time.perf_counter() - start < 5.0


class TestTotalReward:
    def test_perfect_straight_prediction(self, straight_scenario):
        text = serialize_response(ModelResponse(think="t", answer=straight_scenario.ground_truth), decimals=9)
        b = total_reward(text, straight_scenario)
        assert b.r_format == 1
        assert b.total == pytest.approx(1.0, abs=1e-9)

    def test_unparseable(self, straight_scenario):
        b = total_reward("nonsense", straight_scenario, penalty_cap=100.0)
        assert b.r_format == 0
        assert b.total == -100.0
        assert b.parse_error == "MissingThink"

    def test_wrong_waypoint_count(self, straight_scenario):
        text = "<think>t</think><answer>(1, 0), (2, 0)</answer>"
        b = total_reward(text, straight_scenario, penalty_cap=50.0)
        assert b.r_format == 1
        assert b.length_penalized
        assert b.r_acc == 50.0
        assert b.total == -49.0

    def test_error_above_cap_is_capped(self, straight_scenario):
        far = Trajectory.from_array(straight_scenario.ground_truth.as_array() + 20.0)
        b = total_reward(serialize_response(ModelResponse(think="t", answer=far)), straight_scenario)
        assert b.capped
        assert b.r_pos == pytest.approx(800.0)
        assert (b.r_acc, b.total) == (100.0, -99.0)

    def test_overflowing_error_keeps_group_finite(self, straight_scenario):
        huge = "(1" + "0" * 200 + ".0, 0.0)"
        text = "<think>t</think><answer>" + ", ".join([huge] * 6) + "</answer>"
        b = total_reward(text, straight_scenario)
        assert b.capped
        assert b.total == -99.0

        good = serialize_response(ModelResponse(think="t", answer=straight_scenario.ground_truth))
        rewards = [total_reward(good, straight_scenario).total, b.total, b.total]
        assert np.all(np.isfinite(advantages(rewards)))

    def test_total_is_format_minus_accuracy(self, turn_scenario, rng):
        pred = Trajectory.from_array(turn_scenario.ground_truth.as_array() + rng.normal(size=(6, 2)))
        text = serialize_response(ModelResponse(think="t", answer=pred))
        b = total_reward(text, turn_scenario)
        assert b.total == pytest.approx(1 - b.r_acc, abs=1e-12)
        assert min(b.r_pos, b.r_ste, b.r_vel, b.r_tem) >= 0


class TestWeights:
    def test_parse(self):
        w = RewardWeights.parse("1, 0.5, 0, 2")
        assert (w.lambda_pos, w.lambda_ste, w.lambda_vel, w.lambda_tem) == (1.0, 0.5, 0.0, 2.0)
        assert w.as_text() == "1,0.5,0,2"

    def test_parse_rejects_wrong_count(self):
        with pytest.raises(ValueError):
            RewardWeights.parse("1,1,1")

    def test_without(self):
        w = RewardWeights().without("pos", "tem")
        assert (w.lambda_pos, w.lambda_ste, w.lambda_vel, w.lambda_tem) == (0.0, 1.0, 1.0, 0.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            RewardWeights(lambda_pos=-1)
