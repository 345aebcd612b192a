import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saferl.highway import (
    EgoAction,
    Lane,
    RewardConfig,
    RoadConfig,
    Role,
    Scene,
    ScenarioConfig,
    SceneError,
    Terminal,
    Vehicle,
    VehicleState,
    action_command,
    check_collision,
    extract_affordances,
    init_scene,
    euler_step,
    lane_change_intent,
    mv_policy,
    read_trace,
    reward_components,
    stable_speed_reward,
    step,
    write_trace,
)
from saferl.regret import LaneDecision

ROAD = RoadConfig()
LEFT, RIGHT = ROAD.lane_center(Lane.LEFT), ROAD.lane_center(Lane.RIGHT)


def ego(x=0.0, y=LEFT, v=12.5, **kw):
    return Vehicle(0, Role.EGO, VehicleState(x, y, v, **kw))


def mv(vid, x, y=RIGHT, v=5.56, v_b=12.5, **kw):
    return Vehicle(vid, Role.MANUAL, VehicleState(x, y, v), v_b=v_b, **kw)


def scene_of(*vehicles, **kw):
    return Scene(tuple(vehicles), **kw)


# ---------------------------------------------------------------- kinematics


def test_euler_uses_old_velocity():
    s = euler_step(VehicleState(0.0, 0.0, 10.0, a_x=2.0), 0.1)
    assert s.v_x == pytest.approx(10.2)
    assert s.x == pytest.approx(1.0)


def test_euler_lateral():
    s = euler_step(VehicleState(0.0, -1.75, 10.0, v_y=1.8), 0.1)
    assert s.y == pytest.approx(-1.57)


def test_euler_clamps_speed_and_rejects_bad_dt():
    assert euler_step(VehicleState(0, 0, 0.1, a_x=-2.0), 0.1).v_x == 0.0
    with pytest.raises(ValueError):
        euler_step(VehicleState(0, 0, 1.0), 0.0)


@given(st.floats(0, 30), st.integers(1, 50))
def test_constant_speed_without_acceleration(v, n):
    s = VehicleState(0.0, 1.75, v)
    for _ in range(n):
        s = euler_step(s, 0.1)
    assert s.v_x == v
    assert s.y == 1.75


def test_action_commands_are_exclusive():
    for a in EgoAction:
        a_x, v_y = action_command(a)
        assert a_x == 0.0 or v_y == 0.0
    assert action_command(EgoAction.LANE_LEFT) == (0.0, 1.8)
    assert action_command(EgoAction.DECELERATE) == (-2.0, 0.0)


def test_lane_change_takes_about_twenty_steps():
    s = VehicleState(0.0, RIGHT, 10.0, v_y=1.8)
    n = 0
    while s.y < LEFT:
        s = euler_step(s, 0.1)
        n += 1
    assert n in (19, 20)


# ---------------------------------------------------------------- scene setup


def test_init_scene_layout():
    sc = init_scene(seed=0, scenario=replace(ScenarioConfig(), jitter=0.0))
    e, green, red = sc.vehicles
    assert (e.role, green.role, red.role) == (Role.EGO, Role.MANUAL, Role.MANUAL)
    assert e.state.y == LEFT and green.state.y == RIGHT and red.state.y == RIGHT
    assert e.state.v_x == 12.5
    assert green.state.v_x == 5.56 and green.v_b == 12.5
    assert red.state.v_x == red.v_b == 5.56
    assert green.state.x - e.state.x - ROAD.vehicle_length == pytest.approx(10.0)
    assert red.state.x > green.state.x


def test_init_scene_deterministic_and_jitter_bounded():
    base = init_scene(seed=None, scenario=replace(ScenarioConfig(), jitter=0.0))
    for seed in range(50):
        a, b = init_scene(seed=seed), init_scene(seed=seed)
        assert a == b
        for v, v0 in zip(a.vehicles, base.vehicles):
            assert abs(v.state.x - v0.state.x) <= 2.0
            assert v.state.y == v0.state.y


# ---------------------------------------------------------------- collisions


@pytest.mark.parametrize(
    "dx, dy, hit",
    [(3.0, 0.0, True), (3.0, 3.5, False), (4.5, 0.0, False), (4.49, 1.99, True), (0.0, 2.0, False)],
)
def test_check_collision(dx, dy, hit):
    sc = scene_of(ego(0.0, 0.0), mv(1, dx, dy))
    assert (check_collision(sc) is not None) == hit


# ---------------------------------------------------------------- rewards


def test_speed_tent():
    cfg = RewardConfig()
    assert stable_speed_reward(12.5, cfg) == 1.0
    assert stable_speed_reward(9.0, cfg) == pytest.approx((9 - 5.56) / (12.5 - 5.56))
    assert stable_speed_reward(5.56, cfg) == 0.0
    assert stable_speed_reward(16.67, cfg) == 0.0
    assert stable_speed_reward(20.0, cfg) == 0.0
    eps = 1e-9
    assert stable_speed_reward(12.5 - eps, cfg) == pytest.approx(1.0)
    assert stable_speed_reward(12.5 + eps, cfg) == pytest.approx(1.0)


def test_collision_reward_total():
    sc = scene_of(ego(0.0, LEFT), mv(1, 3.0, RIGHT))
    r = reward_components(sc, collided=True)
    assert (r.r_s, r.r_v, r.r_c, r.r_h) == (-1.0, 1.0, 0.0, 0.0)
    assert r.total == -1990.0


def test_centering_penalty():
    assert reward_components(scene_of(ego(y=LEFT + 0.49)), False).r_c == 0.0
    assert reward_components(scene_of(ego(y=LEFT + 0.5)), False).r_c == -1.0


def test_headway_penalty():
    # close leader at equal speed: ratio is infinite but the gap is below 18 m
    close = scene_of(ego(0.0, LEFT, 10.0), mv(1, 4.5 + 10.0, LEFT, v=10.0))
    assert reward_components(close, False).r_h == -1.0
    far_same_speed = scene_of(ego(0.0, LEFT, 10.0), mv(1, 4.5 + 30.0, LEFT, v=10.0))
    assert reward_components(far_same_speed, False).r_h == 0.0
    # 30 m gap closing at 20 m/s: 1.5 s < 2 s
    closing = scene_of(ego(0.0, LEFT, 25.0), mv(1, 4.5 + 30.0, LEFT, v=5.0))
    assert reward_components(closing, False).r_h == -1.0
    assert reward_components(scene_of(ego()), False).r_h == 0.0


# ---------------------------------------------------------------- stepping


def test_step_terminal_causes():
    crash = scene_of(ego(0.0, LEFT), mv(1, 4.6, LEFT, v=0.0, v_b=0.0))
    out = step(crash, EgoAction.MAINTAIN)
    assert out.terminal is Terminal.COLLISION and out.reward.r_s == -1.0

    edge = scene_of(ego(0.0, 1.95))
    assert step(edge, EgoAction.LANE_LEFT).terminal is Terminal.OFF_ROAD

    goal = scene_of(ego(399.0))
    assert step(goal, EgoAction.MAINTAIN).terminal is Terminal.GOAL

    late = scene_of(ego(0.0), steps=ROAD.max_steps - 1)
    assert step(late, EgoAction.MAINTAIN).terminal is Terminal.TIME_LIMIT

    with pytest.raises(SceneError):
        step(step(goal, EgoAction.MAINTAIN).scene, EgoAction.MAINTAIN)


def test_step_is_pure_and_deterministic():
    sc = init_scene(seed=4)
    a = step(sc, EgoAction.ACCELERATE)
    b = step(sc, EgoAction.ACCELERATE)
    assert a == b
    assert sc == init_scene(seed=4)


# ---------------------------------------------------------------- manual vehicles


def test_scenario_mv_keeps_lane():
    sc = init_scene(seed=0, scenario=replace(ScenarioConfig(), jitter=0.0))
    green = sc.vehicles[1]
    trace = lane_change_intent(sc, green)
    assert trace.decision is LaneDecision.KEEP
    assert trace.e_ck == pytest.approx(-1.6616, abs=1e-3)
    _, v_y = mv_policy(sc, green)
    assert v_y == 0.0


def test_mv_speed_law():
    # inside the 2 s headway the MV tracks its leader's speed
    close = scene_of(ego(-200.0), mv(1, 0.0, v=8.0), mv(2, 4.5 + 8.0, v=5.56, v_b=5.56))
    a_x, _ = mv_policy(close, close.vehicles[1])
    assert a_x == -2.0
    near = scene_of(ego(-200.0), mv(1, 0.0, v=5.8), mv(2, 4.5 + 8.0, v=5.56, v_b=5.56))
    assert mv_policy(near, near.vehicles[1])[0] == pytest.approx(-0.24)
    # with room ahead it heads for its best speed
    free = scene_of(ego(-200.0), mv(1, 0.0, v=12.0), mv(2, 4.5 + 45.0, v=12.5, v_b=12.5))
    assert mv_policy(free, free.vehicles[1])[0] == pytest.approx(0.5)


def test_mv_changes_lane_with_wide_gap():
    green = mv(1, 0.0, RIGHT, v=5.56)
    red = mv(2, 4.5 + 15.0, RIGHT, v=5.56, v_b=5.56)
    approacher = ego(-4.5 - 25.0, LEFT, 12.5)
    sc = scene_of(approacher, green, red)
    assert lane_change_intent(sc, green).decision is LaneDecision.CHANGE
    _, v_y = mv_policy(sc, green)
    assert v_y == pytest.approx(1.8)


def test_unblocked_mv_is_idle():
    sc = scene_of(ego(-50.0), mv(1, 0.0, RIGHT, v=12.5, v_b=12.5))
    assert mv_policy(sc, sc.vehicles[1]) == (0.0, 0.0)
    assert lane_change_intent(sc, sc.vehicles[1]) is None


def test_mv_commits_until_snap():
    green = mv(1, 0.0, RIGHT, v=5.56)
    red = mv(2, 4.5 + 15.0, RIGHT, v=5.56, v_b=5.56)
    sc = scene_of(ego(-200.0, LEFT, 0.0), green, red)
    seen_changing = False
    for _ in range(40):
        sc = step(sc, EgoAction.MAINTAIN).scene
        v = sc.vehicles[1]
        if v.changing_lane:
            seen_changing = True
            assert v.lane_target is Lane.LEFT
    v = sc.vehicles[1]
    assert seen_changing and not v.changing_lane
    assert v.state.y == LEFT and v.state.v_y == 0.0


def test_mv_ignores_equally_slow_target_lane():
    green = mv(1, 0.0, RIGHT, v=5.56)
    red = mv(2, 4.5 + 15.0, RIGHT, v=5.56, v_b=5.56)
    slow_left = ego(4.5 + 10.0, LEFT, 5.56)
    assert lane_change_intent(scene_of(slow_left, green, red), green) is None


# ---------------------------------------------------------------- affordances


def test_affordance_missing_neighbours():
    s = extract_affordances(scene_of(ego(0.0, LEFT, 16.67)))
    assert s.shape == (12,)
    assert list(s[:8]) == [1.0, 0.0] * 4
    assert s[8] == pytest.approx(0.5)
    assert s[9] == pytest.approx(1.0)


def test_affordance_front_right_gap():
    s = extract_affordances(scene_of(ego(0.0, LEFT, 10.0), mv(1, 50.0 + 4.5, RIGHT, v=10.0)))
    assert s[0] == pytest.approx(0.0)
    assert s[1] == 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.sampled_from(list(EgoAction)), min_size=1, max_size=120))
def test_affordances_bounded_on_reachable_scenes(seed, actions):
    sc = init_scene(seed=seed)
    assert np.all(np.abs(extract_affordances(sc)) <= 1.0)
    for a in actions:
        out = step(sc, a)
        sc = out.scene
        assert np.all(np.abs(extract_affordances(sc)) <= 1.0)
        if out.terminal is not None:
            break


def test_trace_roundtrip(tmp_path):
    scenes = [init_scene(seed=1)]
    for _ in range(5):
        scenes.append(step(scenes[-1], EgoAction.MAINTAIN).scene)
    path = tmp_path / "trace.jsonl"
    write_trace(path, scenes)
    rows = read_trace(path)
    assert len(rows) == 6
    assert rows[-1]["vehicles"][0]["x"] == scenes[-1].ego.state.x
    assert {v["role"] for v in rows[0]["vehicles"]} == {"ego", "manual"}


def test_all_maintain_reaches_goal():
    sc = init_scene(seed=0)
    while sc.terminal is None:
        sc = step(sc, EgoAction.MAINTAIN).scene
    assert sc.terminal is Terminal.GOAL
    assert math.isclose(sc.ego.state.v_x, 12.5)
