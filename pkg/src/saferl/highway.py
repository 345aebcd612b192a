"""Two-lane kinematic highway with regret-driven manual vehicles.

Vehicles are points with a rectangular footprint, moved by explicit
Euler integration. The ego vehicle is commanded by one of five discrete
actions; manual vehicles (MVs) follow their leader with a proportional
speed law and decide lane changes with the regret model.

Coordinates: x along the road, y lateral with the centerline at 0. The
right lane is centered at y = -1.75 m and the left lane at y = +1.75 m.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .regret import (
    MIN_LEADER_SPEED,
    REFERENCE_DRIVER,
    DecisionTrace,
    LaneChangeObservation,
    LaneDecision,
    RegretParams,
    net_advantage,
)


class Role(enum.Enum):
    EGO = "ego"
    MANUAL = "manual"


class Lane(enum.Enum):
    RIGHT = -1
    LEFT = 1

    @property
    def other(self) -> "Lane":
        return Lane.LEFT if self is Lane.RIGHT else Lane.RIGHT


class EgoAction(enum.IntEnum):
    LANE_LEFT = 0
    LANE_RIGHT = 1
    ACCELERATE = 2
    DECELERATE = 3
    MAINTAIN = 4


class Terminal(enum.Enum):
    COLLISION = "collision"
    OFF_ROAD = "offroad"
    GOAL = "goal"
    TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class RoadConfig:
    length: float = 400.0
    lane_width: float = 3.5
    vehicle_length: float = 4.5
    vehicle_width: float = 2.0
    offroad_bound: float = 2.0
    dt: float = 0.1
    max_steps: int = 600
    max_accel: float = 2.0  # commanded |a_x| for the ego, saturation for MVs
    lateral_speed: float = 1.8
    sensing_range: float = 100.0
    speed_scale: float = 16.67  # also the top of the stable-speed band

    def lane_center(self, lane: Lane) -> float:
        return lane.value * self.lane_width / 2

    def lane_of(self, y: float) -> Lane:
        return Lane.LEFT if y >= 0 else Lane.RIGHT


@dataclass(frozen=True)
class ScenarioConfig:
    """Start positions: ego approaching in the left lane, a blocked MV and its slow leader on the right."""

    ego_speed: float = 12.5
    slow_speed: float = 5.56
    best_speed: float = 12.5
    mv_gap: float = 10.0  # bumper gap from the ego to the blocked MV
    leader_gap: float = 20.0  # bumper gap from the blocked MV to its leader
    jitter: float = 2.0


@dataclass(frozen=True)
class MvConfig:
    block_distance: float = 50.0
    block_margin: float = 0.5
    decision_period: float = 1.0
    speed_gain: float = 1.0
    min_headway: float = 2.0
    snap_tolerance: float = 0.05


@dataclass(frozen=True)
class RewardConfig:
    w_s: float = 2000.0
    w_v: float = 10.0
    w_c: float = 3.0
    w_h: float = 15.0
    v_min: float = 5.56
    v_target: float = 12.5
    v_max: float = 16.67
    center_tol: float = 0.5
    safe_distance: float = 18.0
    min_headway: float = 2.0

    def __post_init__(self):
        if not self.v_min < self.v_target < self.v_max:
            raise ValueError("need v_min < v_target < v_max")


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    v_x: float
    v_y: float = 0.0
    a_x: float = 0.0


@dataclass(frozen=True)
class Vehicle:
    vid: int
    role: Role
    state: VehicleState
    v_b: float = 0.0
    lane_target: Lane | None = None
    changing_lane: bool = False
    next_decision: float = 0.0


@dataclass(frozen=True)
class Scene:
    vehicles: tuple[Vehicle, ...]
    road: RoadConfig = RoadConfig()
    driver: RegretParams = REFERENCE_DRIVER
    mv: MvConfig = MvConfig()
    time: float = 0.0
    steps: int = 0
    terminal: Terminal | None = None

    @property
    def ego(self) -> Vehicle:
        return self.vehicles[0]

    @property
    def manual(self) -> tuple[Vehicle, ...]:
        return self.vehicles[1:]


@dataclass(frozen=True)
class RewardBreakdown:
    r_s: float
    r_v: float
    r_c: float
    r_h: float
    total: float


@dataclass(frozen=True)
class StepOutcome:
    scene: Scene
    reward: RewardBreakdown
    terminal: Terminal | None


class SceneError(RuntimeError):
    """Raised when stepping a scene that already terminated."""


def action_command(action: EgoAction, road: RoadConfig = RoadConfig()) -> tuple[float, float]:
    """(a_x, v_y) for a discrete ego action."""
    return {
        EgoAction.LANE_LEFT: (0.0, road.lateral_speed),
        EgoAction.LANE_RIGHT: (0.0, -road.lateral_speed),
        EgoAction.ACCELERATE: (road.max_accel, 0.0),
        EgoAction.DECELERATE: (-road.max_accel, 0.0),
        EgoAction.MAINTAIN: (0.0, 0.0),
    }[EgoAction(action)]


def init_scene(
    road: RoadConfig = RoadConfig(),
    seed: int | None = 0,
    driver: RegretParams = REFERENCE_DRIVER,
    scenario: ScenarioConfig = ScenarioConfig(),
    mv: MvConfig = MvConfig(),
) -> Scene:
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-scenario.jitter, scenario.jitter, size=3)
    right, left = road.lane_center(Lane.RIGHT), road.lane_center(Lane.LEFT)
    mv_x = scenario.mv_gap + road.vehicle_length
    leader_x = mv_x + scenario.leader_gap + road.vehicle_length
    ego = Vehicle(0, Role.EGO, VehicleState(float(jitter[0]), left, scenario.ego_speed))
    blocked = Vehicle(
        1, Role.MANUAL, VehicleState(mv_x + float(jitter[1]), right, scenario.slow_speed),
        v_b=scenario.best_speed,
    )
    leader = Vehicle(
        2, Role.MANUAL, VehicleState(leader_x + float(jitter[2]), right, scenario.slow_speed),
        v_b=scenario.slow_speed,
    )
    return Scene((ego, blocked, leader), road=road, driver=driver, mv=mv)


def euler_step(state: VehicleState, dt: float) -> VehicleState:
    """Explicit Euler: positions advance with the pre-update velocity."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_x = max(state.v_x + state.a_x * dt, 0.0)
    return replace(state, x=state.x + state.v_x * dt, y=state.y + state.v_y * dt, v_x=v_x)


# ---------------------------------------------------------------- neighbours


def _in_lane(road: RoadConfig, vehicles: Iterable[Vehicle], lane: Lane, exclude: int):
    return [v for v in vehicles if v.vid != exclude and road.lane_of(v.state.y) is lane]


def leader_in_lane(scene: Scene, vehicle: Vehicle, lane: Lane | None = None) -> tuple[Vehicle, float] | None:
    """Nearest vehicle strictly ahead in ``lane`` and its bumper gap."""
    road = scene.road
    lane = road.lane_of(vehicle.state.y) if lane is None else lane
    best = None
    for other in _in_lane(road, scene.vehicles, lane, vehicle.vid):
        dx = other.state.x - vehicle.state.x
        if dx > 0 and (best is None or dx < best[1]):
            best = (other, dx)
    if best is None:
        return None
    return best[0], best[1] - road.vehicle_length


def follower_in_lane(scene: Scene, vehicle: Vehicle, lane: Lane) -> tuple[Vehicle, float] | None:
    road = scene.road
    best = None
    for other in _in_lane(road, scene.vehicles, lane, vehicle.vid):
        dx = vehicle.state.x - other.state.x
        if dx >= 0 and (best is None or dx < best[1]):
            best = (other, dx)
    if best is None:
        return None
    return best[0], best[1] - road.vehicle_length


# ---------------------------------------------------------------- manual vehicles


def is_blocked(scene: Scene, vehicle: Vehicle) -> bool:
    lead = leader_in_lane(scene, vehicle)
    if lead is None:
        return False
    leader, gap = lead
    return gap <= scene.mv.block_distance and leader.state.v_x < vehicle.v_b - scene.mv.block_margin


def lane_change_intent(scene: Scene, vehicle: Vehicle) -> DecisionTrace | None:
    """Regret-model evaluation for a blocked MV, or None when no decision applies.

    No decision is taken when the MV is not blocked, when its leader is
    (nearly) stopped, when a vehicle in the target lane overlaps it
    longitudinally (no gap to merge into), or when the target lane is no
    faster: its nearest vehicle ahead, if within ``block_distance``, must
    beat the current leader by ``block_margin``.
    """
    if vehicle.role is not Role.MANUAL or not is_blocked(scene, vehicle):
        return None
    road = scene.road
    leader, _ = leader_in_lane(scene, vehicle)
    if leader.state.v_x <= MIN_LEADER_SPEED:
        return None
    target = road.lane_of(vehicle.state.y).other
    for other in _in_lane(road, scene.vehicles, target, vehicle.vid):
        if abs(other.state.x - vehicle.state.x) < road.vehicle_length:
            return None
    ahead = leader_in_lane(scene, vehicle, target)
    if ahead is not None and ahead[1] <= scene.mv.block_distance:
        if ahead[0].state.v_x < leader.state.v_x + scene.mv.block_margin:
            return None
    behind = follower_in_lane(scene, vehicle, target)
    if behind is None or behind[0].state.v_x <= MIN_LEADER_SPEED:
        v_f, d = vehicle.v_b, math.inf
    else:
        v_f, d = behind[0].state.v_x, max(behind[1], 0.0)
    obs = LaneChangeObservation(
        v_s=leader.state.v_x, v_c=vehicle.state.v_x, v_f=v_f, v_b=vehicle.v_b, d=d
    )
    return net_advantage(obs, scene.driver)


def _decision_due(scene: Scene, vehicle: Vehicle) -> bool:
    return not vehicle.changing_lane and scene.time >= vehicle.next_decision - 1e-9


def _mv_command(scene: Scene, vehicle: Vehicle) -> tuple[float, float, bool]:
    """(a_x, v_y, decision_evaluated) for a manual vehicle."""
    road, cfg = scene.road, scene.mv
    st = vehicle.state
    evaluated = False
    v_y = 0.0
    if vehicle.changing_lane:
        v_y = math.copysign(road.lateral_speed, road.lane_center(vehicle.lane_target) - st.y)
    elif _decision_due(scene, vehicle):
        trace = lane_change_intent(scene, vehicle)
        evaluated = trace is not None
        if evaluated and trace.decision is LaneDecision.CHANGE:
            v_y = -road.lateral_speed if st.y > 0 else road.lateral_speed

    v_des = vehicle.v_b
    lanes = {road.lane_of(st.y)}
    if vehicle.changing_lane:
        lanes.add(vehicle.lane_target)
    for lane in lanes:
        lead = leader_in_lane(scene, vehicle, lane)
        if lead is None:
            continue
        leader, gap = lead
        headway = gap / st.v_x if st.v_x > 0 else math.inf
        if headway < cfg.min_headway:
            v_des = min(v_des, leader.state.v_x)
    a_x = min(max(cfg.speed_gain * (v_des - st.v_x), -road.max_accel), road.max_accel)
    return a_x, v_y, evaluated


def mv_policy(scene: Scene, vehicle: Vehicle) -> tuple[float, float]:
    """(a_x, v_y) command for a manual vehicle in the current scene.

    A blocked MV re-evaluates the lane-change decision once per
    ``decision_period``; a change commits it to the other lane at full
    lateral speed until it reaches that lane's center. Longitudinally it
    tracks its best speed, or the leader's speed inside the minimum time
    headway.
    """
    a_x, v_y, _ = _mv_command(scene, vehicle)
    return a_x, v_y


# ---------------------------------------------------------------- stepping


def check_collision(scene: Scene) -> tuple[int, int] | None:
    road = scene.road
    vs = scene.vehicles
    for i in range(len(vs)):
        a = vs[i].state
        for j in range(i + 1, len(vs)):
            b = vs[j].state
            if abs(a.x - b.x) < road.vehicle_length and abs(a.y - b.y) < road.vehicle_width:
                return vs[i].vid, vs[j].vid
    return None


def stable_speed_reward(v_x: float, cfg: RewardConfig) -> float:
    if cfg.v_min < v_x <= cfg.v_target:
        return (v_x - cfg.v_min) / (cfg.v_target - cfg.v_min)
    if cfg.v_target < v_x <= cfg.v_max:
        return (cfg.v_max - v_x) / (cfg.v_max - cfg.v_target)
    return 0.0


def reward_components(scene: Scene, collided: bool, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    road = scene.road
    ego = scene.ego
    st = ego.state
    r_s = -1.0 if collided else 0.0
    r_v = stable_speed_reward(st.v_x, cfg)
    y_c = road.lane_center(road.lane_of(st.y))
    r_c = -1.0 if abs(st.y - y_c) >= cfg.center_tol else 0.0
    r_h = 0.0
    lead = leader_in_lane(scene, ego)
    if lead is not None and lead[1] <= road.sensing_range:
        leader, gap = lead
        gap = max(gap, 0.0)
        dv = abs(leader.state.v_x - st.v_x)
        headway = gap / dv if dv >= 0.01 else math.inf
        if headway < cfg.min_headway or gap < cfg.safe_distance:
            r_h = -1.0
    total = cfg.w_s * r_s + cfg.w_v * r_v + cfg.w_c * r_c + cfg.w_h * r_h
    return RewardBreakdown(r_s, r_v, r_c, r_h, total)


def _advance_manual(scene: Scene, vehicle: Vehicle) -> Vehicle:
    road = scene.road
    a_x, v_y, evaluated = _mv_command(scene, vehicle)
    changing, target, next_decision = vehicle.changing_lane, vehicle.lane_target, vehicle.next_decision
    if evaluated:
        next_decision = scene.time + scene.mv.decision_period
        if v_y != 0.0:
            changing, target = True, road.lane_of(vehicle.state.y).other
    state = euler_step(replace(vehicle.state, a_x=a_x, v_y=v_y), road.dt)
    if changing:
        center = road.lane_center(target)
        offset = state.y - center
        if abs(offset) < scene.mv.snap_tolerance or offset * v_y > 0:
            state = replace(state, y=center, v_y=0.0)
            changing = False
    return replace(vehicle, state=state, changing_lane=changing, lane_target=target, next_decision=next_decision)


def step(
    scene: Scene, action: EgoAction, reward_cfg: RewardConfig = RewardConfig()
) -> StepOutcome:
    """Advance every vehicle by one ``road.dt``."""
    if scene.terminal is not None:
        raise SceneError(f"scene already terminated ({scene.terminal.value})")
    road = scene.road
    a_x, v_y = action_command(action, road)
    ego = scene.ego
    ego = replace(ego, state=euler_step(replace(ego.state, a_x=a_x, v_y=v_y), road.dt))
    movers = [ego] + [_advance_manual(scene, v) for v in scene.manual]
    nxt = replace(scene, vehicles=tuple(movers), time=scene.time + road.dt, steps=scene.steps + 1)

    collided = check_collision(nxt) is not None
    terminal = None
    if collided:
        terminal = Terminal.COLLISION
    elif abs(ego.state.y) > road.offroad_bound:
        terminal = Terminal.OFF_ROAD
    elif ego.state.x >= road.length:
        terminal = Terminal.GOAL
    elif nxt.steps >= road.max_steps:
        terminal = Terminal.TIME_LIMIT
    nxt = replace(nxt, terminal=terminal)
    return StepOutcome(nxt, reward_components(nxt, collided, reward_cfg), terminal)


# ---------------------------------------------------------------- observation


def extract_affordances(scene: Scene) -> np.ndarray:
    """12 indicators in [-1, 1]: four (gap, relative speed) quadrant pairs then ego pose.

    Order: front-right, front-left, rear-right, rear-left, y, v_x, v_y,
    previous commanded a_x. A quadrant with nobody within sensing range
    reads (1.0, 0.0).
    """
    road = scene.road
    ego = scene.ego
    st = ego.state
    out = []
    for finder in (leader_in_lane, follower_in_lane):
        for lane in (Lane.RIGHT, Lane.LEFT):
            found = finder(scene, ego, lane)
            if found is None or found[1] > road.sensing_range:
                out += [1.0, 0.0]
                continue
            other, gap = found
            gap = min(max(gap, 0.0), road.sensing_range)
            rel = min(max(other.state.v_x - st.v_x, -road.speed_scale), road.speed_scale)
            out += [2.0 * gap / road.sensing_range - 1.0, rel / road.speed_scale]
    out += [
        st.y / road.lane_width,
        2.0 * st.v_x / road.speed_scale - 1.0,
        st.v_y / road.lateral_speed,
        st.a_x / road.max_accel,
    ]
    return np.clip(np.array(out), -1.0, 1.0)


# ---------------------------------------------------------------- traces


def scene_record(scene: Scene) -> dict:
    return {
        "t": round(scene.time, 10),
        "step": scene.steps,
        "vehicles": [
            {"id": v.vid, "role": v.role.value, "x": v.state.x, "y": v.state.y,
             "v_x": v.state.v_x, "v_y": v.state.v_y}
            for v in scene.vehicles
        ],
    }


def write_trace(path, scenes: Iterable[Scene]) -> None:
    with open(path, "w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene_record(scene)) + "\n")


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
