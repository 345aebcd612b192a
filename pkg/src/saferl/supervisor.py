"""Short-horizon action shield for the ego vehicle.

Before an action is executed, every manual vehicle's lane-change decision
is predicted with the regret model, all vehicles are rolled forward for
``t_pred`` seconds, and the action is vetoed if the ego is predicted to
come within the safety gates of an MV or to leave the road.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

from .agent import Experience
from .highway import (
    EgoAction,
    Lane,
    Scene,
    VehicleState,
    action_command,
    euler_step,
    extract_affordances,
    lane_change_intent,
)
from .regret import LaneDecision, RegretParams

# tried in this order when the per-category replacement is itself unsafe
PREFERENCE = (
    EgoAction.MAINTAIN,
    EgoAction.DECELERATE,
    EgoAction.ACCELERATE,
    EgoAction.LANE_LEFT,
    EgoAction.LANE_RIGHT,
)


@dataclass(frozen=True)
class SupervisorConfig:
    t_pred: float = 0.7
    safe_distance: float = 18.0
    lateral_gate: float = 2.5
    dt: float = 0.1
    offroad_bound: float = 2.0
    enabled: bool = True
    escape_horizon: float = 3.0  # only used to rank actions when none passes the check

    def __post_init__(self):
        if self.t_pred <= 0 or self.dt <= 0:
            raise ValueError("t_pred and dt must be positive")
        if min(self.safe_distance, self.lateral_gate, self.offroad_bound, self.escape_horizon) <= 0:
            raise ValueError("thresholds must be positive")

    @property
    def horizon_steps(self) -> int:
        return math.ceil(self.t_pred / self.dt - 1e-9)


class VerdictKind(enum.Enum):
    SAFE = "safe"
    COLLISION = "unsafe_collision"
    OFF_ROAD = "unsafe_offroad"


@dataclass(frozen=True)
class SafetyVerdict:
    kind: VerdictKind
    vehicle: int | None = None
    step: int | None = None

    @property
    def safe(self) -> bool:
        return self.kind is VerdictKind.SAFE


SAFE = SafetyVerdict(VerdictKind.SAFE)


@dataclass(frozen=True)
class SupervisionResult:
    executed: EgoAction
    vetoed: tuple[EgoAction, SafetyVerdict] | None = None
    unsafe_experience: Experience | None = None


def _with_driver(scene: Scene, params: RegretParams | None) -> Scene:
    return scene if params is None or params == scene.driver else replace(scene, driver=params)


def _roll(state: VehicleState, steps: int, dt: float, stop_y: float | None = None) -> list[tuple[float, float]]:
    """Constant-command rollout; lateral motion halts once ``stop_y`` is reached."""
    out = []
    for _ in range(steps):
        state = euler_step(state, dt)
        if stop_y is not None and state.v_y != 0 and (state.y - stop_y) * state.v_y >= 0:
            state = replace(state, y=stop_y, v_y=0.0)
        out.append((state.x, state.y))
    return out


def _mv_lateral(scene: Scene, vehicle) -> tuple[float, float | None]:
    """Predicted lateral speed of an MV and the lane center where it stops."""
    road = scene.road
    if vehicle.changing_lane:
        target = road.lane_center(vehicle.lane_target)
    else:
        trace = lane_change_intent(scene, vehicle)
        if trace is None or trace.decision is not LaneDecision.CHANGE:
            return 0.0, None
        target = road.lane_center(road.lane_of(vehicle.state.y).other)
    return math.copysign(road.lateral_speed, target - vehicle.state.y), target


def predict_mv_trajectories(
    scene: Scene, params: RegretParams | None = None, cfg: SupervisorConfig = SupervisorConfig(), steps: int | None = None
) -> dict[int, list[tuple[float, float]]]:
    """Constant-speed positions of every MV, drifting laterally if a lane change is predicted."""
    scene = _with_driver(scene, params)
    steps = cfg.horizon_steps if steps is None else steps
    out = {}
    for mv in scene.manual:
        v_y, stop = _mv_lateral(scene, mv)
        start = replace(mv.state, a_x=0.0, v_y=v_y)
        out[mv.vid] = _roll(start, steps, cfg.dt, stop)
    return out


def predict_ego_trajectory(
    scene: Scene, action: EgoAction, cfg: SupervisorConfig = SupervisorConfig(), steps: int | None = None
) -> list[tuple[float, float]]:
    a_x, v_y = action_command(action, scene.road)
    steps = cfg.horizon_steps if steps is None else steps
    return _roll(replace(scene.ego.state, a_x=a_x, v_y=v_y), steps, cfg.dt)


def _verdict(ego_path, mv_paths, cfg: SupervisorConfig) -> SafetyVerdict:
    for k, (x, y) in enumerate(ego_path, start=1):
        for vid, path in mv_paths.items():
            mx, my = path[k - 1]
            if abs(my - y) < cfg.lateral_gate and abs(mx - x) < cfg.safe_distance:
                return SafetyVerdict(VerdictKind.COLLISION, vid, k)
        if abs(y) > cfg.offroad_bound:
            return SafetyVerdict(VerdictKind.OFF_ROAD, None, k)
    return SAFE


def check_action(
    scene: Scene, action: EgoAction, params: RegretParams | None = None, cfg: SupervisorConfig = SupervisorConfig()
) -> SafetyVerdict:
    """First predicted violation of the longitudinal/lateral gates or the road edge."""
    mv_paths = predict_mv_trajectories(scene, params, cfg)
    return _verdict(predict_ego_trajectory(scene, action, cfg), mv_paths, cfg)


def escape_clearance(
    scene: Scene, action: EgoAction, params: RegretParams | None = None, cfg: SupervisorConfig = SupervisorConfig()
) -> float:
    """Worst rectangle clearance over ``escape_horizon`` when committing to ``action``.

    Lane changes are followed through to the next lane center. Leaving the
    road scores ``-inf``. Used only to pick a fallback when every action
    fails the short-horizon check.
    """
    road = scene.road
    steps = math.ceil(cfg.escape_horizon / cfg.dt - 1e-9)
    a_x, v_y = action_command(action, road)
    ego = scene.ego.state
    stop = None
    if v_y != 0:
        here = road.lane_of(ego.y)
        lane = here if (road.lane_center(here) - ego.y) * v_y > 0 else here.other
        if (lane is Lane.LEFT) != (v_y > 0) or abs(road.lane_center(lane)) > cfg.offroad_bound:
            return -math.inf
        stop = road.lane_center(lane)
    ego_path = _roll(replace(ego, a_x=a_x, v_y=v_y), steps, cfg.dt, stop)
    mv_paths = predict_mv_trajectories(scene, params, cfg, steps=steps)
    worst = math.inf
    for k, (x, y) in enumerate(ego_path):
        if abs(y) > cfg.offroad_bound:
            return -math.inf
        for path in mv_paths.values():
            mx, my = path[k]
            worst = min(worst, max(abs(mx - x) - road.vehicle_length, abs(my - y) - road.vehicle_width))
    return worst


def category_replacement(action: EgoAction, verdict: SafetyVerdict) -> EgoAction:
    if action in (EgoAction.LANE_LEFT, EgoAction.LANE_RIGHT):
        return EgoAction.MAINTAIN
    return EgoAction.DECELERATE


def replace_action(
    action: EgoAction,
    verdict: SafetyVerdict,
    scene: Scene,
    params: RegretParams | None = None,
    cfg: SupervisorConfig = SupervisorConfig(),
) -> EgoAction:
    """Safe substitute for a vetoed action.

    Lane changes become lane keeping and speed-ups become slow-downs. If
    that substitute is unsafe too, the first safe action in
    :data:`PREFERENCE` is taken; if none is safe, the action with the
    largest escape clearance wins.
    """
    first = category_replacement(action, verdict)
    if check_action(scene, first, params, cfg).safe:
        return first
    for candidate in PREFERENCE:
        if candidate is not action and check_action(scene, candidate, params, cfg).safe:
            return candidate
    scores = {a: escape_clearance(scene, a, params, cfg) for a in PREFERENCE}
    return max(PREFERENCE, key=lambda a: scores[a])


def supervise(
    scene: Scene,
    proposed: EgoAction,
    params: RegretParams | None = None,
    cfg: SupervisorConfig = SupervisorConfig(),
    r_col: float = -2000.0,
) -> SupervisionResult:
    """Check ``proposed``; on a veto return the replacement and the penalised experience."""
    proposed = EgoAction(proposed)
    if not cfg.enabled:
        return SupervisionResult(proposed)
    verdict = check_action(scene, proposed, params, cfg)
    if verdict.safe:
        return SupervisionResult(proposed)
    executed = replace_action(proposed, verdict, scene, params, cfg)
    unsafe = Experience(extract_affordances(scene), int(proposed), None, r_col)
    return SupervisionResult(executed, (proposed, verdict), unsafe)


def veto_record(epoch: int, step: int, result: SupervisionResult) -> str:
    """One JSON line for the veto log."""
    original, verdict = result.vetoed
    return json.dumps(
        {
            "epoch": epoch,
            "step": step,
            "original": original.name,
            "verdict": verdict.kind.value,
            "vehicle": verdict.vehicle,
            "predicted_step": verdict.step,
            "replacement": result.executed.name,
        }
    )
