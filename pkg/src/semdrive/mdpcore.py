"""Observation vectors, reward shaping, and termination rules."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import simworld
from .advisor import MetaAction, one_hot
from .simworld import SceneSnapshot

K_WAYPOINTS = 5
OBS_DIM = 2 * K_WAYPOINTS + 3 + 5        # 18
CENTER_STD_WINDOW = 50                   # steps of rolling lateral-offset std
DEFAULT_MAX_STEPS = 2000
ROUTE_COMPLETE_FRACTION = 0.99

MPS_TO_KMH = 3.6


@dataclass
class RewardParams:
    """Reward shaping constants; speeds are km/h, distances meters."""

    min_speed: float = 0.0
    max_speed: float = 28.8
    target_speed: float = 25.0
    max_distance: float = 4.0
    max_std_center_lane: float = 0.4
    max_angle_center_lane: float = 90.0   # degrees
    penalty_reward: float = -10.0

    def __post_init__(self) -> None:
        if not (self.min_speed < self.target_speed < self.max_speed):
            raise ValueError("need min_speed < target_speed < max_speed")
        if self.max_distance <= 0:
            raise ValueError("max_distance must be > 0")


@dataclass(frozen=True)
class RewardBreakdown:
    collision: float
    efficiency: float
    lane: float

    @property
    def total(self) -> float:
        return self.collision + self.efficiency + self.lane


class TerminationReason(Enum):
    COLLISION = "collision"
    OFF_LANE = "off_lane"
    BAD_ANGLE = "bad_angle"
    ROUTE_COMPLETE = "route_complete"
    TIMEOUT = "timeout"
    OSCILLATION = "oscillation"


def build_observation(snapshot: SceneSnapshot, meta: MetaAction) -> np.ndarray:
    """Assemble the 18-dim policy input.

    The next K route waypoints (padded by repeating the last) are rotated
    into the ego frame, followed by the physical state (steering,
    throttle, speed) and the one-hot meta-action.
    """
    route = snapshot.route
    cum = simworld.route_arc_lengths(route)
    ahead = [wp for wp, s in zip(route, cum) if s > snapshot.progress]
    if not ahead:
        ahead = [route[-1]]
    while len(ahead) < K_WAYPOINTS:
        ahead.append(ahead[-1])
    ahead = np.asarray(ahead[:K_WAYPOINTS], dtype=float)

    ego = snapshot.ego
    c, s = math.cos(-ego.heading), math.sin(-ego.heading)
    rot = np.array([[c, -s], [s, c]])
    rel = (ahead - np.array([ego.x, ego.y])) @ rot.T

    obs = np.concatenate(
        [rel.ravel(), [ego.steering, ego.throttle, ego.speed], one_hot(meta)]
    )
    if not np.all(np.isfinite(obs)):
        raise ValueError("non-finite observation")
    return obs


class CenterStdTracker:
    """Rolling population std of the lateral offset over the last 50 steps."""

    def __init__(self, window: int = CENTER_STD_WINDOW):
        self._values: deque[float] = deque(maxlen=window)

    def push(self, d: float) -> float:
        self._values.append(float(d))
        return self.value

    @property
    def value(self) -> float:
        if len(self._values) < 2:
            return 0.0
        return float(np.std(np.asarray(self._values)))

    def reset(self) -> None:
        self._values.clear()


def efficiency_reward(speed_kmh: float, params: RewardParams) -> float:
    """Piecewise-linear speed term, maximized at the target speed."""
    if speed_kmh < params.min_speed:
        return 0.0
    if speed_kmh <= params.target_speed:
        return speed_kmh / params.target_speed
    return max(0.0, 1.0 - (speed_kmh - params.target_speed) / (params.max_speed - params.target_speed))


def lane_reward(d: float, theta: float, center_std: float, params: RewardParams) -> float:
    max_angle = math.radians(params.max_angle_center_lane)
    return (
        max(0.0, 1.0 - abs(d) / params.max_distance)
        * max(0.0, 1.0 - abs(theta) / max_angle)
        * max(0.0, 1.0 - center_std / params.max_std_center_lane)
    )


def compute_reward(
    prev: SceneSnapshot,
    action: tuple[float, float],
    next_snapshot: SceneSnapshot,
    params: RewardParams,
    center_std: float,
) -> RewardBreakdown:
    """Three-component step reward evaluated on the post-step snapshot."""
    if not math.isfinite(center_std):
        raise ValueError("non-finite center_std")
    collided = simworld.check_collision(next_snapshot.ego, next_snapshot.objects) is not None
    r_collision = params.penalty_reward if collided else 0.0
    r_eff = efficiency_reward(next_snapshot.ego.speed * MPS_TO_KMH, params)
    r_lane = lane_reward(
        next_snapshot.lateral_offset, next_snapshot.heading_error, center_std, params
    )
    return RewardBreakdown(collision=r_collision, efficiency=r_eff, lane=r_lane)


def check_termination(
    snapshot: SceneSnapshot,
    params: RewardParams,
    elapsed_steps: int,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> TerminationReason | None:
    """Terminal test in fixed priority order.

    collision > off_lane > bad_angle > route_complete > timeout.
    """
    if simworld.check_collision(snapshot.ego, snapshot.objects) is not None:
        return TerminationReason.COLLISION
    if abs(snapshot.lateral_offset) >= params.max_distance:
        return TerminationReason.OFF_LANE
    if abs(snapshot.heading_error) >= math.radians(params.max_angle_center_lane):
        return TerminationReason.BAD_ANGLE
    total = simworld.route_length(snapshot.route)
    if total > 0 and snapshot.progress >= ROUTE_COMPLETE_FRACTION * total:
        return TerminationReason.ROUTE_COMPLETE
    if elapsed_steps >= max_steps:
        return TerminationReason.TIMEOUT
    return None
