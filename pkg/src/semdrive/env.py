"""Episode-level environment tying the world to rewards and termination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mdpcore, simworld
from .advisor import MetaAction
from .mdpcore import (
    CenterStdTracker,
    RewardBreakdown,
    RewardParams,
    TerminationReason,
    build_observation,
)
from .simworld import SceneSnapshot, World, WorldMap


@dataclass
class StepResult:
    snapshot: SceneSnapshot
    reward: RewardBreakdown
    terminal: TerminationReason | None
    center_std: float


class DrivingEnv:
    """Single-owner episode context over one map.

    Routes are cycled deterministically across resets; the rolling
    center-lane std accumulator is owned here.
    """

    def __init__(
        self,
        world_map: WorldMap,
        reward_params: RewardParams | None = None,
        max_steps: int = mdpcore.DEFAULT_MAX_STEPS,
        dt: float = simworld.DT,
    ):
        self.world_map = world_map
        self.params = reward_params or RewardParams()
        self.max_steps = max_steps
        self.world = World(world_map, route_index=0, dt=dt)
        self._tracker = CenterStdTracker()
        self._episode_index = -1
        self._snapshot: SceneSnapshot | None = None
        self.elapsed = 0

    @property
    def snapshot(self) -> SceneSnapshot:
        if self._snapshot is None:
            raise RuntimeError("environment not reset")
        return self._snapshot

    @property
    def route_length(self) -> float:
        return simworld.route_length(self.world.route)

    def reset(self, route_index: int | None = None) -> SceneSnapshot:
        self._episode_index += 1
        if route_index is None:
            route_index = self._episode_index % len(self.world_map.routes)
        self._snapshot = self.world.reset(route_index)
        self._tracker.reset()
        self._tracker.push(self._snapshot.lateral_offset)
        self.elapsed = 0
        return self._snapshot

    def observe(self, meta: MetaAction) -> np.ndarray:
        return build_observation(self.snapshot, meta)

    def step(self, action: tuple[float, float]) -> StepResult:
        prev = self.snapshot
        nxt = self.world.step(action)
        self.elapsed += 1
        center_std = self._tracker.push(nxt.lateral_offset)
        reward = mdpcore.compute_reward(prev, action, nxt, self.params, center_std)
        terminal = mdpcore.check_termination(nxt, self.params, self.elapsed, self.max_steps)
        self._snapshot = nxt
        return StepResult(snapshot=nxt, reward=reward, terminal=terminal, center_std=center_std)
