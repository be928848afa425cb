"""Semantic guidance: three-stage dialogue, meta-action conversion, backends.

The advisor reasons over a ground-truth scene snapshot in three ordered
stages (identification, prediction, planning), emits a natural-language
plan, and converts it into a discrete meta-action plus a fixed semantic
embedding in normalized action coordinates (longitudinal, lateral).
"""

from __future__ import annotations

import json
import math
import re
import time
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import simworld
from .simworld import SceneSnapshot, point_on_route, route_length

SENSING_RANGE = 50.0          # m
CONFLICT_HORIZON = 6.0        # s, rollout horizon for time-to-conflict
CONFLICT_STEP = 0.1           # s, rollout resolution
CONFLICT_MARGIN = 0.75        # m, extra clearance on top of the discs
MIN_EGO_PROJECTION_SPEED = 1.0  # m/s, floor so a stopped ego still projects ahead

PROTOCOL_VERSION = 1


class MetaAction(IntEnum):
    """The five high-level driving intents, in canonical index order."""

    SLOW = 0
    FAST = 1
    LEFT = 2
    RIGHT = 3
    IDLE = 4


# Fixed semantic embeddings (longitudinal, lateral); not learned.
EMBEDDINGS = np.array(
    [
        [-1.0, 0.0],   # SLOW
        [1.0, 0.0],    # FAST
        [0.0, -1.0],   # LEFT
        [0.0, 1.0],    # RIGHT
        [0.0, 0.0],    # IDLE
    ]
)


def one_hot(meta: MetaAction) -> np.ndarray:
    vec = np.zeros(5)
    vec[int(meta)] = 1.0
    return vec


def embedding(meta: MetaAction) -> np.ndarray:
    return EMBEDDINGS[int(meta)].copy()


# ---------------------------------------------------------------------------
# Dialogue records

@dataclass(frozen=True)
class IdentificationRecord:
    t: int
    text: str
    object_id: str | None
    kind: str | None
    bearing: float | None        # rad, relative to ego heading
    range_m: float | None

    @property
    def is_none(self) -> bool:
        return self.object_id is None


@dataclass(frozen=True)
class PredictionRecord:
    t: int
    text: str
    motion: str                  # approaching | receding | crossing | static
    time_to_conflict: float | None


@dataclass(frozen=True)
class PlanRecord:
    t: int
    text: str
    meta: MetaAction


@dataclass(frozen=True)
class CoTDialogue:
    t: int
    ident: IdentificationRecord
    pred: PredictionRecord
    plan: PlanRecord


@dataclass(frozen=True)
class ConvertResult:
    meta: MetaAction
    embedding: np.ndarray
    unparsed: bool = False


@dataclass
class AdvisorConfig:
    backend: str = "oracle"      # oracle | map_prior | remote | none
    query_interval: int = 10     # N, steps between backend queries
    endpoint: str = ""           # remote backend base URL
    deadline_ms: float = 1000.0
    fallback: MetaAction = MetaAction.IDLE
    # oracle rule thresholds (engineering constants)
    conflict_horizon_s: float = 3.0
    bend_angle_deg: float = 15.0
    bend_lookahead_m: float = 4.0
    slow_speed_fraction: float = 0.6
    target_speed_kmh: float = 25.0

    def __post_init__(self) -> None:
        if self.query_interval < 1:
            raise ValueError("query_interval must be >= 1")
        if self.deadline_ms <= 0:
            raise ValueError("deadline_ms must be > 0")


# ---------------------------------------------------------------------------
# Plan-text parsing (Convert)

_SYNONYMS: list[tuple[MetaAction, tuple[str, ...]]] = [
    (MetaAction.SLOW, ("slow", "brake", "decelerate", "yield")),
    (MetaAction.LEFT, ("turn left", "left")),
    (MetaAction.RIGHT, ("turn right", "right")),
    (MetaAction.FAST, ("fast", "accelerate", "speed up")),
    (MetaAction.IDLE, ("keep", "maintain", "idle", "continue")),
]


def convert(plan_text: str) -> ConvertResult:
    """Map a natural-language plan to (meta-action, embedding).

    Keyword scan over a fixed synonym table with priority
    SLOW > LEFT > RIGHT > FAST > IDLE; an unmatched sentence falls back
    to IDLE with ``unparsed`` set.
    """
    lowered = plan_text.lower()
    for meta, words in _SYNONYMS:
        for word in words:
            if re.search(r"\b" + re.escape(word) + r"\b", lowered):
                return ConvertResult(meta=meta, embedding=embedding(meta))
    return ConvertResult(meta=MetaAction.IDLE, embedding=embedding(MetaAction.IDLE), unparsed=True)


# ---------------------------------------------------------------------------
# Ground-truth reasoning used by the oracle backend

def _conflict_time(snapshot: SceneSnapshot, obj: simworld.CriticalObject) -> float | None:
    """Earliest time at which the object meets the ego's projected corridor.

    Both trajectories are rolled forward on a fine grid: the ego along its
    route at its current speed (floored so a stopped ego still looks
    ahead), the object at constant velocity.
    """
    ego = snapshot.ego
    v_ego = max(ego.speed, MIN_EGO_PROJECTION_SPEED)
    vx, vy = obj.velocity()
    clearance = simworld.EGO_RADIUS + obj.radius + CONFLICT_MARGIN
    n = int(CONFLICT_HORIZON / CONFLICT_STEP)
    for k in range(n + 1):
        t = k * CONFLICT_STEP
        ego_pos = point_on_route(snapshot.route, snapshot.progress + v_ego * t)
        ox = obj.x + vx * t
        oy = obj.y + vy * t
        if math.hypot(ego_pos[0] - ox, ego_pos[1] - oy) <= clearance:
            return t
    return None


def identify(snapshot: SceneSnapshot) -> IdentificationRecord:
    """Pick the most critical object: earliest conflict, then nearest."""
    ego = snapshot.ego
    candidates = []
    for obj in snapshot.objects:
        dist = math.hypot(obj.x - ego.x, obj.y - ego.y)
        if dist > SENSING_RANGE:
            continue
        ttc = _conflict_time(snapshot, obj)
        key = (ttc if ttc is not None else math.inf, dist, obj.id)
        candidates.append((key, obj, dist))
    if not candidates:
        return IdentificationRecord(
            t=snapshot.t,
            text="No critical object is present within sensing range.",
            object_id=None, kind=None, bearing=None, range_m=None,
        )
    _, obj, dist = min(candidates, key=lambda c: c[0])
    bearing = simworld.wrap_angle(math.atan2(obj.y - ego.y, obj.x - ego.x) - ego.heading)
    side = "left" if bearing < -0.1 else ("right" if bearing > 0.1 else "ahead")
    text = (
        f"The most critical object is {obj.spec.kind} {obj.id}, "
        f"{dist:.1f} m away to the {side}."
    )
    return IdentificationRecord(
        t=snapshot.t, text=text, object_id=obj.id, kind=obj.spec.kind,
        bearing=bearing, range_m=dist,
    )


def predict(snapshot: SceneSnapshot, ident: IdentificationRecord) -> PredictionRecord:
    """Constant-velocity extrapolation of the identified object."""
    if ident.t != snapshot.t:
        raise ValueError(f"identification is for step {ident.t}, snapshot is step {snapshot.t}")
    if ident.is_none:
        return PredictionRecord(
            t=snapshot.t, text="Nothing to track; no conflict is expected.",
            motion="static", time_to_conflict=None,
        )
    obj = next(o for o in snapshot.objects if o.id == ident.object_id)
    ego = snapshot.ego
    if obj.speed < 0.1:
        motion = "static"
    else:
        to_ego = math.atan2(ego.y - obj.y, ego.x - obj.x)
        rel = abs(simworld.wrap_angle(obj.heading - to_ego))
        if rel < math.radians(60):
            motion = "approaching"
        elif rel > math.radians(120):
            motion = "receding"
        else:
            motion = "crossing"
    ttc = _conflict_time(snapshot, obj)
    if ttc is None:
        text = f"The object is {motion}; no conflict is expected within {CONFLICT_HORIZON:.0f} s."
    else:
        text = f"The object is {motion}; estimated time to conflict {ttc:.1f} s."
    return PredictionRecord(t=snapshot.t, text=text, motion=motion, time_to_conflict=ttc)


def _upcoming_bend(snapshot: SceneSnapshot, lookahead_m: float) -> float:
    """Cumulative signed route heading change over the next ``lookahead_m``."""
    route = snapshot.route
    cum = simworld.route_arc_lengths(route)
    s0 = snapshot.progress
    total = 0.0
    prev_heading = None
    for i in range(len(route) - 1):
        if cum[i + 1] <= s0:
            continue
        if cum[i] > s0 + lookahead_m:
            break
        seg = route[i + 1] - route[i]
        h = math.atan2(seg[1], seg[0])
        if prev_heading is not None:
            total += simworld.wrap_angle(h - prev_heading)
        prev_heading = h
    return total


PLAN_TEXTS = {
    MetaAction.SLOW: "Slow down and yield until the conflict clears.",
    MetaAction.FAST: "Accelerate to regain the target speed.",
    MetaAction.LEFT: "Turn left to follow the upcoming bend.",
    MetaAction.RIGHT: "Turn right to follow the upcoming bend.",
    MetaAction.IDLE: "Maintain the current course with minimal control input.",
}


def plan(
    snapshot: SceneSnapshot,
    ident: IdentificationRecord,
    pred: PredictionRecord,
    config: AdvisorConfig,
    use_conflict_rule: bool = True,
) -> PlanRecord:
    """Rule cascade over the prediction and the route geometry.

    With ``use_conflict_rule`` disabled the cascade sees topology only,
    which is the map-prior baseline behavior.
    """
    if ident.t != snapshot.t or pred.t != snapshot.t:
        raise ValueError("stage records must come from the same snapshot")
    meta = MetaAction.IDLE
    ttc = pred.time_to_conflict
    bend = _upcoming_bend(snapshot, config.bend_lookahead_m)
    target_mps = config.target_speed_kmh / 3.6
    if use_conflict_rule and ttc is not None and ttc <= config.conflict_horizon_s:
        meta = MetaAction.SLOW
    elif abs(bend) > math.radians(config.bend_angle_deg):
        meta = MetaAction.RIGHT if bend > 0 else MetaAction.LEFT
    elif snapshot.ego.speed < config.slow_speed_fraction * target_mps:
        meta = MetaAction.FAST
    return PlanRecord(t=snapshot.t, text=PLAN_TEXTS[meta], meta=meta)


# ---------------------------------------------------------------------------
# Backends

class OracleBackend:
    """Scripted ground-truth advisor; a pure function of the snapshot."""

    uses_conflict_rule = True

    def __init__(self, config: AdvisorConfig):
        self.config = config

    def run(self, snapshot: SceneSnapshot) -> CoTDialogue:
        ident = identify(snapshot)
        pred = predict(snapshot, ident)
        plan_rec = plan(snapshot, ident, pred, self.config, self.uses_conflict_rule)
        return CoTDialogue(t=snapshot.t, ident=ident, pred=pred, plan=plan_rec)


class MapPriorBackend(OracleBackend):
    """Topology-only advisor: the conflict rule is removed from the cascade."""

    uses_conflict_rule = False


class RemoteError(RuntimeError):
    """Transport, deadline, or schema failure talking to a remote advisor."""


def snapshot_payload(snapshot: SceneSnapshot, route_preview: int = 10) -> dict:
    """Wire form of a snapshot for the bridge protocol."""
    ego = snapshot.ego
    cum = simworld.route_arc_lengths(snapshot.route)
    ahead = [
        [float(x), float(y)]
        for (x, y), s in zip(snapshot.route, cum)
        if s >= snapshot.progress
    ][:route_preview]
    return {
        "ego": {
            "x": ego.x, "y": ego.y, "heading": ego.heading, "speed": ego.speed,
            "steering": ego.steering, "throttle": ego.throttle,
        },
        "objects": [
            {
                "id": o.id, "kind": o.spec.kind, "x": o.x, "y": o.y,
                "heading": o.heading, "speed": o.speed, "radius": o.radius,
            }
            for o in snapshot.objects
        ],
        "route_preview": ahead,
    }


class RemoteBackend:
    """HTTP client for the three-stage bridge protocol."""

    def __init__(self, config: AdvisorConfig):
        if not config.endpoint:
            raise ValueError("remote backend needs an endpoint")
        self.config = config

    def _call(self, stage: str, snapshot: SceneSnapshot, context: dict) -> dict:
        import requests

        body = {
            "v": PROTOCOL_VERSION,
            "stage": stage,
            "snapshot": snapshot_payload(snapshot),
            "context": context,
        }
        url = self.config.endpoint.rstrip("/") + f"/v1/{stage}"
        deadline = self.config.deadline_ms / 1000.0
        try:
            resp = requests.post(url, json=body, timeout=deadline)
        except requests.RequestException as exc:
            raise RemoteError(f"{stage}: transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteError(f"{stage}: HTTP {resp.status_code}")
        try:
            reply = resp.json()
        except json.JSONDecodeError as exc:
            raise RemoteError(f"{stage}: reply is not JSON") from exc
        if not isinstance(reply, dict) or "text" not in reply or "structured" not in reply:
            raise RemoteError(f"{stage}: reply violates the protocol schema")
        return reply

    def run(self, snapshot: SceneSnapshot) -> CoTDialogue:
        t = snapshot.t
        ident_reply = self._call("identify", snapshot, {})
        s = ident_reply["structured"]
        ident = IdentificationRecord(
            t=t, text=str(ident_reply["text"]),
            object_id=s.get("object_id"), kind=s.get("kind"),
            bearing=s.get("bearing"), range_m=s.get("range_m"),
        )
        pred_reply = self._call("predict", snapshot, {"ident": ident_reply["structured"]})
        sp = pred_reply["structured"]
        pred = PredictionRecord(
            t=t, text=str(pred_reply["text"]),
            motion=str(sp.get("motion", "static")),
            time_to_conflict=sp.get("time_to_conflict"),
        )
        plan_reply = self._call(
            "plan", snapshot,
            {"ident": ident_reply["structured"], "pred": pred_reply["structured"]},
        )
        meta = convert(str(plan_reply["text"])).meta
        plan_rec = PlanRecord(t=t, text=str(plan_reply["text"]), meta=meta)
        return CoTDialogue(t=t, ident=ident, pred=pred, plan=plan_rec)


def make_backend(config: AdvisorConfig):
    if config.backend == "oracle":
        return OracleBackend(config)
    if config.backend == "map_prior":
        return MapPriorBackend(config)
    if config.backend == "remote":
        return RemoteBackend(config)
    if config.backend == "none":
        return None
    raise ValueError(f"unknown advisor backend {config.backend!r}")


# ---------------------------------------------------------------------------
# Scheduling

@dataclass
class Advisor:
    """Per-episode advisor cache querying its backend every N steps."""

    config: AdvisorConfig
    backend: object = field(init=False)
    _meta: MetaAction = field(init=False)
    _embedding: np.ndarray = field(init=False)
    query_count: int = field(init=False, default=0)
    fault_count: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        self.backend = make_backend(self.config)
        self.reset()

    def reset(self) -> None:
        self._meta = MetaAction.IDLE
        self._embedding = embedding(MetaAction.IDLE)

    def advise(
        self, snapshot: SceneSnapshot, t: int
    ) -> tuple[MetaAction, np.ndarray, CoTDialogue | None]:
        """Return the active meta-action, refreshing the cache on schedule.

        Backend failures never propagate into the control loop: the
        configured fallback meta-action is cached instead and the fault
        is counted.
        """
        if self.backend is None:
            return self._meta, self._embedding, None
        if t % self.config.query_interval != 0:
            return self._meta, self._embedding, None
        self.query_count += 1
        try:
            dialogue = self.backend.run(snapshot)
        except RemoteError:
            self.fault_count += 1
            self._meta = self.config.fallback
            self._embedding = embedding(self._meta)
            return self._meta, self._embedding, None
        result = convert(dialogue.plan.text)
        self._meta = result.meta
        self._embedding = result.embedding
        return self._meta, self._embedding, dialogue
