"""Deterministic 2D driving world: maps, ego kinematics, scripted objects.

Coordinate convention: headings are measured counter-clockwise in the
(x, y) plane. Positive steering turns the vehicle toward the CCW normal
of its travel direction, which this package labels RIGHT (screen-style
axes); the signed lateral offset ``d`` is positive on the opposite
(LEFT) side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

TWO_PI = 2.0 * math.pi

# Vehicle model constants (kinematic bicycle).
WHEELBASE = 2.5           # m
MAX_STEER_RAD = math.radians(35.0)
MAX_ACCEL = 3.0           # m/s^2
MAX_SPEED = 15.0          # m/s, physical cap
EGO_RADIUS = 1.0          # m, collision disc
DT = 0.05                 # s, control step

MAP_FORMAT_VERSION = 1

BEHAVIORS = ("stationary", "constant-velocity", "scripted-cut-in", "scripted-crossing")


class MapError(ValueError):
    """Raised when a map document fails parsing or validation."""


def wrap_angle(h: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = h % TWO_PI
    if w > math.pi:
        w -= TWO_PI
    return w


@dataclass(frozen=True)
class CriticalObjectSpec:
    id: str
    kind: str                    # "vehicle" | "pedestrian"
    x: float
    y: float
    heading: float
    speed: float                 # m/s
    radius: float
    behavior: str                # one of BEHAVIORS
    trigger_distance: float = 0.0
    # scripted behavior parameters
    shift: float = 0.0           # m, lateral displacement for cut-in (+ = CCW normal)
    shift_time: float = 2.0      # s, time over which the shift is applied

    def validate(self) -> None:
        if self.radius <= 0:
            raise MapError(f"object {self.id}: radius must be > 0")
        if self.kind not in ("vehicle", "pedestrian"):
            raise MapError(f"object {self.id}: unknown kind {self.kind!r}")
        if self.behavior not in BEHAVIORS:
            raise MapError(f"object {self.id}: unknown behavior {self.behavior!r}")


@dataclass
class CriticalObject:
    """Runtime state of a scripted object.

    Scripted behaviors are pure functions of (spec, time since trigger),
    so replaying the same ego trajectory reproduces object motion exactly.
    """

    spec: CriticalObjectSpec
    x: float
    y: float
    heading: float
    speed: float
    triggered: bool = False
    phase_time: float = 0.0

    @classmethod
    def from_spec(cls, spec: CriticalObjectSpec) -> "CriticalObject":
        return cls(spec=spec, x=spec.x, y=spec.y, heading=spec.heading, speed=spec.speed)

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def radius(self) -> float:
        return self.spec.radius

    def velocity(self) -> tuple[float, float]:
        return (self.speed * math.cos(self.heading), self.speed * math.sin(self.heading))


@dataclass
class EgoState:
    x: float
    y: float
    heading: float               # rad, (-pi, pi]
    speed: float = 0.0           # m/s, >= 0
    steering: float = 0.0        # [-1, 1], last applied
    throttle: float = 0.0        # [-1, 1], last applied

    def __post_init__(self) -> None:
        self.heading = wrap_angle(self.heading)


@dataclass(frozen=True)
class WorldMap:
    map_id: str
    lane_width: float
    lanes: list[np.ndarray]      # each (n, 2) centerline polyline
    routes: list[np.ndarray]     # each (n, 2) waypoint sequence
    object_spawns: list[CriticalObjectSpec]


@dataclass(frozen=True)
class CollisionEvent:
    object_id: str
    distance: float


@dataclass
class SceneSnapshot:
    t: int
    ego: EgoState
    objects: list[CriticalObject]
    route: np.ndarray
    lateral_offset: float        # d, m, + = left of travel
    heading_error: float         # theta, rad
    progress: float              # s, m along the route


# ---------------------------------------------------------------------------
# Map loading

def _as_polyline(raw, what: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise MapError(f"{what}: expected >= 2 points of (x, y)")
    if not np.all(np.isfinite(arr)):
        raise MapError(f"{what}: non-finite coordinate")
    deltas = np.linalg.norm(np.diff(arr, axis=0), axis=1)
    if np.any(deltas == 0.0):
        idx = int(np.argmin(deltas))
        raise MapError(f"{what}: repeated point at index {idx}")
    return arr


def load_map(document: str | dict) -> WorldMap:
    """Parse and validate a map document (JSON text or dict)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MapError(f"map document does not parse: {exc}") from exc
    else:
        doc = document

    for key in ("format", "map_id", "lane_width", "lanes", "routes", "objects"):
        if key not in doc:
            raise MapError(f"missing map key {key!r}")
    if doc["format"] != MAP_FORMAT_VERSION:
        raise MapError(f"unsupported map format {doc['format']!r} (expected {MAP_FORMAT_VERSION})")

    lane_width = float(doc["lane_width"])
    if lane_width <= 0:
        raise MapError("lane_width must be > 0")

    lanes = [_as_polyline(raw, f"lane {i}") for i, raw in enumerate(doc["lanes"])]
    routes = [_as_polyline(raw, f"route {i}") for i, raw in enumerate(doc["routes"])]

    half = lane_width / 2.0
    for ri, route in enumerate(routes):
        for wi, wp in enumerate(route):
            dist = min(_point_polyline_distance(wp, lane) for lane in lanes)
            if dist > half + 1e-9:
                raise MapError(
                    f"route {ri} waypoint {wi} at ({wp[0]:.2f}, {wp[1]:.2f}) lies "
                    f"{dist:.2f} m off every lane centerline (limit {half:.2f})"
                )

    spawns = []
    for raw in doc["objects"]:
        spec = CriticalObjectSpec(
            id=str(raw["id"]),
            kind=raw["kind"],
            x=float(raw["x"]),
            y=float(raw["y"]),
            heading=wrap_angle(float(raw.get("heading", 0.0))),
            speed=float(raw.get("speed", 0.0)),
            radius=float(raw.get("radius", 0.5)),
            behavior=raw["behavior"],
            trigger_distance=float(raw.get("trigger_distance", 0.0)),
            shift=float(raw.get("shift", 0.0)),
            shift_time=float(raw.get("shift_time", 2.0)),
        )
        spec.validate()
        spawns.append(spec)

    return WorldMap(
        map_id=str(doc["map_id"]),
        lane_width=lane_width,
        lanes=lanes,
        routes=routes,
        object_spawns=spawns,
    )


def bundled_map_ids() -> list[str]:
    return ["map_seen", "map_unseen"]


def load_bundled_map(map_id: str) -> WorldMap:
    """Load one of the two packaged maps (``map_seen`` or ``map_unseen``)."""
    if map_id not in bundled_map_ids():
        raise MapError(f"unknown bundled map {map_id!r}; available: {bundled_map_ids()}")
    text = resources.files("semdrive").joinpath(f"maps/{map_id}.json").read_text()
    return load_map(text)


# ---------------------------------------------------------------------------
# Geometry

def _point_polyline_distance(p, polyline: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    best = math.inf
    for a, b in zip(polyline[:-1], polyline[1:]):
        ab = b - a
        denom = float(ab @ ab)
        t = float((p - a) @ ab) / denom
        t = min(1.0, max(0.0, t))
        proj = a + t * ab
        best = min(best, float(np.linalg.norm(p - proj)))
    return best


def route_arc_lengths(route: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(route, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def route_length(route: np.ndarray) -> float:
    return float(route_arc_lengths(route)[-1])


def lane_frame(ego: EgoState, route: np.ndarray) -> tuple[float, float, float]:
    """Project the ego onto the route.

    Returns (d, theta, s): signed lateral offset (+ = left of travel),
    heading error wrapped to (-pi, pi], and arc-length progress. Ties at
    shared segment vertices resolve toward the later segment.
    """
    route = np.asarray(route, dtype=float)
    if route.ndim != 2 or route.shape[0] < 2:
        raise ValueError("route needs >= 2 waypoints")

    p = np.array([ego.x, ego.y])
    cum = route_arc_lengths(route)
    a = route[:-1]
    ab = route[1:] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    dist = np.linalg.norm(p - proj, axis=1)
    # later segment wins exact ties at shared vertices
    near = np.flatnonzero(dist <= dist.min() + 1e-12)
    i = int(near[-1])
    seg_len = math.sqrt(denom[i])
    u = ab[i] / seg_len
    off = p - proj[i]
    d = float(off[0] * u[1] - off[1] * u[0])      # cross(offset, u): + = left
    theta = wrap_angle(ego.heading - math.atan2(u[1], u[0]))
    s = float(cum[i] + t[i] * seg_len)
    return d, theta, s


def point_on_route(route: np.ndarray, s: float) -> np.ndarray:
    """Position at arc length ``s`` (clamped to the route extent)."""
    cum = route_arc_lengths(route)
    s = min(max(s, 0.0), float(cum[-1]))
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(i, len(route) - 2)
    seg = route[i + 1] - route[i]
    seg_len = float(np.linalg.norm(seg))
    t = (s - cum[i]) / seg_len if seg_len > 0 else 0.0
    return route[i] + t * seg


# ---------------------------------------------------------------------------
# Dynamics

def step_dynamics(ego: EgoState, action: tuple[float, float], dt: float) -> EgoState:
    """Kinematic bicycle step with semi-implicit Euler.

    ``action`` is (throttle, steering), both in [-1, 1]. Negative throttle
    brakes at |throttle| * MAX_ACCEL; speed is clamped to [0, MAX_SPEED].
    """
    throttle, steering = float(action[0]), float(action[1])
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not all(map(math.isfinite, (ego.x, ego.y, ego.heading, ego.speed, throttle, steering))):
        raise ValueError("non-finite dynamics input")
    throttle = min(1.0, max(-1.0, throttle))
    steering = min(1.0, max(-1.0, steering))

    # semi-implicit Euler: speed first, pose from the updated speed
    accel = throttle * MAX_ACCEL
    speed = min(max(ego.speed + accel * dt, 0.0), MAX_SPEED)
    yaw_rate = (speed / WHEELBASE) * math.tan(steering * MAX_STEER_RAD)
    x = ego.x + speed * math.cos(ego.heading) * dt
    y = ego.y + speed * math.sin(ego.heading) * dt
    heading = wrap_angle(ego.heading + yaw_rate * dt)
    return EgoState(x=x, y=y, heading=heading, speed=speed, steering=steering, throttle=throttle)


def advance_objects(
    objects: list[CriticalObject], ego: EgoState, dt: float, rng: np.random.Generator | None = None
) -> list[CriticalObject]:
    """Advance every object one step per its behavior script.

    Scripted cut-in / crossing behaviors arm when the ego comes within
    ``trigger_distance``; thereafter motion depends only on phase time,
    so a replayed ego trajectory reproduces the scene exactly. ``rng`` is
    accepted for interface symmetry; all bundled behaviors are
    deterministic.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    out = []
    for obj in objects:
        out.append(_advance_one(obj, ego, dt))
    return out


def _advance_one(obj: CriticalObject, ego: EgoState, dt: float) -> CriticalObject:
    spec = obj.spec
    if spec.behavior == "stationary":
        return obj

    if spec.behavior == "constant-velocity":
        vx, vy = obj.velocity()
        return replace(obj, x=obj.x + vx * dt, y=obj.y + vy * dt)

    # trigger-armed scripts
    triggered = obj.triggered
    if not triggered:
        if math.hypot(ego.x - obj.x, ego.y - obj.y) <= spec.trigger_distance:
            triggered = True
        else:
            return obj

    phase = obj.phase_time + dt
    if spec.behavior == "scripted-crossing":
        # walk along own heading indefinitely once triggered
        x = spec.x + spec.speed * math.cos(spec.heading) * phase
        y = spec.y + spec.speed * math.sin(spec.heading) * phase
        return replace(obj, x=x, y=y, speed=spec.speed, triggered=True, phase_time=phase)

    # scripted-cut-in: drive forward while shifting laterally over shift_time
    frac = min(phase / spec.shift_time, 1.0) if spec.shift_time > 0 else 1.0
    fx, fy = math.cos(spec.heading), math.sin(spec.heading)
    nx, ny = -fy, fx                                   # CCW normal of travel
    forward = spec.speed * phase
    lateral = spec.shift * frac
    x = spec.x + fx * forward + nx * lateral
    y = spec.y + fy * forward + ny * lateral
    return replace(obj, x=x, y=y, speed=spec.speed, triggered=True, phase_time=phase)


def check_collision(
    ego: EgoState, objects: list[CriticalObject], ego_radius: float = EGO_RADIUS
) -> CollisionEvent | None:
    """Disc-disc collision test; tangency counts as a collision.

    When several objects overlap the ego the nearest one (ties broken by
    id) is reported, so the result does not depend on list order.
    """
    hits = []
    for obj in objects:
        dist = math.hypot(ego.x - obj.x, ego.y - obj.y)
        if dist <= ego_radius + obj.radius:
            hits.append((dist, obj.id))
    if not hits:
        return None
    dist, oid = min(hits)
    return CollisionEvent(object_id=oid, distance=dist)


# ---------------------------------------------------------------------------
# World orchestration

@dataclass
class World:
    """Single-owner world instance stepping one route of a map."""

    world_map: WorldMap
    route_index: int = 0
    dt: float = DT
    ego: EgoState = field(init=False)
    objects: list[CriticalObject] = field(init=False)
    t: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        self.reset(self.route_index)

    @property
    def route(self) -> np.ndarray:
        return self.world_map.routes[self.route_index]

    def reset(self, route_index: int | None = None) -> SceneSnapshot:
        if route_index is not None:
            if not 0 <= route_index < len(self.world_map.routes):
                raise ValueError(f"route index {route_index} out of range")
            self.route_index = route_index
        route = self.route
        seg = route[1] - route[0]
        heading = math.atan2(seg[1], seg[0])
        self.ego = EgoState(x=float(route[0][0]), y=float(route[0][1]), heading=heading)
        self.objects = [CriticalObject.from_spec(s) for s in self.world_map.object_spawns]
        self.t = 0
        return self.snapshot()

    def snapshot(self) -> SceneSnapshot:
        d, theta, s = lane_frame(self.ego, self.route)
        return SceneSnapshot(
            t=self.t,
            ego=replace(self.ego),
            objects=[replace(o) for o in self.objects],
            route=self.route,
            lateral_offset=d,
            heading_error=theta,
            progress=s,
        )

    def step(self, action: tuple[float, float]) -> SceneSnapshot:
        self.ego = step_dynamics(self.ego, action, self.dt)
        self.objects = advance_objects(self.objects, self.ego, self.dt)
        self.t += 1
        return self.snapshot()
