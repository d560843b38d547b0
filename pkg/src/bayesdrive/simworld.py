"""Top-down 2D driving world: tracks, kinematic vehicle, semantic camera, reward.

Coordinates are metres in a right-handed world frame; headings are radians
counter-clockwise from +x. Lateral offsets ``d`` are measured from the road
centerline, positive to the left of the direction of travel. The road has two
lanes: the ego lane is ``-lane_width <= d <= 0`` and the opposite lane is
``0 < d <= lane_width``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from bayesdrive.core import Action
from bayesdrive.perception import DEFAULT_HEIGHT, DEFAULT_WIDTH, SemanticClass, road_view

FRAME_RATE = 7.0
DT = 1.0 / FRAME_RATE
TICKS_PER_DECISION = 7
LINE_WIDTH = 0.15


class Scenario(str, enum.Enum):
    STRAIGHT = "straight"
    RIGHT_TURN = "right"
    LEFT_TURN = "left"


SCENARIO_ROTATION = (Scenario.STRAIGHT, Scenario.RIGHT_TURN, Scenario.LEFT_TURN)


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.5
    width: float = 1.8
    length: float = 4.2
    max_steer: float = math.radians(35.0)
    max_accel: float = 3.0
    drag: float = 0.25  # 1/s; top speed = max_accel / drag = 12 m/s
    max_brake: float = 6.0


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    radius: float
    dynamic: bool = False
    # circular path for dynamic obstacles: (x, y) is the path centre
    orbit_radius: float = 0.0
    angular_speed: float = 0.0
    phase: float = 0.0

    def position(self, t: float) -> tuple[float, float]:
        if not self.dynamic or self.orbit_radius == 0.0:
            return self.x, self.y
        ang = self.phase + self.angular_speed * t
        return self.x + self.orbit_radius * math.cos(ang), self.y + self.orbit_radius * math.sin(ang)


@dataclass(frozen=True)
class TrackSpec:
    scenario: Scenario = Scenario.STRAIGHT
    lane_width: float = 4.5
    segment_length: float = 25.0
    curve_radius: float = 20.0
    obstacles: tuple[Obstacle, ...] = ()
    # roadside static obstacles placed from the track random stream
    n_roadside: int = 6
    max_steps: int = 400
    offroad_limit: float = 5.0
    spawn_speed: float = 0.0

    def __post_init__(self):
        if not self.lane_width > VehicleParams().width:
            raise ValueError("lane_width must exceed the vehicle width")
        if not self.curve_radius > self.lane_width:
            raise ValueError("curve_radius must exceed lane_width")
        if not self.segment_length > 0:
            raise ValueError("segment_length must be positive")
        if self.spawn_speed < 0:
            raise ValueError("spawn_speed must be non-negative")
        if self.n_roadside < 0 or self.max_steps < 1:
            raise ValueError("n_roadside must be >= 0 and max_steps >= 1")


def track_spec_from_mapping(doc: Mapping[str, Any] | None, scenario: Scenario | str | None = None) -> TrackSpec:
    """Read the ``track`` section of a config document."""
    doc = dict(doc or {})
    known = {f.name for f in dataclasses.fields(TrackSpec)} - {"obstacles", "scenario"}
    kwargs: dict[str, Any] = {}
    for k, v in doc.items():
        if k == "obstacles":
            kwargs["obstacles"] = tuple(Obstacle(**o) for o in v)
        elif k == "scenario":
            kwargs["scenario"] = Scenario(v)
        elif k in known:
            kwargs[k] = v
        else:
            raise ValueError(f"track.{k}: unknown key")
    if scenario is not None:
        kwargs["scenario"] = Scenario(scenario)
    return TrackSpec(**kwargs)


# -- centerline geometry ---------------------------------------------------

@dataclass(frozen=True)
class Line:
    x0: float
    y0: float
    heading: float
    length: float
    s0: float

    def end(self) -> tuple[float, float, float]:
        return (self.x0 + self.length * math.cos(self.heading),
                self.y0 + self.length * math.sin(self.heading), self.heading)

    def project(self, px, py, open_start=False, open_end=False):
        c, s = math.cos(self.heading), math.sin(self.heading)
        dx, dy = px - self.x0, py - self.y0
        u = dx * c + dy * s
        v = -dx * s + dy * c
        lo = -np.inf if open_start else 0.0
        hi = np.inf if open_end else self.length
        uc = np.clip(u, lo, hi)
        dist = np.hypot(u - uc, v)
        return self.s0 + u, v, dist


@dataclass(frozen=True)
class Arc:
    cx: float
    cy: float
    radius: float
    start_angle: float  # polar angle of the start point about the centre
    sweep: float  # signed; > 0 turns left
    s0: float

    @property
    def length(self) -> float:
        return self.radius * abs(self.sweep)

    def end(self) -> tuple[float, float, float]:
        ang = self.start_angle + self.sweep
        heading = ang + (math.pi / 2 if self.sweep > 0 else -math.pi / 2)
        return (self.cx + self.radius * math.cos(ang), self.cy + self.radius * math.sin(ang),
                wrap_angle(heading))

    def project(self, px, py, open_start=False, open_end=False):
        dx, dy = px - self.cx, py - self.cy
        r = np.hypot(dx, dy)
        sign = 1.0 if self.sweep > 0 else -1.0
        ang = np.arctan2(dy, dx)
        # progress angle in the travel direction, centred on the arc midpoint
        mid = self.start_angle + self.sweep / 2
        rel = np.mod(sign * (ang - mid) + np.pi, 2 * np.pi) - np.pi + abs(self.sweep) / 2
        s = self.s0 + self.radius * rel
        d = sign * (self.radius - r)
        inside = (rel >= 0) & (rel <= abs(self.sweep))
        ends = []
        for k in (0.0, abs(self.sweep)):
            a = self.start_angle + sign * k
            ends.append(np.hypot(px - (self.cx + self.radius * math.cos(a)),
                                 py - (self.cy + self.radius * math.sin(a))))
        dist = np.where(inside, np.abs(r - self.radius), np.minimum(ends[0], ends[1]))
        return s, d, dist


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2 * math.pi)
    if w <= 0:
        w += 2 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class Track:
    spec: TrackSpec
    pieces: tuple[Line | Arc, ...]
    goal_s: float
    obstacles: tuple[Obstacle, ...]

    @property
    def lane_width(self) -> float:
        return self.spec.lane_width

    @property
    def length(self) -> float:
        return sum(p.length for p in self.pieces)

    def arc_length(self) -> float:
        return sum(p.length for p in self.pieces if isinstance(p, Arc))

    def project(self, px, py):
        """Along-track position ``s`` and lateral offset ``d`` of points."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        n = len(self.pieces)
        best_s = best_d = best_dist = None
        for i, piece in enumerate(self.pieces):
            s, d, dist = piece.project(px, py, open_start=(i == 0), open_end=(i == n - 1))
            if best_dist is None:
                best_s, best_d, best_dist = s, d, dist
            else:
                take = dist < best_dist
                best_s = np.where(take, s, best_s)
                best_d = np.where(take, d, best_d)
                best_dist = np.where(take, dist, best_dist)
        return best_s, best_d

    def pose_at(self, s: float, d: float = 0.0) -> tuple[float, float, float]:
        """World position and heading of the point at along-track ``s`` and offset ``d``."""
        for i, piece in enumerate(self.pieces):
            last = i == len(self.pieces) - 1
            if s <= piece.s0 + piece.length or last:
                u = s - piece.s0
                if isinstance(piece, Line):
                    c, sn = math.cos(piece.heading), math.sin(piece.heading)
                    return (piece.x0 + u * c - d * sn, piece.y0 + u * sn + d * c, piece.heading)
                sign = 1.0 if piece.sweep > 0 else -1.0
                ang = piece.start_angle + sign * u / piece.radius
                r = piece.radius - sign * d
                heading = ang + sign * math.pi / 2
                return (piece.cx + r * math.cos(ang), piece.cy + r * math.sin(ang), wrap_angle(heading))
        raise AssertionError("unreachable")

    def classify(self, px, py, t: float = 0.0) -> np.ndarray:
        """Semantic class of ground points."""
        _, d = self.project(px, py)
        lw = self.lane_width
        ad = np.abs(d)
        cls = np.full(np.shape(d), SemanticClass.OFF_ROAD, dtype=np.int8)
        cls[ad <= lw] = SemanticClass.ROAD
        on_line = (ad <= LINE_WIDTH / 2) | ((ad <= lw) & (ad >= lw - LINE_WIDTH))
        cls[on_line] = SemanticClass.ROAD_LINE
        for ob in self.obstacles:
            ox, oy = ob.position(t)
            hit = (px - ox) ** 2 + (py - oy) ** 2 <= ob.radius ** 2
            cls[hit] = SemanticClass.DYNAMIC_OBJECT if ob.dynamic else SemanticClass.STATIC_OBJECT
        return cls


def _centerline(spec: TrackSpec) -> tuple[tuple[Line | Arc, ...], float]:
    L, R = spec.segment_length, spec.curve_radius
    if spec.scenario is Scenario.STRAIGHT:
        total = 2 * L + R * math.pi / 2
        return (Line(0.0, 0.0, 0.0, total, 0.0),), total
    first = Line(0.0, 0.0, 0.0, L, 0.0)
    sign = 1.0 if spec.scenario is Scenario.LEFT_TURN else -1.0
    x, y, h = first.end()
    cx, cy = x - sign * R * math.sin(h), y + sign * R * math.cos(h)
    start_angle = math.atan2(y - cy, x - cx)
    arc = Arc(cx, cy, R, start_angle, sign * math.pi / 2, L)
    x, y, h = arc.end()
    last = Line(x, y, h, L, L + arc.length)
    return (first, arc, last), 2 * L + arc.length


def _roadside_obstacles(track: Track, n: int, rng: np.random.Generator) -> list[Obstacle]:
    out = []
    lw = track.lane_width
    total = track.goal_s
    for _ in range(n):
        s = rng.uniform(0.1 * total, total)
        side = 1.0 if rng.random() < 0.5 else -1.0
        radius = rng.uniform(0.4, 1.0)
        d = side * (lw + rng.uniform(1.0, 2.5) + radius)
        x, y, _ = track.pose_at(s, d)
        out.append(Obstacle(x, y, radius))
    return out


# -- vehicle ---------------------------------------------------------------

@dataclass(frozen=True)
class VehicleState:
    """Pose of the rear-axle midpoint, heading, signed speed."""

    x: float
    y: float
    heading: float
    speed: float = 0.0
    wheelbase: float = 2.5


@dataclass(frozen=True)
class ControlSignal:
    steer: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0
    reverse: bool = False

    def __post_init__(self):
        if not -1.0 <= self.steer <= 1.0:
            raise ValueError("steer must lie in [-1, 1]")
        if not 0.0 <= self.throttle <= 1.0 or not 0.0 <= self.brake <= 1.0:
            raise ValueError("throttle and brake must lie in [0, 1]")


# Turn radius at |steer| = 0.5 is about 8 m, tight enough for any curve the
# track builder produces.
TURN_STEER = 0.5

_ACTION_CONTROLS = {
    Action.FORWARD: ControlSignal(0.0, 0.6, 0.0, False),
    Action.TURN_RIGHT: ControlSignal(TURN_STEER, 0.4, 0.0, False),
    Action.TURN_LEFT: ControlSignal(-TURN_STEER, 0.4, 0.0, False),
    Action.BACKWARD: ControlSignal(0.0, 0.4, 0.0, True),
}


def apply_action(a: Action | int) -> ControlSignal:
    """Control signal for a driving primitive. Positive steer turns right."""
    return _ACTION_CONTROLS[Action(a)]


def integrate_pose(v: VehicleState, speed: float, steer_angle: float, dt: float) -> VehicleState:
    """Advance the pose along the exact arc of a kinematic bicycle at constant speed."""
    dist = speed * dt
    if abs(steer_angle) < 1e-12:
        x = v.x + dist * math.cos(v.heading)
        y = v.y + dist * math.sin(v.heading)
        h = v.heading
    else:
        curvature = math.tan(steer_angle) / v.wheelbase
        dh = dist * curvature
        h = v.heading + dh
        x = v.x + (math.sin(h) - math.sin(v.heading)) / curvature
        y = v.y - (math.cos(h) - math.cos(v.heading)) / curvature
    return dataclasses.replace(v, x=x, y=y, heading=wrap_angle(h))


@dataclass(frozen=True)
class Measures:
    collision: bool
    offroad_fraction: float
    otherlane_fraction: float
    speed: float
    distance_delta: float
    collision_kind: str | None = None
    progress: float = 0.0
    lateral: float = 0.0


@dataclass(frozen=True)
class WorldState:
    track: Track
    vehicle: VehicleState
    params: VehicleParams = field(default_factory=VehicleParams)
    time: float = 0.0
    ticks: int = 0


def build_track(spec: TrackSpec, rng: np.random.Generator) -> WorldState:
    """Centerline, obstacles and a vehicle at rest in the middle of the ego lane."""
    pieces, goal_s = _centerline(spec)
    bare = Track(spec, pieces, goal_s, tuple(spec.obstacles))
    roadside = _roadside_obstacles(bare, spec.n_roadside, rng)
    track = dataclasses.replace(bare, obstacles=tuple(spec.obstacles) + tuple(roadside))
    params = VehicleParams()
    # footprint centre sits half a wheelbase ahead of the rear axle
    x, y, h = track.pose_at(0.0, -spec.lane_width / 2)
    x -= params.wheelbase / 2 * math.cos(h)
    y -= params.wheelbase / 2 * math.sin(h)
    vehicle = VehicleState(x, y, h, spec.spawn_speed, params.wheelbase)
    return WorldState(track, vehicle, params)


_FOOT_U = (np.arange(9) + 0.5) / 9 - 0.5
_FOOT_V = (np.arange(5) + 0.5) / 5 - 0.5


def footprint_points(world: WorldState) -> tuple[np.ndarray, np.ndarray]:
    """Uniform 9x5 sample grid over the vehicle rectangle (equal-area cells)."""
    v, p = world.vehicle, world.params
    c, s = math.cos(v.heading), math.sin(v.heading)
    cx = v.x + p.wheelbase / 2 * c
    cy = v.y + p.wheelbase / 2 * s
    u = (_FOOT_U * p.length)[:, None]
    w = (_FOOT_V * p.width)[None, :]
    return (cx + u * c - w * s).ravel(), (cy + u * s + w * c).ravel()


def lane_fractions(world: WorldState) -> tuple[float, float, float]:
    """(in-lane, opposite-lane, off-road) area fractions of the footprint; they sum to 1."""
    px, py = footprint_points(world)
    _, d = world.track.project(px, py)
    lw = world.track.lane_width
    n = d.size
    off = np.count_nonzero(np.abs(d) > lw) / n
    other = np.count_nonzero((d > 0) & (d <= lw)) / n
    ego = np.count_nonzero((d <= 0) & (d >= -lw)) / n
    return ego, other, off


def circle_hits_rectangle(world: WorldState, ox: float, oy: float, radius: float) -> bool:
    v, p = world.vehicle, world.params
    c, s = math.cos(v.heading), math.sin(v.heading)
    cx = v.x + p.wheelbase / 2 * c
    cy = v.y + p.wheelbase / 2 * s
    dx, dy = ox - cx, oy - cy
    u = dx * c + dy * s
    w = -dx * s + dy * c
    qu = min(max(u, -p.length / 2), p.length / 2)
    qw = min(max(w, -p.width / 2), p.width / 2)
    return (u - qu) ** 2 + (w - qw) ** 2 <= radius ** 2


def _collision(world: WorldState) -> str | None:
    for ob in world.track.obstacles:
        ox, oy = ob.position(world.time)
        if circle_hits_rectangle(world, ox, oy, ob.radius):
            return "dynamic" if ob.dynamic else "static"
    return None


def measure(world: WorldState, distance_delta: float = 0.0) -> Measures:
    _, other, off = lane_fractions(world)
    kind = _collision(world)
    v = world.vehicle
    cx = v.x + world.params.wheelbase / 2 * math.cos(v.heading)
    cy = v.y + world.params.wheelbase / 2 * math.sin(v.heading)
    s, d = world.track.project(np.array([cx]), np.array([cy]))
    return Measures(kind is not None, off, other, v.speed, distance_delta, kind, float(s[0]), float(d[0]))


def tick(world: WorldState, control: ControlSignal, dt: float = DT) -> tuple[WorldState, Measures]:
    """Advance the world by ``dt`` seconds under a constant control."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    p = world.params
    v0 = world.vehicle.speed
    drive = p.max_accel * control.throttle * (-1.0 if control.reverse else 1.0)
    # exact solution of v' = drive - drag * v over the tick
    v_inf = drive / p.drag
    v1 = v_inf + (v0 - v_inf) * math.exp(-p.drag * dt)
    if control.brake > 0:
        dv = p.max_brake * control.brake * dt
        v1 = math.copysign(max(abs(v1) - dv, 0.0), v1)
    v_mean = 0.5 * (v0 + v1)
    steer_angle = -control.steer * p.max_steer
    vehicle = integrate_pose(world.vehicle, v_mean, steer_angle, dt)
    vehicle = dataclasses.replace(vehicle, speed=v1)
    new = dataclasses.replace(world, vehicle=vehicle, time=world.time + dt, ticks=world.ticks + 1)
    return new, measure(new, abs(v_mean) * dt)


def camera_ground_points(world: WorldState, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT):
    """World coordinates of the ground point seen by each camera pixel.

    The view is a trapezoid from 1 m (1.5 lane widths wide) to 30 m
    (6 lane widths wide) ahead of the front bumper. Row 0 is the far edge;
    column 0 is the left edge.
    """
    v, p = world.vehicle, world.params
    lw = world.track.lane_width
    c, s = math.cos(v.heading), math.sin(v.heading)
    front = p.wheelbase / 2 + p.length / 2
    fx, fy = v.x + front * c, v.y + front * s
    frac = 1.0 - (np.arange(height) + 0.5) / height  # 1 at the top row
    ahead = 1.0 + 29.0 * frac
    half = 0.75 * lw + (3.0 * lw - 0.75 * lw) * frac
    col = 1.0 - (np.arange(width) + 0.5) / width * 2.0  # +1 left .. -1 right
    left = half[:, None] * col[None, :]
    fwd = np.broadcast_to(ahead[:, None], left.shape)
    return fx + fwd * c - left * s, fy + fwd * s + left * c


def render_semantic(world: WorldState, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT) -> np.ndarray:
    gx, gy = camera_ground_points(world, width, height)
    return world.track.classify(gx, gy, world.time)


@dataclass(frozen=True)
class RewardConfig:
    r_k: tuple[float, float, float, float, float] = (50.0, 40.0, 30.0, 15.0, 10.0)
    v_target: float = 8.0

    @classmethod
    def from_agent_config(cls, cfg) -> "RewardConfig":
        return cls(tuple(cfg.reward_coefficients), cfg.v_target)


class RewardBranch(str, enum.Enum):
    COLLISION = "collision"
    OFFROAD = "offroad"
    OTHERLANE = "otherlane"
    SPEED = "speed"


def speed_reward(v: float, cfg: RewardConfig) -> float:
    """Penalty for driving below the target speed; reversing costs more."""
    rel = ((v - cfg.v_target) / cfg.v_target) ** 2
    if v < 0:
        return -cfg.r_k[3] * rel
    if v < cfg.v_target:
        return -cfg.r_k[4] * rel
    return 0.0


def reward_branch(m: Measures) -> RewardBranch:
    if m.collision:
        return RewardBranch.COLLISION
    if m.offroad_fraction > 0:
        return RewardBranch.OFFROAD
    if m.otherlane_fraction > 0:
        return RewardBranch.OTHERLANE
    return RewardBranch.SPEED


def reward_from_view(m: Measures, view: float, cfg: RewardConfig) -> float:
    branch = reward_branch(m)
    if branch is RewardBranch.COLLISION:
        r = -cfg.r_k[0]
    elif branch is RewardBranch.OFFROAD:
        r = -cfg.r_k[1] * m.offroad_fraction
    elif branch is RewardBranch.OTHERLANE:
        r = -cfg.r_k[2] * m.otherlane_fraction
    else:
        r = speed_reward(m.speed, cfg)
    return r + view


def reward(m: Measures, cells: np.ndarray, cfg: RewardConfig) -> float:
    """Priority cascade collision > off-road > opposite lane > speed, plus road view."""
    return reward_from_view(m, road_view(cells), cfg)


# -- episodes --------------------------------------------------------------

class Outcome(str, enum.Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    COLLISION = "collision"
    OFFROAD = "offroad"


@dataclass(frozen=True)
class Transition:
    cells: np.ndarray
    measures: Measures
    reward: float
    done: bool
    outcome: Outcome | None


def decision_step(world: WorldState, action: Action | int, cfg: RewardConfig,
                  steps_taken: int) -> tuple[WorldState, Transition]:
    """Hold one action for a decision period and score the resulting frame.

    ``steps_taken`` counts decisions already made in the episode, including
    this one's predecessor; it drives the timeout.
    """
    control = apply_action(action)
    distance = 0.0
    collided = None
    m = None
    outcome = None
    spec = world.track.spec
    for _ in range(TICKS_PER_DECISION):
        world, m = tick(world, control)
        distance += m.distance_delta
        if m.collision:
            collided = m.collision_kind
            outcome = Outcome.COLLISION
            break
        if abs(m.lateral) > spec.offroad_limit or m.progress < -spec.offroad_limit:
            outcome = Outcome.OFFROAD
            break
        if m.progress >= world.track.goal_s and abs(m.lateral) <= world.track.lane_width:
            outcome = Outcome.SUCCESS
            break
    m = dataclasses.replace(m, distance_delta=distance, collision=collided is not None,
                            collision_kind=collided)
    if outcome is None and steps_taken + 1 >= spec.max_steps:
        outcome = Outcome.TIMEOUT
    cells = render_semantic(world)
    r = reward(m, cells, cfg)
    return world, Transition(cells, m, r, outcome is not None, outcome)


def scenario_list(name: str | Sequence[str]) -> tuple[Scenario, ...]:
    if isinstance(name, str):
        if name == "all":
            return SCENARIO_ROTATION
        return (Scenario(name),)
    return tuple(Scenario(n) for n in name)
