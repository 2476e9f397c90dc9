"""Deterministic 2D traffic microsimulation producing ground-truth frame logs.

The world is axis aligned: every lane is a straight run heading N (+y), S (-y),
E (+x) or W (-x). Vehicles go straight, follow their leader, stop for
red/yellow lights and stationary blockers, and change into a free adjacent
lane when a blocker sits within ``LANE_CHANGE_TRIGGER_M`` ahead.

Random draws come from one ``random.Random(seed)`` stream in this order:
initial NPC spawns (lane, position, speed factor per NPC, in id order), then
once per frame the respawn draws for vehicles that left the map, in id order.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import ConfigError
from .records import (
    APPROACHES,
    _box,
    HEADINGS,
    Box,
    EgoState,
    FrameRecord,
    Intersection,
    Light,
    Obstacle,
    VehicleState,
    classify_action,
)

MAX_ACCEL = 2.0
MAX_DECEL = 4.0
COMFORT_DECEL = 3.0
MIN_GAP = 2.0
STOP_LINE_BUFFER = 1.0
LANE_CHANGE_TRIGGER_M = 30.0
LANE_CHANGE_S = 2.0
CORRIDOR_HALF_WIDTH = 2.0
NPC_LENGTH = 4.5
NPC_WIDTH = 1.8
ENTRY_CLEARANCE_M = 15.0
STOP_SPEED_SNAP = 0.5

CONFLICTS = {"N": ("E", "W"), "S": ("E", "W"), "E": ("N", "S"), "W": ("N", "S")}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _num(d: dict, key: str, where: str, default=None, minimum: float | None = None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError("missing", f"{where}.{key}")
        return default
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", f"{where}.{key}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value!r}", f"{where}.{key}")
    return float(value)


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"expected an object, got {type(d).__name__}", where)
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {', '.join(extra)}", where)


@dataclass(frozen=True)
class Lane:
    lane_id: int
    start: tuple[float, float]
    end: tuple[float, float]
    speed_limit: float = 13.9
    npc_spawn: bool = True

    @property
    def approach(self) -> str:
        dx, dy = self.end[0] - self.start[0], self.end[1] - self.start[1]
        if abs(dx) > abs(dy):
            return "E" if dx > 0 else "W"
        return "N" if dy > 0 else "S"

    @property
    def heading(self) -> tuple[float, float]:
        return HEADINGS[self.approach]

    @property
    def length(self) -> float:
        return abs(self.end[0] - self.start[0]) + abs(self.end[1] - self.start[1])

    @property
    def horizontal(self) -> bool:
        return self.approach in ("E", "W")

    @property
    def across(self) -> float:
        """Lateral world coordinate of the lane centreline."""
        return self.start[1] if self.horizontal else self.start[0]

    def s_of(self, x: float, y: float) -> float:
        hx, hy = self.heading
        return (x - self.start[0]) * hx + (y - self.start[1]) * hy

    def point_at(self, s: float, across: float | None = None) -> tuple[float, float]:
        hx, hy = self.heading
        x, y = self.start[0] + s * hx, self.start[1] + s * hy
        if across is not None:
            if self.horizontal:
                y = across
            else:
                x = across
        return (x, y)


@dataclass(frozen=True)
class PhaseSpec:
    intersection_id: int
    approach: str
    red_s: float
    green_s: float
    yellow_s: float
    phase_offset_s: float = 0.0

    @property
    def cycle(self) -> float:
        return self.red_s + self.green_s + self.yellow_s


@dataclass(frozen=True)
class ObstacleSpec:
    lane_id: int
    bbox: Box
    spawn_time_s: float = 0.0


@dataclass(frozen=True)
class VehicleSpec:
    lane_id: int
    position_m: float
    speed_mps: float = 0.0
    length_m: float = NPC_LENGTH
    width_m: float = NPC_WIDTH
    parked: bool = False


@dataclass(frozen=True)
class WorldConfig:
    lanes: tuple[Lane, ...]
    intersections: tuple[Intersection, ...]
    light_phases: tuple[PhaseSpec, ...]
    npc_count: int
    obstacle_specs: tuple[ObstacleSpec, ...]
    duration_s: float
    ego: VehicleSpec
    dt_s: float = 0.1
    seed: int = 0
    scripted_vehicles: tuple[VehicleSpec, ...] = ()

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s / self.dt_s))

    def lane(self, lane_id: int) -> Lane:
        for lane in self.lanes:
            if lane.lane_id == lane_id:
                return lane
        raise ConfigError(f"unknown lane {lane_id}", "lane_id")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        _reject_unknown(d, {"map_spec", "light_phases", "npc_count", "obstacle_specs", "duration_s",
                            "dt_s", "seed", "ego", "scripted_vehicles"}, "config")
        if "map_spec" not in d:
            raise ConfigError("missing", "map_spec")
        ms = d["map_spec"]
        _reject_unknown(ms, {"lanes", "intersections"}, "map_spec")
        lanes = []
        for i, ld in enumerate(ms.get("lanes", [])):
            where = f"map_spec.lanes[{i}]"
            _reject_unknown(ld, {"lane_id", "points", "speed_limit", "npc_spawn"}, where)
            pts = ld.get("points")
            if not isinstance(pts, list) or len(pts) < 2:
                raise ConfigError("need at least two points", f"{where}.points")
            pts = [(float(p[0]), float(p[1])) for p in pts]
            _check_straight(pts, f"{where}.points")
            lanes.append(Lane(int(ld["lane_id"]), pts[0], pts[-1],
                              _num(ld, "speed_limit", where, 13.9, minimum=0.1),
                              bool(ld.get("npc_spawn", True))))
        if not lanes:
            raise ConfigError("at least one lane is required", "map_spec.lanes")
        inters = []
        for i, idd in enumerate(ms.get("intersections", [])):
            _reject_unknown(idd, {"id", "bbox"}, f"map_spec.intersections[{i}]")
            inters.append(Intersection.from_dict(idd))
        phases = []
        for i, pd in enumerate(d.get("light_phases", [])):
            where = f"light_phases[{i}]"
            _reject_unknown(pd, {"intersection_id", "approach", "red_s", "green_s", "yellow_s",
                                 "phase_offset_s"}, where)
            if pd.get("approach") not in APPROACHES:
                raise ConfigError(f"must be one of {APPROACHES}", f"{where}.approach")
            phases.append(PhaseSpec(int(pd["intersection_id"]), pd["approach"],
                                    _num(pd, "red_s", where, minimum=0),
                                    _num(pd, "green_s", where, minimum=0),
                                    _num(pd, "yellow_s", where, minimum=0),
                                    _num(pd, "phase_offset_s", where, 0.0)))
        obstacles = []
        for i, od in enumerate(d.get("obstacle_specs", [])):
            where = f"obstacle_specs[{i}]"
            _reject_unknown(od, {"lane_id", "bbox", "spawn_time_s"}, where)
            obstacles.append(ObstacleSpec(int(od["lane_id"]), _box(od.get("bbox"), f"{where}.bbox"),
                                          _num(od, "spawn_time_s", where, 0.0, minimum=0)))
        if "ego" not in d:
            raise ConfigError("missing", "ego")
        ego = _vehicle_spec(d["ego"], "ego")
        scripted = tuple(_vehicle_spec(v, f"scripted_vehicles[{i}]")
                         for i, v in enumerate(d.get("scripted_vehicles", [])))
        npc = d.get("npc_count", 0)
        if isinstance(npc, bool) or not isinstance(npc, int) or npc < 0:
            raise ConfigError(f"must be a non-negative integer, got {npc!r}", "npc_count")
        seed = d.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError(f"must be a 64-bit unsigned integer, got {seed!r}", "seed")
        dt = _num(d, "dt_s", "config", 0.1)
        if dt <= 0:
            raise ConfigError("must be > 0", "dt_s")
        duration = _num(d, "duration_s", "config")
        if duration <= 0:
            raise ConfigError("must be > 0", "duration_s")
        cfg = cls(tuple(lanes), tuple(inters), tuple(phases), npc, tuple(obstacles), duration,
                  ego, dt, seed, scripted)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "WorldConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        ids = [lane.lane_id for lane in self.lanes]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate lane_id", "map_spec.lanes")
        inter_ids = {i.id for i in self.intersections}
        if len(inter_ids) != len(self.intersections):
            raise ConfigError("duplicate intersection id", "map_spec.intersections")
        seen = set()
        for i, ph in enumerate(self.light_phases):
            if ph.intersection_id not in inter_ids:
                raise ConfigError(f"unknown intersection {ph.intersection_id}",
                                  f"light_phases[{i}].intersection_id")
            if ph.cycle <= 0:
                raise ConfigError("red_s + green_s + yellow_s must be > 0", f"light_phases[{i}]")
            key = (ph.intersection_id, ph.approach)
            if key in seen:
                raise ConfigError(f"duplicate phase for {key}", f"light_phases[{i}]")
            seen.add(key)
        for i, ob in enumerate(self.obstacle_specs):
            lane = self.lane(ob.lane_id)
            if not _segment_hits_box(lane.start, lane.end, ob.bbox):
                raise ConfigError(f"obstacle does not intersect lane {ob.lane_id}",
                                  f"obstacle_specs[{i}].bbox")
        for where, spec in [("ego", self.ego)] + [
                (f"scripted_vehicles[{i}]", v) for i, v in enumerate(self.scripted_vehicles)]:
            lane = self.lane(spec.lane_id)
            if not 0 <= spec.position_m <= lane.length:
                raise ConfigError(f"position outside lane {lane.lane_id}", f"{where}.position_m")
        self._check_phase_safety()

    def _check_phase_safety(self) -> None:
        by_inter: dict[int, list[PhaseSpec]] = {}
        for ph in self.light_phases:
            by_inter.setdefault(ph.intersection_id, []).append(ph)
        for frame in range(self.n_frames):
            t = frame * self.dt_s
            for inter_id, phases in by_inter.items():
                green = {ph.approach for ph in phases if light_color_at(ph, t) == "green"}
                for a in green:
                    for b in CONFLICTS[a]:
                        if b in green:
                            raise ConfigError(
                                f"conflicting approaches {a} and {b} both green at t={t:g}s "
                                f"(intersection {inter_id})", "light_phases")


def _vehicle_spec(d: dict, where: str) -> VehicleSpec:
    _reject_unknown(d, {"lane_id", "position_m", "speed_mps", "length_m", "width_m", "parked"}, where)
    if "lane_id" not in d:
        raise ConfigError("missing", f"{where}.lane_id")
    return VehicleSpec(int(d["lane_id"]), _num(d, "position_m", where),
                       _num(d, "speed_mps", where, 0.0, minimum=0),
                       _num(d, "length_m", where, NPC_LENGTH, minimum=0.5),
                       _num(d, "width_m", where, NPC_WIDTH, minimum=0.5),
                       bool(d.get("parked", False)))


def _check_straight(pts: list[tuple[float, float]], where: str) -> None:
    xs = {p[0] for p in pts}
    ys = {p[1] for p in pts}
    if len(xs) != 1 and len(ys) != 1:
        raise ConfigError("lanes must be straight axis-aligned runs", where)
    coords = [p[1] for p in pts] if len(xs) == 1 else [p[0] for p in pts]
    steps = [b - a for a, b in zip(coords, coords[1:])]
    if any(s == 0 for s in steps) or not (all(s > 0 for s in steps) or all(s < 0 for s in steps)):
        raise ConfigError("lane points must be distinct and monotone", where)


def _segment_hits_box(a: tuple[float, float], b: tuple[float, float], box: Box) -> bool:
    # Axis-aligned segment: an interval overlap test is exact.
    x1, y1, x2, y2 = box
    lo_x, hi_x = min(a[0], b[0]), max(a[0], b[0])
    lo_y, hi_y = min(a[1], b[1]), max(a[1], b[1])
    return lo_x < x2 and hi_x > x1 and lo_y < y2 and hi_y > y1 or (
        lo_x == hi_x and x1 < lo_x < x2 and lo_y < y2 and hi_y > y1) or (
        lo_y == hi_y and y1 < lo_y < y2 and lo_x < x2 and hi_x > x1)


# ---------------------------------------------------------------------------
# Lights
# ---------------------------------------------------------------------------

def light_color_at(phases: PhaseSpec, t: float) -> str:
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    cycle = phases.cycle
    if cycle <= 0:
        raise ConfigError("zero-length light cycle", "light_phases")
    local = (t + phases.phase_offset_s) % cycle
    if local < phases.red_s:
        return "red"
    if local < phases.red_s + phases.green_s:
        return "green"
    return "yellow"


# ---------------------------------------------------------------------------
# Vehicle dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StopLine:
    s: float
    intersection_id: int


@dataclass
class WorldView:
    """Everything a vehicle may look at while taking one step."""

    lanes: dict[int, Lane]
    stop_lines: dict[int, tuple[StopLine, ...]]
    colors: dict[tuple[int, str], str]
    obstacles: tuple[Obstacle, ...]
    vehicles: tuple[VehicleState, ...]
    dt: float = 0.1
    desired_speed: dict[int, float] = field(default_factory=dict)
    parked: frozenset[int] = frozenset()

    def adjacent_lanes(self, lane: Lane) -> list[Lane]:
        out = []
        for other in self.lanes.values():
            if other.lane_id == lane.lane_id or other.approach != lane.approach:
                continue
            if 2.0 <= abs(other.across - lane.across) <= 5.0:
                out.append(other)
        return sorted(out, key=lambda l: l.lane_id)


def stop_lines_for(lane: Lane, intersections) -> tuple[StopLine, ...]:
    out = []
    for inter in intersections:
        x1, y1, x2, y2 = inter.bbox
        if lane.horizontal:
            if not y1 < lane.across < y2:
                continue
            edge = x1 if lane.approach == "E" else x2
        else:
            if not x1 < lane.across < x2:
                continue
            edge = y1 if lane.approach == "N" else y2
        s = _s_of_edge(lane, edge)
        if 0 < s < lane.length:
            out.append(StopLine(s, inter.id))
    return tuple(sorted(out, key=lambda sl: sl.s))


def _s_of_edge(lane: Lane, edge: float) -> float:
    hx, hy = lane.heading
    return (edge - lane.start[0]) * hx if lane.horizontal else (edge - lane.start[1]) * hy


def _along(lane: Lane, x: float, y: float) -> float:
    return x if lane.horizontal else y


def _across(lane: Lane, x: float, y: float) -> float:
    return y if lane.horizontal else x


def _extent(lane: Lane, bbox: Box) -> tuple[float, float]:
    """(length along the lane heading, width across it)."""
    w, h = bbox[2] - bbox[0], bbox[3] - bbox[1]
    return (w, h) if lane.horizontal else (h, w)


def _heading_deg(vx: float, vy: float, lane: Lane) -> float:
    if vx == 0.0 and vy == 0.0:
        hx, hy = lane.heading
        return math.degrees(math.atan2(hy, hx)) % 360.0 + 0.0
    return math.degrees(math.atan2(vy, vx)) % 360.0 + 0.0


def make_state(vid: int, lane: Lane, s: float, across: float, v_long: float, v_lat: float,
               length: float, width: float) -> VehicleState:
    x, y = lane.point_at(s, across)
    hx, hy = lane.heading
    if lane.horizontal:
        vx, vy = v_long * hx, v_lat
        bbox = (x - length / 2, y - width / 2, x + length / 2, y + width / 2)
    else:
        vx, vy = v_lat, v_long * hy
        bbox = (x - width / 2, y - length / 2, x + width / 2, y + length / 2)
    vx, vy = vx + 0.0, vy + 0.0
    return VehicleState(vid, x + 0.0, y + 0.0, vx, vy, _heading_deg(vx, vy, lane),
                        tuple(c + 0.0 for c in bbox), lane.lane_id, classify_action(vx, vy))


def _lateral_target(v: VehicleState, lane: Lane, view: WorldView) -> tuple[float | None, Lane | None]:
    """Target centreline coordinate and lane of an in-progress lane change."""
    w = v.vy if lane.horizontal else v.vx
    if w == 0.0:
        return None, None
    off = _across(lane, v.x, v.y) - lane.across
    if off * w < 0:
        return lane.across, lane
    for other in view.adjacent_lanes(lane):
        if (other.across - lane.across) * w > 0:
            return other.across, other
    return lane.across, lane


def _leader_constraint(v: VehicleState, lane: Lane, view: WorldView, corridors: list[float],
                       front: float, sign: float) -> float:
    best = math.inf
    for other in view.vehicles:
        if other.id == v.id:
            continue
        olane = view.lanes.get(other.lane_id)
        if olane is None or olane.approach != lane.approach:
            continue
        oc = _across(lane, other.x, other.y)
        if not any(abs(oc - c) < CORRIDOR_HALF_WIDTH for c in corridors):
            continue
        olen, _ = _extent(lane, other.bbox)
        rear = sign * _along(lane, other.x, other.y) - olen / 2
        gap = rear - front
        if gap < -0.5 * olen:
            continue
        vl = max(0.0, sign * (other.vx if lane.horizontal else other.vy))
        v_safe = math.sqrt(max(0.0, 2 * COMFORT_DECEL * (gap - MIN_GAP - 0.5)
                               + (COMFORT_DECEL / MAX_DECEL) * vl * vl))
        best = min(best, v_safe)
    return best


def _blocker_gaps(lane: Lane, view: WorldView, corridor: float, front: float, sign: float,
                  exclude: int | None = None) -> list[float]:
    """Gaps (front bumper to blocker) to stationary blockers in a corridor ahead."""
    gaps = []
    for ob in view.obstacles:
        x1, y1, x2, y2 = ob.bbox
        lo, hi = (y1, y2) if lane.horizontal else (x1, x2)
        if hi < corridor - CORRIDOR_HALF_WIDTH + 0.5 or lo > corridor + CORRIDOR_HALF_WIDTH - 0.5:
            continue
        near = min(sign * x1, sign * x2) if lane.horizontal else min(sign * y1, sign * y2)
        gap = near - front
        if gap > -1.0:
            gaps.append(gap)
    for other in view.vehicles:
        if other.id not in view.parked or other.id == exclude:
            continue
        oc = _across(lane, other.x, other.y)
        if abs(oc - corridor) >= CORRIDOR_HALF_WIDTH:
            continue
        olen, _ = _extent(lane, other.bbox)
        gap = sign * _along(lane, other.x, other.y) - olen / 2 - front
        if gap > -1.0:
            gaps.append(gap)
    return gaps


def _lane_is_free(target: Lane, view: WorldView, v: VehicleState, u: float, length: float,
                  sign: float) -> bool:
    for other in view.vehicles:
        if other.id == v.id:
            continue
        olane = view.lanes.get(other.lane_id)
        if olane is None or olane.approach != target.approach:
            continue
        if abs(_across(target, other.x, other.y) - target.across) >= CORRIDOR_HALF_WIDTH:
            continue
        du = sign * _along(target, other.x, other.y) - u
        if -12.0 - length <= du <= 15.0 + length:
            return False
    front = u + length / 2
    gaps = _blocker_gaps(target, view, target.across, front, sign)
    return not any(g <= LANE_CHANGE_TRIGGER_M for g in gaps)


def _can_stop(speed: float, d: float) -> bool:
    # Margin above MAX_DECEL keeps a car that is already braking from flipping to "go".
    if d <= 0:
        return speed < STOP_SPEED_SNAP
    return speed * speed / (2 * d) <= 1.25 * MAX_DECEL


def _target_speed(v: VehicleState, view: WorldView, lane: Lane, speed: float, corridors: list[float],
                  front: float, sign: float, s_front: float) -> float:
    dt = view.dt
    targets = [view.desired_speed.get(v.id, lane.speed_limit), speed + MAX_ACCEL * dt]

    for line in view.stop_lines.get(lane.lane_id, ()):
        d = line.s - STOP_LINE_BUFFER - s_front
        if d < -STOP_LINE_BUFFER:
            continue
        color = view.colors.get((line.intersection_id, lane.approach))
        if color == "red" or (color == "yellow" and _can_stop(speed, d)):
            targets.append(math.sqrt(2 * COMFORT_DECEL * max(d - speed * dt, 0.0)))
        break

    targets.append(_leader_constraint(v, lane, view, corridors, front, sign))
    gaps = []
    for c in corridors:
        gaps.extend(_blocker_gaps(lane, view, c, front, sign))
    for gap in gaps:
        targets.append(math.sqrt(2 * COMFORT_DECEL * max(gap - MIN_GAP - 0.5 - speed * dt, 0.0)))

    return max(0.0, min(targets))


def safe_start_speed(v: VehicleState, view: WorldView) -> float:
    """Fastest speed up to the desired one that the vehicle could hold right now."""
    lane = view.lanes[v.lane_id]
    hx, hy = lane.heading
    sign = hx + hy
    length, _ = _extent(lane, v.bbox)
    front = sign * _along(lane, v.x, v.y) + length / 2
    s_front = lane.s_of(v.x, v.y) + length / 2
    desired = view.desired_speed.get(v.id, lane.speed_limit)
    # Judged at the desired speed, the most conservative point of the profile.
    return min(desired, _target_speed(v, view, lane, desired, [_across(lane, v.x, v.y)], front, sign, s_front))


def step_vehicle(v: VehicleState, view: WorldView) -> VehicleState:
    """Advance one vehicle by ``view.dt`` seconds.

    Longitudinal speed targets the minimum of the desired speed, a stopping
    profile for the next red/yellow stop line, the leader's safe-following
    speed and a stopping profile for stationary blockers. The change toward
    that target is clamped to [-MAX_DECEL, MAX_ACCEL]. Position integrates
    explicitly with the speed held at the start of the step.
    """
    if v.id in view.parked:
        return v
    dt = view.dt
    lane = view.lanes[v.lane_id]
    hx, hy = lane.heading
    sign = hx + hy
    length, width = _extent(lane, v.bbox)
    u = sign * _along(lane, v.x, v.y)
    front = u + length / 2
    s = lane.s_of(v.x, v.y)
    speed = max(0.0, v.vx * hx + v.vy * hy)
    across = _across(lane, v.x, v.y)

    target_across, target_lane = _lateral_target(v, lane, view)
    corridors = [across] if target_across is None else [across, target_across]

    v_target = _target_speed(v, view, lane, speed, corridors, front, sign, s + length / 2)
    accel = min(MAX_ACCEL, max(-MAX_DECEL, (v_target - speed) / dt))
    new_speed = max(0.0, speed + accel * dt)
    if new_speed < 0.05 and v_target < STOP_SPEED_SNAP:
        new_speed = 0.0
    new_u = u + speed * dt

    # Lateral motion.
    v_lat = v.vy if lane.horizontal else v.vx
    new_across = across + v_lat * dt
    new_lane = lane
    if target_across is None:
        own = _blocker_gaps(lane, view, across, front, sign)
        if own and min(own) <= LANE_CHANGE_TRIGGER_M:
            for cand in view.adjacent_lanes(lane):
                if _lane_is_free(cand, view, v, u, length, sign):
                    v_lat = (cand.across - lane.across) / LANE_CHANGE_S
                    break
        new_across = across
    else:
        # Snap onto the target centreline once reached.
        if (target_across - across) * (target_across - new_across) <= 0:
            new_across, v_lat = target_across, 0.0
        if target_lane is not None and target_lane is not lane and \
                abs(new_across - target_lane.across) < abs(new_across - lane.across):
            new_lane = target_lane

    new_s = new_u - sign * _along(new_lane, *new_lane.start)
    return make_state(v.id, new_lane, new_s, new_across, new_speed, v_lat, length, width)



# ---------------------------------------------------------------------------
# Scenario runner
# ---------------------------------------------------------------------------

@dataclass
class _Runner:
    cfg: WorldConfig
    rng: random.Random = field(init=False)

    def __post_init__(self):
        cfg = self.cfg
        self.rng = random.Random(cfg.seed)
        self.lanes = {lane.lane_id: lane for lane in cfg.lanes}
        self.stop_lines = {lane.lane_id: stop_lines_for(lane, cfg.intersections) for lane in cfg.lanes}
        self.spawn_lanes = sorted((l for l in cfg.lanes if l.npc_spawn), key=lambda l: l.lane_id)
        self.desired: dict[int, float] = {}
        self.parked: set[int] = set()
        self.pending: list[int] = []
        self.vehicles: dict[int, VehicleState] = {}
        self.ego_waiting = False

        ego_lane = cfg.lane(cfg.ego.lane_id)
        self.ego = make_state(0, ego_lane, cfg.ego.position_m, ego_lane.across,
                              cfg.ego.speed_mps, 0.0, cfg.ego.length_m, cfg.ego.width_m)
        next_id = 1
        for spec in cfg.scripted_vehicles:
            lane = cfg.lane(spec.lane_id)
            self.vehicles[next_id] = make_state(next_id, lane, spec.position_m, lane.across,
                                                0.0 if spec.parked else spec.speed_mps, 0.0,
                                                spec.length_m, spec.width_m)
            if spec.parked:
                self.parked.add(next_id)
            next_id += 1
        for _ in range(cfg.npc_count):
            self._initial_spawn(next_id)
            next_id += 1
        self.next_id = next_id
        self._set_start_speeds()

    def _occupied(self, lane: Lane, s: float, length: float, clearance: float) -> bool:
        x, y = lane.point_at(s)
        for other in list(self.vehicles.values()) + [self.ego]:
            olane = self.lanes[other.lane_id]
            if olane.approach != lane.approach:
                continue
            if abs(_across(lane, other.x, other.y) - lane.across) >= CORRIDOR_HALF_WIDTH:
                continue
            olen, _ = _extent(lane, other.bbox)
            if abs(_along(lane, other.x, other.y) - _along(lane, x, y)) < (olen + length) / 2 + clearance:
                return True
        return False

    def _initial_spawn(self, vid: int) -> None:
        if not self.spawn_lanes:
            return
        for _ in range(50):
            lane = self.rng.choice(self.spawn_lanes)
            s = self.rng.uniform(NPC_LENGTH, lane.length - NPC_LENGTH)
            factor = self.rng.uniform(0.85, 1.0)
            if self._occupied(lane, s, NPC_LENGTH, 4.0):
                continue
            if self._in_intersection_or_obstacle(lane, s, NPC_LENGTH):
                continue
            self.vehicles[vid] = make_state(vid, lane, s, lane.across, 0.0, 0.0, NPC_LENGTH, NPC_WIDTH)
            self.desired[vid] = lane.speed_limit * factor
            return
        self.pending.append(vid)

    def _set_start_speeds(self) -> None:
        """NPCs enter the scene already in traffic, not parked at their spawn points."""
        everyone = tuple(self.vehicles[k] for k in sorted(self.vehicles)) + (self.ego,)
        view = WorldView(self.lanes, self.stop_lines, self._colors(0.0),
                         self._active_obstacles(0.0), everyone, self.cfg.dt_s, self.desired,
                         frozenset(self.parked))
        for vid in sorted(self.desired):
            v = self.vehicles[vid]
            lane = self.lanes[v.lane_id]
            length, width = _extent(lane, v.bbox)
            speed = safe_start_speed(v, view)
            self.vehicles[vid] = make_state(vid, lane, lane.s_of(v.x, v.y), lane.across, speed, 0.0,
                                            length, width)

    def _in_intersection_or_obstacle(self, lane: Lane, s: float, length: float) -> bool:
        for line in self.stop_lines[lane.lane_id]:
            inter = next(i for i in self.cfg.intersections if i.id == line.intersection_id)
            depth = (inter.bbox[2] - inter.bbox[0]) if lane.horizontal else (inter.bbox[3] - inter.bbox[1])
            if line.s - length / 2 - 1.0 < s < line.s + depth + length / 2 + 1.0:
                return True
        for ob in self.cfg.obstacle_specs:
            if ob.lane_id != lane.lane_id:
                continue
            ox1, oy1, ox2, oy2 = ob.bbox
            lo, hi = sorted((lane.s_of(ox1, oy1), lane.s_of(ox2, oy2)))
            if lo - length / 2 - MIN_GAP - 8.0 < s < hi + length / 2 + 1.0:
                return True
        return False

    def _entry_speed(self, lane: Lane, length: float, desired: float) -> float:
        s0 = length / 2
        best = desired
        for other in list(self.vehicles.values()) + [self.ego]:
            olane = self.lanes[other.lane_id]
            if olane.approach != lane.approach:
                continue
            if abs(_across(lane, other.x, other.y) - lane.across) >= CORRIDOR_HALF_WIDTH:
                continue
            olen, _ = _extent(lane, other.bbox)
            gap = lane.s_of(other.x, other.y) - olen / 2 - (s0 + length / 2)
            if gap >= 0:
                best = min(best, math.sqrt(max(0.0, 2 * COMFORT_DECEL * (gap - MIN_GAP - 0.5))))
        return best

    def _respawn(self) -> None:
        still = []
        for vid in self.pending:
            if not self.spawn_lanes:
                still.append(vid)
                continue
            lane = self.rng.choice(self.spawn_lanes)
            factor = self.rng.uniform(0.85, 1.0)
            if self._occupied(lane, NPC_LENGTH / 2, NPC_LENGTH, ENTRY_CLEARANCE_M):
                still.append(vid)
                continue
            desired = lane.speed_limit * factor
            speed = self._entry_speed(lane, NPC_LENGTH, desired)
            # A re-entering vehicle is a new vehicle as far as any observer can tell.
            vid = self.next_id
            self.next_id += 1
            self.vehicles[vid] = make_state(vid, lane, NPC_LENGTH / 2, lane.across, speed, 0.0,
                                            NPC_LENGTH, NPC_WIDTH)
            self.desired[vid] = desired
        self.pending = still

    def _active_obstacles(self, t: float) -> tuple[Obstacle, ...]:
        return tuple(Obstacle(i, ob.lane_id, ob.bbox) for i, ob in enumerate(self.cfg.obstacle_specs)
                     if t >= ob.spawn_time_s)

    def _colors(self, t: float) -> dict[tuple[int, str], str]:
        return {(ph.intersection_id, ph.approach): light_color_at(ph, t) for ph in self.cfg.light_phases}

    def frames(self) -> Iterator[FrameRecord]:
        cfg = self.cfg
        lights_template = [(i, ph) for i, ph in enumerate(cfg.light_phases)]
        for frame in range(cfg.n_frames):
            t = frame * cfg.dt_s
            colors = self._colors(t)
            obstacles = self._active_obstacles(t)
            ego_lane = self.lanes[self.ego.lane_id]
            yield FrameRecord(
                frame=frame,
                time_s=t,
                ego=EgoState(**{k: getattr(self.ego, k) for k in VehicleState.__dataclass_fields__},
                             approach=ego_lane.approach),
                vehicles=tuple(self.vehicles[k] for k in sorted(self.vehicles)),
                lights=tuple(Light(i, ph.intersection_id, ph.approach,
                                   colors[(ph.intersection_id, ph.approach)])
                             for i, ph in lights_template),
                intersections=cfg.intersections,
                obstacles=obstacles,
            )
            self._step(colors, obstacles)

    def _step(self, colors, obstacles) -> None:
        everyone = tuple(self.vehicles[k] for k in sorted(self.vehicles)) + (self.ego,)
        view = WorldView(self.lanes, self.stop_lines, colors, obstacles, everyone, self.cfg.dt_s,
                         self.desired, frozenset(self.parked))
        moved = {vid: step_vehicle(v, view) for vid, v in sorted(self.vehicles.items())}
        new_ego = self.ego if self.ego_waiting else step_vehicle(self.ego, view)

        self.vehicles = {}
        for vid, v in moved.items():
            if self._past_end(v):
                self.pending.append(vid)
            else:
                self.vehicles[vid] = v
        self.pending.sort()

        self.ego = new_ego
        if self.ego_waiting or self._past_end(new_ego):
            self._wrap_ego()
        self._respawn()

    def _past_end(self, v: VehicleState) -> bool:
        lane = self.lanes[v.lane_id]
        length, _ = _extent(lane, v.bbox)
        return lane.s_of(v.x, v.y) - length / 2 > lane.length

    def _wrap_ego(self) -> None:
        lane = self.lanes[self.ego.lane_id]
        length, width = _extent(lane, self.ego.bbox)
        if self._occupied(lane, length / 2, length, ENTRY_CLEARANCE_M):
            self.ego_waiting = True
            return
        self.ego_waiting = False
        speed = self._entry_speed(lane, length, self.ego.speed)
        self.ego = make_state(0, lane, length / 2, lane.across, speed, 0.0, length, width)


def run_scenario(cfg: WorldConfig) -> list[FrameRecord]:
    return list(iter_scenario(cfg))


def iter_scenario(cfg: WorldConfig) -> Iterator[FrameRecord]:
    cfg.validate()
    return _Runner(cfg).frames()
