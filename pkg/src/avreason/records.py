"""Frame records and the JSONL log format shared by ground truth and detections."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigError

# Shared with the fact extractor: speed at or above this is "moving".
STOPPED_SPEED = 0.5

APPROACHES = ("N", "S", "E", "W")
COLORS = ("red", "yellow", "green")

# Unit heading per approach; N travels toward +y.
HEADINGS = {"N": (0.0, 1.0), "S": (0.0, -1.0), "E": (1.0, 0.0), "W": (-1.0, 0.0)}

# Compass approach -> the up/down/left/right vocabulary used by the rules.
AXIS_NAMES = {"N": "up", "S": "down", "E": "right", "W": "left"}

Box = tuple[float, float, float, float]


def classify_action(vx: float, vy: float) -> str:
    if not (math.isfinite(vx) and math.isfinite(vy)):
        raise ValueError(f"non-finite velocity ({vx!r}, {vy!r})")
    return "stopped" if math.hypot(vx, vy) < STOPPED_SPEED else "moving"


def _box(value, what: str) -> Box:
    try:
        x1, y1, x2, y2 = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected [x1, y1, x2, y2], got {value!r}", what) from exc
    if not (x1 < x2 and y1 < y2):
        raise ConfigError(f"degenerate box {value!r}", what)
    return (x1, y1, x2, y2)


@dataclass(frozen=True)
class VehicleState:
    id: int
    x: float
    y: float
    vx: float
    vy: float
    rot: float
    bbox: Box
    lane_id: int
    action: str

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "x": self.x,
            "y": self.y,
            "vx": self.vx,
            "vy": self.vy,
            "rot": self.rot,
            "bbox": list(self.bbox),
            "lane_id": self.lane_id,
            "action": self.action,
        }

    @classmethod
    def _fields_from(cls, d: dict) -> dict:
        vx, vy = float(d["vx"]), float(d["vy"])
        action = d.get("action") or classify_action(vx, vy)
        if action not in ("moving", "stopped"):
            raise ConfigError(f"unknown action {action!r}", "action")
        return dict(
            id=int(d["id"]),
            x=float(d["x"]),
            y=float(d["y"]),
            vx=vx,
            vy=vy,
            rot=float(d.get("rot", math.degrees(math.atan2(vy, vx)) % 360.0)),
            bbox=_box(d["bbox"], "bbox"),
            lane_id=int(d["lane_id"]),
            action=action,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleState":
        return cls(**cls._fields_from(d))


@dataclass(frozen=True)
class EgoState(VehicleState):
    approach: str = "N"

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["approach"] = self.approach
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EgoState":
        approach = d.get("approach")
        if approach not in APPROACHES:
            raise ConfigError(f"ego approach must be one of {APPROACHES}, got {approach!r}", "ego.approach")
        return cls(**cls._fields_from(d), approach=approach)


@dataclass(frozen=True)
class Light:
    id: int
    intersection_id: int
    approach: str
    color: str

    def to_dict(self) -> dict:
        return {"id": self.id, "intersection_id": self.intersection_id,
                "approach": self.approach, "color": self.color}

    @classmethod
    def from_dict(cls, d: dict) -> "Light":
        if d["approach"] not in APPROACHES:
            raise ConfigError(f"bad approach {d['approach']!r}", "lights.approach")
        if d["color"] not in COLORS:
            raise ConfigError(f"bad color {d['color']!r}", "lights.color")
        return cls(int(d["id"]), int(d["intersection_id"]), d["approach"], d["color"])


@dataclass(frozen=True)
class Intersection:
    id: int
    bbox: Box

    def to_dict(self) -> dict:
        return {"id": self.id, "bbox": list(self.bbox)}

    @classmethod
    def from_dict(cls, d: dict) -> "Intersection":
        return cls(int(d["id"]), _box(d["bbox"], "intersections.bbox"))


@dataclass(frozen=True)
class Obstacle:
    id: int
    lane_id: int
    bbox: Box

    def to_dict(self) -> dict:
        return {"id": self.id, "lane_id": self.lane_id, "bbox": list(self.bbox)}

    @classmethod
    def from_dict(cls, d: dict) -> "Obstacle":
        return cls(int(d["id"]), int(d["lane_id"]), _box(d["bbox"], "obstacles.bbox"))


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    time_s: float
    ego: EgoState
    vehicles: tuple[VehicleState, ...] = ()
    lights: tuple[Light, ...] = ()
    intersections: tuple[Intersection, ...] = ()
    obstacles: tuple[Obstacle, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "time_s": self.time_s,
            "ego": self.ego.to_dict(),
            "vehicles": [v.to_dict() for v in self.vehicles],
            "lights": [l.to_dict() for l in self.lights],
            "intersections": [i.to_dict() for i in self.intersections],
            "obstacles": [o.to_dict() for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        try:
            frame = cls(
                frame=int(d["frame"]),
                time_s=float(d["time_s"]),
                ego=EgoState.from_dict(d["ego"]),
                vehicles=tuple(VehicleState.from_dict(v) for v in d.get("vehicles", [])),
                lights=tuple(Light.from_dict(l) for l in d.get("lights", [])),
                intersections=tuple(Intersection.from_dict(i) for i in d.get("intersections", [])),
                obstacles=tuple(Obstacle.from_dict(o) for o in d.get("obstacles", [])),
            )
        except KeyError as exc:
            raise ConfigError(f"missing key {exc.args[0]!r} in frame record") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed frame record: {exc}") from exc
        known = {i.id for i in frame.intersections}
        for light in frame.lights:
            if light.intersection_id not in known:
                raise ConfigError(
                    f"light {light.id} references unknown intersection {light.intersection_id}",
                    f"frame {frame.frame}",
                )
        return frame

    def with_(self, **changes) -> "FrameRecord":
        return replace(self, **changes)

    def light_for(self, intersection_id: int, approach: str) -> Light | None:
        for light in self.lights:
            if light.intersection_id == intersection_id and light.approach == approach:
                return light
        return None


def dumps_frame(frame: FrameRecord) -> str:
    # repr-based float formatting in json is already shortest round-trip.
    return json.dumps(frame.to_dict(), separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def write_log(path: str | Path, frames: Iterable[FrameRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in frames:
            fh.write(dumps_frame(frame))
            fh.write("\n")


def iter_log(path: str | Path) -> Iterator[FrameRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            yield FrameRecord.from_dict(data)


def read_log(path: str | Path) -> list[FrameRecord]:
    frames = list(iter_log(path))
    check_frame_sequence(frames)
    return frames


def check_frame_sequence(frames: list[FrameRecord]) -> None:
    for prev, cur in zip(frames, frames[1:]):
        if cur.frame != prev.frame + 1:
            raise ConfigError(f"frame indices not consecutive: {prev.frame} then {cur.frame}", "frame")


def box_center(box: Box) -> tuple[float, float]:
    return ((box[0] + box[2]) / 2.0, (box[1] + box[3]) / 2.0)
