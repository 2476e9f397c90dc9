"""Stochastic stand-in for the baseline detector.

Ground-truth frames are corrupted into detections: light colours flip with a
configurable confusion model, and vehicles/obstacles disappear when occluded
(single centre ray), out of range, or (vehicles only) dropped at random.
Nothing is ever added and retained objects keep their exact geometry.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError
from .records import COLORS, Box, FrameRecord, box_center

DEFAULT_CONFUSION = {
    "red": {"green": 1.0},
    "green": {"red": 1.0},
    "yellow": {"red": 0.5, "green": 0.5},
}


@dataclass(frozen=True)
class NoiseConfig:
    light_flip_p: float = 0.0
    light_confusion: dict[str, dict[str, float]] = field(default_factory=lambda: dict(DEFAULT_CONFUSION))
    occlusion_enabled: bool = True
    detection_range_m: float = 60.0
    dropout_p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("light_flip_p", "dropout_p"):
            p = getattr(self, name)
            if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                raise ConfigError(f"probability must lie in [0, 1], got {p!r}", name)
        if not self.detection_range_m > 0:
            raise ConfigError("must be > 0", "detection_range_m")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"must be a 64-bit unsigned integer, got {self.seed!r}", "seed")
        for true_color in COLORS:
            dist = self.light_confusion.get(true_color)
            where = f"light_confusion.{true_color}"
            if dist is None:
                raise ConfigError("missing distribution", where)
            if set(dist) - set(COLORS):
                raise ConfigError(f"unknown colour(s) {sorted(set(dist) - set(COLORS))}", where)
            if dist.get(true_color, 0.0) != 0.0:
                raise ConfigError("must assign probability 0 to the true colour", where)
            if any(p < 0 for p in dist.values()) or not math.isclose(sum(dist.values()), 1.0, abs_tol=1e-9):
                raise ConfigError("probabilities must be non-negative and sum to 1", where)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseConfig":
        allowed = {"light_flip_p", "light_confusion", "occlusion_enabled", "detection_range_m", "dropout_p", "seed"}
        if not isinstance(d, dict):
            raise ConfigError("noise config must be a JSON object")
        extra = sorted(set(d) - allowed)
        if extra:
            raise ConfigError(f"unknown key(s) {', '.join(extra)}", "noise")
        confusion = dict(DEFAULT_CONFUSION)
        confusion.update(d.get("light_confusion", {}))
        return cls(
            light_flip_p=d.get("light_flip_p", 0.0),
            light_confusion=confusion,
            occlusion_enabled=bool(d.get("occlusion_enabled", True)),
            detection_range_m=float(d.get("detection_range_m", 60.0)),
            dropout_p=d.get("dropout_p", 0.0),
            seed=d.get("seed", 0),
        )

    @classmethod
    def load(cls, path: str | Path) -> "NoiseConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc


def _clip(p: tuple[float, float], q: tuple[float, float], box: Box) -> tuple[float, float] | None:
    """Liang-Barsky: parameter interval of segment pq inside the closed box."""
    t0, t1 = 0.0, 1.0
    dx, dy = q[0] - p[0], q[1] - p[1]
    for denom, num in ((-dx, p[0] - box[0]), (dx, box[2] - p[0]), (-dy, p[1] - box[1]), (dy, box[3] - p[1])):
        if denom == 0:
            if num < 0:
                return None
            continue
        t = num / denom
        if denom < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return t0, t1


def segment_hits_interior(p: tuple[float, float], q: tuple[float, float], box: Box) -> bool:
    span = _clip(p, q, box)
    if span is None or span[0] >= span[1]:
        return False
    # A positive-length overlap is interior unless it runs along an edge.
    t = (span[0] + span[1]) / 2
    x, y = p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])
    return box[0] < x < box[2] and box[1] < y < box[3]


def occluded(ego_pos: tuple[float, float], target: Box, occluders: Iterable[Box]) -> bool:
    center = box_center(target)
    return any(segment_hits_interior(ego_pos, center, box) for box in occluders)


def _pick(dist: dict[str, float], u: float) -> str:
    acc = 0.0
    last = None
    for color in COLORS:
        p = dist.get(color, 0.0)
        if p <= 0:
            continue
        acc += p
        last = color
        if u < acc:
            return color
    return last


def corrupt_frame(gt: FrameRecord, cfg: NoiseConfig, rng: random.Random) -> FrameRecord:
    """Corrupt one ground-truth frame.

    Draw order: per light, one flip draw and (on a flip) one colour draw;
    then one dropout draw per vehicle that survived occlusion and range.
    """
    lights = []
    for light in gt.lights:
        if rng.random() < cfg.light_flip_p:
            light = type(light)(light.id, light.intersection_id, light.approach,
                                _pick(cfg.light_confusion[light.color], rng.random()))
        lights.append(light)

    ego_pos = (gt.ego.x, gt.ego.y)
    boxes = {v.id: v.bbox for v in gt.vehicles}

    def hidden(target: Box, own_id: int | None) -> bool:
        cx, cy = box_center(target)
        if math.hypot(cx - ego_pos[0], cy - ego_pos[1]) > cfg.detection_range_m:
            return True
        if not cfg.occlusion_enabled:
            return False
        return occluded(ego_pos, target, (b for vid, b in boxes.items() if vid != own_id))

    vehicles = []
    for v in gt.vehicles:
        if hidden(v.bbox, v.id):
            continue
        if rng.random() < cfg.dropout_p:
            continue
        vehicles.append(v)
    obstacles = [o for o in gt.obstacles if not hidden(o.bbox, None)]
    return gt.with_(lights=tuple(lights), vehicles=tuple(vehicles), obstacles=tuple(obstacles))


def corrupt_log(gt_log: Sequence[FrameRecord], cfg: NoiseConfig) -> list[FrameRecord]:
    rng = random.Random(cfg.seed)
    return [corrupt_frame(frame, cfg, rng) for frame in gt_log]
