"""Commonsense verdicts from rule models, and their fusion with the baseline.

The shipped rules live in ``rules/*.csr``. Tunable numbers reach them as
``param(Name, Value)`` facts and rule toggles as ``switch(Name)`` facts, so
a user-supplied rule file sees exactly the same context.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .engine import Model, Program, evaluate, load_program, parse_program
from .errors import ConfigError, SchemaError
from .facts import Atom, frame_atoms, group_by_frame
from .records import FrameRecord, Intersection

RULE_FILES = ("lights.csr", "obstacles.csr")

# Rule heads that constitute a verdict; everything else is intermediate.
VERDICT_HEADS = ("false_negative_light", "inferred_green", "lane_blocked")


@dataclass(frozen=True)
class ReasonerConfig:
    k: int = 2
    margin_m: float = 5.0
    lookahead_m: float = 40.0
    window: int = 30
    # Vehicles creeping through a clearing intersection are not a flow.
    min_speed_mps: float = 4.0
    stop_zone_m: float = 60.0
    green_rule: bool = True
    stopping_rule: bool = True
    vacating_rule: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}", "k")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}", "window")
        for name in ("margin_m", "lookahead_m", "min_speed_mps", "stop_zone_m"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0", name)

    def context_atoms(self) -> list[Atom]:
        atoms: list[Atom] = [
            ("param", "k", self.k),
            ("param", "margin", float(self.margin_m)),
            ("param", "lookahead", float(self.lookahead_m)),
            ("param", "min_speed", float(self.min_speed_mps)),
            ("param", "stop_zone", float(self.stop_zone_m)),
        ]
        for name, on in (("green_rule", self.green_rule), ("stopping_rule", self.stopping_rule),
                         ("vacating_rule", self.vacating_rule)):
            if on:
                atoms.append(("switch", name))
        return atoms


def standard_rules() -> dict[str, str]:
    """File name -> source text of the shipped rule files."""
    base = resources.files("avreason") / "rules"
    return {name: (base / name).read_text(encoding="utf-8") for name in RULE_FILES}


def standard_program() -> Program:
    """All shipped rules as one program (for inspection and single-window use)."""
    return parse_program("\n".join(standard_rules().values()))


@dataclass(frozen=True)
class RuleSet:
    """Programs to run per frame, each over its own window length.

    The light rules read only the current frame; the obstacle rules look back
    over ``window`` frames for lane changes.
    """

    programs: tuple[tuple[Program, int], ...]

    @classmethod
    def standard(cls, cfg: "ReasonerConfig") -> "RuleSet":
        src = standard_rules()
        return cls(((parse_program(src["lights.csr"]), 1),
                    (parse_program(src["obstacles.csr"]), cfg.window)))

    @classmethod
    def single(cls, program: Program, window: int) -> "RuleSet":
        return cls(((program, window),))


def load_rules(path: str | Path | None, cfg: "ReasonerConfig") -> RuleSet:
    """Shipped rules when ``path`` is None, otherwise the given file replaces them."""
    if path is None:
        return RuleSet.standard(cfg)
    return RuleSet.single(load_program(path), cfg.window)


@dataclass(frozen=True)
class Verdict:
    frame: int
    light_verdict: str | None = None
    light_eligible: bool = False
    obstacle_lanes: tuple[int, ...] = ()
    obstacle_eligible: bool = False
    fired_rules: tuple[str, ...] = ()

    def __post_init__(self):
        if self.light_verdict not in (None, "red", "green"):
            raise ValueError(f"light_verdict must be red, green or None, got {self.light_verdict!r}")
        if (self.light_verdict is not None) != self.light_eligible:
            raise ValueError("light verdict and eligibility disagree")
        if bool(self.obstacle_lanes) != self.obstacle_eligible:
            raise ValueError("obstacle verdict and eligibility disagree")
        if bool(self.fired_rules) != (self.light_eligible or self.obstacle_eligible):
            raise ValueError("fired_rules must be nonempty exactly when a verdict is set")

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "light_verdict": self.light_verdict,
            "light_eligible": self.light_eligible,
            "obstacle_lanes": list(self.obstacle_lanes),
            "obstacle_eligible": self.obstacle_eligible,
            "fired_rules": list(self.fired_rules),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        try:
            return cls(
                frame=int(d["frame"]),
                light_verdict=d.get("light_verdict"),
                light_eligible=bool(d.get("light_eligible", False)),
                obstacle_lanes=tuple(sorted(int(x) for x in d.get("obstacle_lanes", ()))),
                obstacle_eligible=bool(d.get("obstacle_eligible", False)),
                fired_rules=tuple(d.get("fired_rules", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad verdict record {d!r}: {exc}", "verdicts") from exc


def _holds(model: Model, pred: str, *args) -> bool:
    return pred in model.arities and (*args,) in model.relations.get(pred, ())


def extract_verdict(model: Model, frame: int) -> Verdict:
    fired = [h for h in ("false_negative_light", "inferred_green") if _holds(model, h, frame)]
    lanes: tuple[int, ...] = ()
    if "lane_blocked" in model.arities:
        lanes = tuple(sorted(row[1] for row in model.relations.get("lane_blocked", ()) if row[0] == frame))
        if lanes:
            fired.append("lane_blocked")
    if "false_negative_light" in fired:
        light = "red"  # red wins any conflict with inferred_green
    elif "inferred_green" in fired:
        light = "green"
    else:
        light = None
    return Verdict(frame, light, light is not None, lanes, bool(lanes), tuple(fired))


def _windows(frames: dict[int, list[Atom]], window: int) -> Iterator[tuple[int, dict[str, set]]]:
    """Per frame, the relations of its window as ``pred -> argument tuples``.

    Same content as the FactSets from ``extract_facts``, built by set union
    so long windows stay cheap.
    """
    order = sorted(frames)
    grouped: dict[int, dict[str, set]] = {}
    for f in order:
        rels: dict[str, set] = {}
        for atom in frames[f]:
            rels.setdefault(atom[0], set()).add(atom[1:])
        grouped[f] = rels
    for i, f in enumerate(order):
        span = [grouped[g] for g in order[max(0, i - window + 1):i + 1]]
        preds = {p for rels in span for p in rels}
        yield f, {p: set().union(*(rels.get(p, ()) for rels in span)) for p in preds}


def merge_models(models: Sequence[Model]) -> Model:
    relations: dict[str, frozenset] = {}
    arities: dict[str, int] = {}
    for m in models:
        arities.update(m.arities)
        for pred, rows in m.relations.items():
            relations[pred] = relations.get(pred, frozenset()) | rows
    return Model(relations, arities)


def reason_atoms(atoms: Iterable[Atom], rules: RuleSet | Program | None = None,
                 cfg: ReasonerConfig | None = None) -> list[Verdict]:
    """Verdict per frame for a flat collection of extracted atoms."""
    cfg = cfg or ReasonerConfig()
    if rules is None:
        rules = RuleSet.standard(cfg)
    elif isinstance(rules, Program):
        rules = RuleSet.single(rules, cfg.window)
    frames = group_by_frame(atoms)
    per_program = []
    for program, window in rules.programs:
        context = [a for a in cfg.context_atoms() + [("current_frame", 0)]
                   if a[0] not in program.intensional]
        anchor = any(a[0] == "current_frame" for a in context)
        context = [a for a in context if a[0] != "current_frame"]
        models = {}
        for f, rels in _windows(frames, window):
            for atom in context + [("current_frame", f)] if anchor else context:
                rels.setdefault(atom[0], set()).add(atom[1:])
            models[f] = evaluate(program, rels)
        per_program.append(models)
    out = []
    for f in sorted(frames):
        models = [m[f] for m in per_program]
        out.append(extract_verdict(models[0] if len(models) == 1 else merge_models(models), f))
    return out


def reason_log(det_log: Sequence[FrameRecord], rules: RuleSet | Program | None = None,
               cfg: ReasonerConfig | None = None) -> list[Verdict]:
    return reason_atoms((a for rec in det_log for a in frame_atoms(rec)), rules, cfg)


def write_verdicts(path: str | Path, verdicts: Iterable[Verdict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in verdicts:
            fh.write(json.dumps(v.to_dict(), separators=(",", ":")))
            fh.write("\n")


def read_verdicts(path: str | Path) -> list[Verdict]:
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{n}: invalid JSON ({exc.msg})", "verdicts") from exc
                out.append(Verdict.from_dict(d))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "verdicts") from exc
    return out


def front_intersection(rec: FrameRecord, lookahead_m: float) -> Intersection | None:
    """The intersection ego is about to enter, by the same test the rules use."""
    ego = rec.ego
    best, best_d = None, None
    for inter in rec.intersections:
        x1, y1, x2, y2 = inter.bbox
        if ego.approach in ("N", "S"):
            inside = x1 < ego.x < x2
            d = y1 - ego.y if ego.approach == "N" else ego.y - y2
        else:
            inside = y1 < ego.y < y2
            d = x1 - ego.x if ego.approach == "E" else ego.x - x2
        if inside and 0 <= d <= lookahead_m and (best_d is None or d < best_d):
            best, best_d = inter, d
    return best


@dataclass(frozen=True)
class BaselineClassification:
    frame: int
    light_color: str
    obstacle_lanes: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class CombinedClassification:
    frame: int
    light_color: str
    obstacle_lanes: frozenset
    source: str
    obstacle_source: str


def baseline_classification(det: FrameRecord, lookahead_m: float = 40.0) -> BaselineClassification:
    color = "unknown"
    inter = front_intersection(det, lookahead_m)
    if inter is not None:
        light = det.light_for(inter.id, det.ego.approach)
        if light is not None:
            color = light.color
    return BaselineClassification(det.frame, color, frozenset(o.lane_id for o in det.obstacles))


def combine(baseline: BaselineClassification, v: Verdict) -> CombinedClassification:
    if baseline.frame != v.frame:
        raise SchemaError(f"combining frame {baseline.frame} with verdict for frame {v.frame}")
    color, source = baseline.light_color, "baseline"
    if v.light_eligible:
        color, source = v.light_verdict, "logic-override"
    lanes, obstacle_source = baseline.obstacle_lanes, "baseline"
    if v.obstacle_eligible:
        lanes, obstacle_source = lanes | frozenset(v.obstacle_lanes), "logic-override"
    return CombinedClassification(v.frame, color, lanes, source, obstacle_source)
