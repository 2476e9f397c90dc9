"""Detection frames -> relational facts for the rule engine.

Schema (every first argument is the frame index)::

    property_vehicle(Frame, Id, Action, Vx, Vy, Rot, X1, Y1, X2, Y2)
    property_intersection(Frame, Id, X1, Y1, X2, Y2)
    vehicle_in_frame(Frame, Id)
    vehicle_lane(Frame, Id, LaneId)
    light_observed(Frame, LightId, IntersectionId, Approach, Color)
    obstacle_observed(Frame, Id, LaneId)
    ego(Frame, Approach, X, Y)

Approaches are written in the rules' vocabulary: up, down, left, right.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .engine.parser import parse_rules
from .engine.syntax import Const, format_constant
from .errors import RuleSyntaxError, SchemaError
from .records import AXIS_NAMES, FrameRecord, classify_action

Atom = tuple  # (predicate, *args)

SCHEMA = {
    "property_vehicle": 10,
    "property_intersection": 6,
    "vehicle_in_frame": 2,
    "vehicle_lane": 3,
    "light_observed": 5,
    "obstacle_observed": 3,
    "ego": 4,
}

__all__ = ["Atom", "FactSet", "SCHEMA", "classify_action", "extract_facts", "frame_atoms",
           "read_fact_file", "write_fact_file", "format_atom"]


@dataclass(frozen=True)
class FactSet:
    frame_lo: int
    frame_hi: int
    atoms: frozenset

    def __post_init__(self):
        for atom in self.atoms:
            if not self.frame_lo <= atom[1] <= self.frame_hi:
                raise SchemaError(f"atom {format_atom(atom)} outside window [{self.frame_lo}, {self.frame_hi}]")

    def predicates(self) -> set[str]:
        return {a[0] for a in self.atoms}

    def __len__(self) -> int:
        return len(self.atoms)


def frame_atoms(rec: FrameRecord) -> list[Atom]:
    f = rec.frame
    out: list[Atom] = [("ego", f, AXIS_NAMES[rec.ego.approach], rec.ego.x, rec.ego.y)]
    for v in rec.vehicles:
        out.append(("property_vehicle", f, v.id, classify_action(v.vx, v.vy), v.vx, v.vy, v.rot, *v.bbox))
        out.append(("vehicle_in_frame", f, v.id))
        out.append(("vehicle_lane", f, v.id, v.lane_id))
    for inter in rec.intersections:
        out.append(("property_intersection", f, inter.id, *inter.bbox))
    for light in rec.lights:
        out.append(("light_observed", f, light.id, light.intersection_id, AXIS_NAMES[light.approach], light.color))
    for ob in rec.obstacles:
        out.append(("obstacle_observed", f, ob.id, ob.lane_id))
    return out


def extract_facts(log: Sequence[FrameRecord], window: int = 1) -> list[FactSet]:
    """One FactSet per frame, covering that frame and the ``window - 1`` before it."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    per_frame = [frame_atoms(rec) for rec in log]
    out = []
    for i, rec in enumerate(log):
        lo = max(0, i - window + 1)
        atoms = frozenset(a for chunk in per_frame[lo:i + 1] for a in chunk)
        out.append(FactSet(log[lo].frame, rec.frame, atoms))
    return out


def format_atom(atom: Atom) -> str:
    pred, *args = atom
    return f"{pred}({','.join(format_constant(a) for a in args)})."


def write_fact_file(path: str | Path, atoms: Iterable[Atom]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for atom in atoms:
            fh.write(format_atom(atom))
            fh.write("\n")


def read_fact_file(path: str | Path) -> list[Atom]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise RuleSyntaxError(f"cannot read fact file {path}: {exc.strerror}", 0, 0) from exc
    atoms = []
    for rule in parse_rules(text):
        if rule.body or not all(isinstance(a, Const) for a in rule.head.args):
            raise RuleSyntaxError(f"fact file {path} may only contain ground facts: `{rule}`", 0, 0)
        atoms.append((rule.head.predicate, *(a.value for a in rule.head.args)))
    return atoms


def group_by_frame(atoms: Iterable[Atom]) -> dict[int, list[Atom]]:
    frames: dict[int, list[Atom]] = {}
    for atom in atoms:
        if len(atom) < 2 or not isinstance(atom[1], int):
            raise SchemaError(f"fact {format_atom(atom)} has no integer frame argument")
        expected = SCHEMA.get(atom[0])
        if expected is not None and expected != len(atom) - 1:
            raise SchemaError(f"{atom[0]} expects {expected} arguments, got {len(atom) - 1}")
        frames.setdefault(atom[1], []).append(atom)
    return frames
