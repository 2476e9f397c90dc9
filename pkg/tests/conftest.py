from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

import pytest

from avreason.perception import NoiseConfig, corrupt_log
from avreason.reasoner import ReasonerConfig, reason_log
from avreason.records import EgoState, FrameRecord, Intersection, Light, Obstacle, VehicleState, classify_action
from avreason.sim import WorldConfig, run_scenario

SCENARIOS = Path(str(resources.files("avreason") / "scenarios"))


def scenario_path(name: str) -> Path:
    return SCENARIOS / name


def vehicle(id, x, y, vx=0.0, vy=0.0, lane=0, size=(4.0, 2.0), rot=None) -> VehicleState:
    w, h = size
    if rot is None:
        rot = 90.0 if vy > abs(vx) else 0.0
    return VehicleState(id, x, y, vx, vy, rot, (x - w / 2, y - h / 2, x + w / 2, y + h / 2), lane,
                        classify_action(vx, vy))


def ego(x=0.0, y=-20.0, approach="N", vx=0.0, vy=0.0, lane=0) -> EgoState:
    return EgoState(0, x, y, vx, vy, 90.0, (x - 1, y - 2, x + 1, y + 2), lane, classify_action(vx, vy), approach)


def frame(f=0, ego_state=None, vehicles=(), lights=(), intersections=(), obstacles=()) -> FrameRecord:
    return FrameRecord(f, f / 10, ego_state or ego(), tuple(vehicles), tuple(lights),
                       tuple(intersections), tuple(obstacles))


def crossing(f=0, ego_color="red", cross=((-3.0, 1.5, 8.0), (2.0, 1.5, 8.0), (-6.0, -1.5, 8.0))) -> FrameRecord:
    """Ego heading north 20 m south of a 14 m intersection, cross traffic moving east."""
    inter = Intersection(1, (-7.0, -7.0, 7.0, 7.0))
    other = {"red": "green", "green": "red", "yellow": "red"}[ego_color]
    lights = (Light(10, 1, "N", ego_color), Light(11, 1, "S", ego_color),
              Light(12, 1, "E", other), Light(13, 1, "W", other))
    cars = [vehicle(100 + i, x, y, vx=v, lane=5) for i, (x, y, v) in enumerate(cross)]
    return frame(f, ego(), cars, lights, (inter,))


@pytest.fixture(scope="session")
def world_a() -> WorldConfig:
    return WorldConfig.load(scenario_path("scenario_a.json"))


@pytest.fixture(scope="session")
def gt_a(world_a):
    return run_scenario(world_a)


@pytest.fixture(scope="session")
def noise_a() -> NoiseConfig:
    return NoiseConfig.load(scenario_path("noise_a.json"))


@pytest.fixture(scope="session")
def det_a(gt_a, noise_a):
    return corrupt_log(gt_a, noise_a)


@pytest.fixture(scope="session")
def verdicts_a(det_a):
    return reason_log(det_a, None, ReasonerConfig())


@pytest.fixture(scope="session")
def clean_verdicts_a(gt_a):
    return reason_log(gt_a, None, ReasonerConfig())


@pytest.fixture(scope="session")
def world_b() -> WorldConfig:
    return WorldConfig.load(scenario_path("scenario_b.json"))


@pytest.fixture(scope="session")
def gt_b(world_b):
    return run_scenario(world_b)


@pytest.fixture(scope="session")
def det_b(gt_b):
    return corrupt_log(gt_b, NoiseConfig.load(scenario_path("noise_b.json")))


@pytest.fixture(scope="session")
def verdicts_b(det_b):
    return reason_log(det_b, None, ReasonerConfig())


def pytest_terminal_summary(terminalreporter):
    # Acceptance results read best as one block at the end of the run.
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
