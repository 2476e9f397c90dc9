import dataclasses
import random

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from avreason.errors import ConfigError
from avreason.perception import NoiseConfig, corrupt_frame, corrupt_log, occluded
from avreason.records import Obstacle

from conftest import crossing, ego, frame, vehicle
from oracles import sampled_crossing

TARGET = (9.0, -1.0, 11.0, 1.0)


def test_occluder_on_ray():
    assert occluded((0, 0), TARGET, [(4, -1, 6, 1)])


def test_no_occluders():
    assert not occluded((0, 0), TARGET, [])


def test_occluder_touching_ray_only():
    assert not occluded((0, 0), TARGET, [(4, 1, 6, 3)])


coord = st.floats(-30, 30, allow_nan=False)


@given(coord, coord, coord, coord, coord, coord, st.floats(0.5, 10), st.floats(0.5, 10))
def test_occlusion_matches_sampling(px, py, qx, qy, bx, by, w, h):
    box = (bx, by, bx + w, by + h)
    target = (qx - 1, qy - 1, qx + 1, qy + 1)
    inner = sampled_crossing((px, py), (qx, qy), box, grow=-0.05)
    outer = sampled_crossing((px, py), (qx, qy), box, grow=0.05)
    assume(inner == outer)
    assert occluded((px, py), target, [box]) == inner


NO_NOISE = NoiseConfig(light_flip_p=0.0, dropout_p=0.0, occlusion_enabled=False, detection_range_m=1e6)


def test_identity_without_noise(gt_a):
    assert corrupt_log(gt_a[:200], NO_NOISE) == gt_a[:200]


def test_full_flip_turns_red_green():
    rec = crossing(ego_color="red")
    out = corrupt_frame(rec, dataclasses.replace(NO_NOISE, light_flip_p=1.0), random.Random(0))
    before = {l.id: l.color for l in rec.lights}
    after = {l.id: l.color for l in out.lights}
    assert all(after[i] == "green" for i, c in before.items() if c == "red")
    assert all(after[i] == "red" for i, c in before.items() if c == "green")


def test_obstacle_behind_bus_is_hidden():
    # Ego heading east at the origin; a 12 m bus sits between ego and the obstacle.
    me = ego(x=0.0, y=0.0, approach="E")
    bus = vehicle(5, 20.0, 0.0, size=(12.0, 2.5))
    ob = Obstacle(1, 0, (40.0, -1.0, 42.0, 1.0))
    rec = frame(0, me, [bus], obstacles=[ob])
    cfg = dataclasses.replace(NO_NOISE, occlusion_enabled=True)
    assert occluded((0.0, 0.0), ob.bbox, [bus.bbox])
    assert corrupt_frame(rec, cfg, random.Random(0)).obstacles == ()
    # Without the bus the obstacle is seen.
    assert corrupt_frame(rec.with_(vehicles=()), cfg, random.Random(0)).obstacles == (ob,)


def test_out_of_range_objects_dropped():
    rec = frame(0, ego(x=0.0, y=0.0), [vehicle(3, 0.0, 100.0), vehicle(4, 0.0, 30.0)])
    out = corrupt_frame(rec, dataclasses.replace(NO_NOISE, detection_range_m=60.0), random.Random(0))
    assert [v.id for v in out.vehicles] == [4]


def test_empty_log():
    assert corrupt_log([], NoiseConfig(light_flip_p=0.5, seed=3)) == []


def test_deterministic(gt_a, noise_a):
    assert corrupt_log(gt_a, noise_a) == corrupt_log(gt_a, noise_a)


def test_seeds_differ(gt_a, noise_a):
    assert corrupt_log(gt_a, noise_a) != corrupt_log(gt_a, dataclasses.replace(noise_a, seed=noise_a.seed + 1))


def test_flip_rate_concentrates():
    log = [crossing(f, "red").with_(lights=crossing(f, "red").lights[:1]) for f in range(1000)]
    out = corrupt_log(log, NoiseConfig(light_flip_p=0.5, seed=7))
    red = sum(r.lights[0].color == "red" for r in out) / len(out)
    assert abs(red - 0.5) <= 0.05


def test_no_hallucination_and_geometry_fidelity(gt_a, det_a):
    for gt, det in zip(gt_a, det_a):
        truth = {v.id: v for v in gt.vehicles}
        assert all(truth[v.id] == v for v in det.vehicles)
        assert set(det.obstacles) <= set(gt.obstacles)
        assert det.ego == gt.ego
        assert det.intersections == gt.intersections
        assert [(l.id, l.intersection_id, l.approach) for l in det.lights] == \
               [(l.id, l.intersection_id, l.approach) for l in gt.lights]


def test_more_flips_never_help(gt_a):
    log = gt_a * 3
    accuracy = []
    for p in (0.1, 0.5):
        out = corrupt_log(log, NoiseConfig(light_flip_p=p, seed=1, occlusion_enabled=False, detection_range_m=1e6))
        pairs = [(a.color, b.color) for g, d in zip(log, out) for a, b in zip(g.lights, d.lights)]
        accuracy.append(sum(a == b for a, b in pairs) / len(pairs))
    assert accuracy[1] <= accuracy[0] + 0.05


@pytest.mark.parametrize("d", [
    {"light_flip_p": 1.5},
    {"dropout_p": -0.1},
    {"seed": -1},
    {"detection_range_m": 0},
    {"light_confusion": {"red": {"red": 1.0}}},
    {"light_confusion": {"red": {"green": 0.7}}},
    {"weather": "rain"},
])
def test_invalid_noise_config(d):
    with pytest.raises(ConfigError):
        NoiseConfig.from_dict(d)
