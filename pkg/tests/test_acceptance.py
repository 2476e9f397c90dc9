"""End-to-end acceptance criteria; each prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or ``python3 tests/test_acceptance.py``).
"""

import dataclasses
import hashlib
import random
import time

import pytest

from avreason.cli import main
from avreason.engine import evaluate, parse_program
from avreason.metrics import ConfusionCounts, f_score, metrics, score_lights, score_obstacles
from avreason.perception import NoiseConfig, corrupt_log
from avreason.reasoner import ReasonerConfig, baseline_classification, combine, reason_log
from avreason.sim import WorldConfig, run_scenario

from conftest import scenario_path
from corpus import CASES, run
from oracles import naive_model, random_program

RESULTS: list[str] = []

# Published (accuracy, precision, recall, f_score) rows for the traffic-light task.
PUBLISHED_LIGHT_ROWS = {
    "town 1, 100 NPCs, logic": (.9632, .9663, .9942, .98),
    "town 1, 100 NPCs, baseline": (.479, .6579, .145, .237),
    "town 1, 100 NPCs, combined": (.9547, .9297, .9942, .9609),
    "town 1, 200 NPCs, logic": (1, 1, 1, 1),
    "town 1, 200 NPCs, baseline": (.7634, .5, .4091, .45),
    "town 1, 200 NPCs, combined": (.8387, .64, .7272, .6809),
}


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def perfect(row) -> bool:
    m = row.metrics
    return row.counts.total > 0 and (m.accuracy, m.precision, m.recall, m.f_score) == (1.0, 1.0, 1.0, 1.0)


def scenario(name):
    return WorldConfig.load(scenario_path(name))


def test_criterion_1_logic_perfect_on_scenario_a():
    start = time.perf_counter()
    gt = run_scenario(scenario("scenario_a.json"))
    det = corrupt_log(gt, NoiseConfig.load(scenario_path("noise_a.json")))
    verdicts = reason_log(det)
    row = score_lights(gt, det, verdicts).row("logic")
    elapsed = time.perf_counter() - start
    m = row.metrics
    record(1, "scenario A logic row is 1/1/1/1 in under 10 s", perfect(row) and elapsed < 10.0,
           f"acc={m.accuracy} p={m.precision} r={m.recall} f={m.f_score} "
           f"eligible={row.counts.total} time={elapsed:.2f}s")


def test_criterion_2_baseline_red_recall():
    gt = run_scenario(scenario("scenario_a.json"))
    base = NoiseConfig.load(scenario_path("noise_a.json"))
    pooled = ConfusionCounts()
    frames = 0
    for seed in (11, 12, 13):
        det = corrupt_log(gt, dataclasses.replace(base, seed=seed))
        report = score_lights(gt, det, reason_log(det))
        pooled = pooled + report.row("baseline").counts
        frames += report.total_frame_count
    recall = metrics(pooled).recall
    record(2, "baseline red recall within [0.45, 0.55] over >= 1000 frames",
           frames >= 1000 and 0.45 <= recall <= 0.55, f"frames={frames} recall={recall:.4f}")


def test_criterion_3_combined_uplift(gt_a, det_a, verdicts_a):
    report = score_lights(gt_a, det_a, verdicts_a)
    base = report.row("baseline").metrics.accuracy
    comb = report.row("combined").metrics.accuracy
    share = report.eligible_frame_count / report.total_frame_count
    mismatched = []
    for det, v in zip(det_a, verdicts_a):
        b = baseline_classification(det)
        c = combine(b, v)
        if not v.light_eligible and c.light_color != b.light_color:
            mismatched.append(det.frame)
        if not v.obstacle_eligible and c.obstacle_lanes != b.obstacle_lanes:
            mismatched.append(det.frame)
    record(3, "combined beats baseline by >= 0.05 with >= 10% eligible; ineligible frames pass through",
           share >= 0.10 and comb - base >= 0.05 and not mismatched,
           f"eligible share={share:.3f} baseline={base:.4f} combined={comb:.4f} pass-through breaks={len(mismatched)}")


def test_criterion_4_occluded_obstacle():
    start = time.perf_counter()
    gt = run_scenario(scenario("scenario_b.json"))
    det = corrupt_log(gt, NoiseConfig.load(scenario_path("noise_b.json")))
    report = score_obstacles(gt, det, reason_log(det))
    elapsed = time.perf_counter() - start
    logic, base = report.row("logic"), report.row("baseline")
    record(4, "scenario B logic obstacle row is 1/1/1/1, baseline recall <= 0.7, under 5 s",
           perfect(logic) and base.metrics.recall <= 0.7 and elapsed < 5.0,
           f"logic f={logic.metrics.f_score} eligible={logic.counts.total} "
           f"baseline recall={base.metrics.recall:.4f} time={elapsed:.2f}s")


def test_criterion_5_engine_matches_oracle():
    mismatched = 0
    for seed in range(100):
        text, facts = random_program(random.Random(seed))
        program = parse_program(text)
        mismatched += len(evaluate(program, facts).atoms() ^ naive_model(program.rules, facts))
    record(5, "100 random programs agree with the naive fixpoint", mismatched == 0,
           f"mismatched atoms={mismatched}")


def test_criterion_6_published_f_scores():
    worst = max(abs(f_score(p, r) - f) for _, p, r, f in PUBLISHED_LIGHT_ROWS.values())
    record(6, "recomputed F within 0.005 of every published light row", worst <= 0.005,
           f"rows={len(PUBLISHED_LIGHT_ROWS)} max deviation={worst:.4f}")


def _digests(workdir):
    a, noise = str(scenario_path("scenario_a.json")), str(scenario_path("noise_a.json"))
    gt, det, rep = workdir / "gt.jsonl", workdir / "det.jsonl", workdir / "report.json"
    codes = [
        main(["simulate", "--config", a, "--out", str(gt)]),
        main(["corrupt", "--in", str(gt), "--noise", noise, "--out", str(det)]),
        main(["pipeline", "--config", a, "--noise", noise, "--out", str(rep), "--csv", str(workdir / "report.csv")]),
    ]
    assert codes == [0, 0, 0]
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(workdir.iterdir())}


def test_criterion_7_determinism(tmp_path):
    runs = []
    for i in range(3):
        d = tmp_path / f"run{i}"
        d.mkdir()
        runs.append(_digests(d))
    record(7, "simulate, corrupt and pipeline reruns are byte-identical, twice",
           runs[0] == runs[1] == runs[2] and len(runs[0]) == 8, f"files={len(runs[0])} runs={len(runs)}")


def test_criterion_8_rejection_suite(tmp_path):
    failures = []
    for i, case in enumerate(CASES):
        d = tmp_path / f"case{i}"
        d.mkdir()
        code, err = run(case, d)
        if code != case.code or not all(m in err for m in case.mentions):
            failures.append(f"{case.name}: exit {code}")
    record(8, "malformed inputs rejected with the right exit code and message",
           len(CASES) == 20 and not failures, f"cases={len(CASES)} failures={failures or 0}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
