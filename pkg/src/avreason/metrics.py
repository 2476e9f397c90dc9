"""Accuracy, precision, recall and F-score for the logic, baseline and combined models."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import AlignmentError, EmptyEvaluationError
from .reasoner import Verdict, baseline_classification, combine, front_intersection
from .records import FrameRecord

MODELS = ("logic", "baseline", "combined")
TASKS = ("lights", "obstacles")
CSV_COLUMNS = ("model", "task", "accuracy", "precision", "recall", "f_score",
               "tp", "fp", "fn", "tn", "eligible", "total")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @classmethod
    def tally(cls, pairs) -> "ConfusionCounts":
        """Count (truth, predicted) boolean pairs."""
        tp = fp = fn = tn = 0
        for truth, pred in pairs:
            if truth and pred:
                tp += 1
            elif pred:
                fp += 1
            elif truth:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, fn, tn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f_score: float
    # Names of metrics whose denominator was zero; those values are 0.
    undefined: tuple[str, ...] = ()


def _ratio(num: float, den: float, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def f_score(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def metrics(c: ConfusionCounts) -> Metrics:
    if c.total == 0:
        raise EmptyEvaluationError("no evaluated frames")
    undefined: list[str] = []
    accuracy = (c.tp + c.tn) / c.total
    precision = _ratio(c.tp, c.tp + c.fp, "precision", undefined)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", undefined)
    if undefined or precision + recall == 0:
        undefined.append("f_score")
        f = 0.0
    else:
        f = f_score(precision, recall)
    return Metrics(accuracy, precision, recall, f, tuple(undefined))


@dataclass(frozen=True)
class ModelRow:
    model: str
    task: str
    counts: ConfusionCounts
    metrics: Metrics
    eligible: int
    total: int

    def to_dict(self) -> dict:
        m = self.metrics
        return {
            "model": self.model,
            "task": self.task,
            "accuracy": m.accuracy,
            "precision": m.precision,
            "recall": m.recall,
            "f_score": m.f_score,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "tn": self.counts.tn,
            "eligible": self.eligible,
            "total": self.total,
            "undefined": list(m.undefined),
        }


@dataclass(frozen=True)
class MetricsReport:
    task: str
    rows: tuple[ModelRow, ...]
    eligible_frame_count: int
    total_frame_count: int

    def row(self, model: str) -> ModelRow:
        return next(r for r in self.rows if r.model == model)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "eligible_frame_count": self.eligible_frame_count,
            "total_frame_count": self.total_frame_count,
            "models": {r.model: r.to_dict() for r in self.rows},
        }


def _row(model: str, task: str, counts: ConfusionCounts, eligible: int) -> ModelRow:
    if counts.total == 0:
        # Nothing to score (e.g. logic with no eligible frame): all zero, all undefined.
        m = Metrics(0.0, 0.0, 0.0, 0.0, ("accuracy", "precision", "recall", "f_score"))
    else:
        m = metrics(counts)
    return ModelRow(model, task, counts, m, eligible, counts.total)


def check_alignment(gt_log: Sequence[FrameRecord], det_log: Sequence[FrameRecord],
                    verdicts: Sequence[Verdict]) -> None:
    gt = [r.frame for r in gt_log]
    det = [r.frame for r in det_log]
    ver = [v.frame for v in verdicts]
    if gt == det == ver:
        return
    bad = sorted(set(gt) ^ set(det) | set(gt) ^ set(ver))
    if not bad:
        # Same frames, different order or duplicates.
        bad = sorted({a for a, b, c in zip(gt, det, ver) if not a == b == c})
        n = min(len(gt), len(det), len(ver))
        bad += [f for f in gt[n:] + det[n:] + ver[n:] if f not in bad]
    raise AlignmentError("ground truth, detections and verdicts disagree", bad)


def score_lights(gt_log: Sequence[FrameRecord], det_log: Sequence[FrameRecord],
                 verdicts: Sequence[Verdict], lookahead_m: float = 40.0) -> MetricsReport:
    """Red-light classification on frames where ego faces a light within the lookahead.

    Yellow counts as not-red. Logic is scored on eligible frames only.
    """
    check_alignment(gt_log, det_log, verdicts)
    pairs = {m: [] for m in MODELS}
    eligible = 0
    for gt, det, v in zip(gt_log, det_log, verdicts):
        inter = front_intersection(gt, lookahead_m)
        light = gt.light_for(inter.id, gt.ego.approach) if inter is not None else None
        if light is None:
            continue
        truth = light.color == "red"
        base = baseline_classification(det, lookahead_m)
        combined = combine(base, v)
        pairs["baseline"].append((truth, base.light_color == "red"))
        pairs["combined"].append((truth, combined.light_color == "red"))
        if v.light_eligible:
            eligible += 1
            pairs["logic"].append((truth, v.light_verdict == "red"))
    total = len(pairs["baseline"])
    rows = tuple(_row(m, "lights", ConfusionCounts.tally(pairs[m]), eligible) for m in MODELS)
    return MetricsReport("lights", rows, eligible, total)


def score_obstacles(gt_log: Sequence[FrameRecord], det_log: Sequence[FrameRecord],
                    verdicts: Sequence[Verdict], lookahead_m: float = 40.0) -> MetricsReport:
    """Blocked-lane classification scored per (frame, lane).

    The lanes judged on a frame are those any source mentions: a true
    obstacle, a detected obstacle, or an eligible logic verdict.
    """
    check_alignment(gt_log, det_log, verdicts)
    pairs = {m: [] for m in MODELS}
    eligible = total = 0
    for gt, det, v in zip(gt_log, det_log, verdicts):
        truth = {o.lane_id for o in gt.obstacles}
        combined = combine(baseline_classification(det, lookahead_m), v)
        base = {o.lane_id for o in det.obstacles}
        logic = set(v.obstacle_lanes) if v.obstacle_eligible else set()
        lanes = sorted(truth | base | logic)
        if not lanes:
            continue
        total += 1
        eligible += v.obstacle_eligible
        for lane in lanes:
            pairs["baseline"].append((lane in truth, lane in base))
            pairs["combined"].append((lane in truth, lane in combined.obstacle_lanes))
            if v.obstacle_eligible:
                pairs["logic"].append((lane in truth, lane in logic))
    rows = tuple(_row(m, "obstacles", ConfusionCounts.tally(pairs[m]), eligible) for m in MODELS)
    return MetricsReport("obstacles", rows, eligible, total)


def report_dict(reports: Sequence[MetricsReport], meta: dict | None = None) -> dict:
    out: dict = {"tasks": {r.task: r.to_dict() for r in reports}}
    if meta:
        out["run"] = meta
    return out


def write_json_report(path: str | Path, reports: Sequence[MetricsReport], meta: dict | None = None) -> None:
    text = json.dumps(report_dict(reports, meta), indent=2, sort_keys=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def csv_text(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        for row in report.rows:
            d = row.to_dict()
            writer.writerow([d["model"], d["task"]]
                            + [f"{d[k]:.4f}" for k in ("accuracy", "precision", "recall", "f_score")]
                            + [d[k] for k in ("tp", "fp", "fn", "tn", "eligible", "total")])
    return buf.getvalue()


def write_csv_report(path: str | Path, reports: Sequence[MetricsReport]) -> None:
    Path(path).write_text(csv_text(reports), encoding="utf-8")
