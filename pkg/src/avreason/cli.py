"""Command-line pipeline: simulate, corrupt, extract, reason, evaluate.

Exit codes: 0 success, 1 usage, 2 rule/fact parse error, 3 stratification
error, 4 configuration error, 5 frame alignment error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

from .errors import AVReasonError, ConfigError
from .facts import frame_atoms, read_fact_file, write_fact_file
from .metrics import score_lights, score_obstacles, write_csv_report, write_json_report
from .perception import NoiseConfig, corrupt_log
from .reasoner import ReasonerConfig, load_rules, read_verdicts, reason_atoms, write_verdicts
from .records import read_log, write_log
from .sim import WorldConfig, run_scenario

EXIT_USAGE = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _reasoner_config(args) -> ReasonerConfig:
    cfg = ReasonerConfig()
    changes = {}
    if getattr(args, "window", None) is not None:
        changes["window"] = args.window
    if getattr(args, "disable_green_rule", False):
        changes["green_rule"] = False
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _world(args) -> WorldConfig:
    cfg = WorldConfig.load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _noise(args) -> NoiseConfig:
    cfg = NoiseConfig.load(args.noise)
    if getattr(args, "seed", None) is not None and args.command == "corrupt":
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def cmd_simulate(args) -> None:
    write_log(args.out, run_scenario(_world(args)))


def cmd_corrupt(args) -> None:
    write_log(args.out, corrupt_log(read_log(args.input), _noise(args)))


def cmd_extract(args) -> None:
    write_fact_file(args.out, (a for rec in read_log(args.input) for a in frame_atoms(rec)))


def cmd_reason(args) -> None:
    cfg = _reasoner_config(args)
    # Rules first: a broken rule file should fail before any data is read.
    rules = load_rules(args.rules, cfg)
    if args.facts:
        atoms = read_fact_file(args.facts)
    else:
        atoms = [a for rec in read_log(args.input) for a in frame_atoms(rec)]
    write_verdicts(args.out, reason_atoms(atoms, rules, cfg))


def _evaluate(gt, det, verdicts, cfg: ReasonerConfig, out: str, csv_path: str | None, meta: dict) -> None:
    reports = [score_lights(gt, det, verdicts, cfg.lookahead_m),
               score_obstacles(gt, det, verdicts, cfg.lookahead_m)]
    write_json_report(out, reports, meta)
    if csv_path:
        write_csv_report(csv_path, reports)


def cmd_evaluate(args) -> None:
    gt, det, verdicts = read_log(args.gt), read_log(args.det), read_verdicts(args.verdicts)
    _evaluate(gt, det, verdicts, ReasonerConfig(), args.out, args.csv, {})


def artifact_paths(out: str | Path) -> dict[str, Path]:
    out = Path(out)
    stem = out.with_suffix("")
    return {
        "gt": stem.with_name(stem.name + ".gt.jsonl"),
        "det": stem.with_name(stem.name + ".det.jsonl"),
        "facts": stem.with_name(stem.name + ".facts"),
        "verdicts": stem.with_name(stem.name + ".verdicts.jsonl"),
    }


def cmd_pipeline(args) -> None:
    cfg = _reasoner_config(args)
    rules = load_rules(args.rules, cfg)
    world = _world(args)
    noise = _noise(args)
    paths = artifact_paths(args.out)
    gt = run_scenario(world)
    write_log(paths["gt"], gt)
    det = corrupt_log(gt, noise)
    write_log(paths["det"], det)
    atoms = [a for rec in det for a in frame_atoms(rec)]
    write_fact_file(paths["facts"], atoms)
    verdicts = reason_atoms(atoms, rules, cfg)
    write_verdicts(paths["verdicts"], verdicts)
    meta = {
        "world_seed": world.seed,
        "noise_seed": noise.seed,
        "frames": len(gt),
        "window": cfg.window,
        "green_rule": cfg.green_rule,
        "rules": "standard" if args.rules is None else Path(args.rules).name,
    }
    _evaluate(gt, det, verdicts, cfg, args.out, args.csv, meta)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="avreason", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a scenario and write the ground-truth log")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True, help="ground-truth JSONL")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("corrupt", help="turn a ground-truth log into detections")
    p.add_argument("--in", dest="input", required=True, help="ground-truth JSONL")
    p.add_argument("--noise", required=True, help="noise JSON")
    p.add_argument("--seed", type=int, help="override the noise seed")
    p.add_argument("--out", required=True, help="detection JSONL")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("extract", help="write the facts of a detection log")
    p.add_argument("--in", dest="input", required=True, help="detection JSONL")
    p.add_argument("--out", required=True, help="fact file")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reason", help="evaluate rules and write per-frame verdicts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--facts", help="fact file from `extract`")
    src.add_argument("--in", dest="input", help="detection JSONL")
    p.add_argument("--rules", help="rule file replacing the shipped rules")
    p.add_argument("--window", type=int, help="frames of history visible to the rules (default 30)")
    p.add_argument("--disable-green-rule", action="store_true", help="turn off inferred_green")
    p.add_argument("--out", required=True, help="verdict JSONL")
    p.set_defaults(func=cmd_reason)

    p = sub.add_parser("evaluate", help="score baseline, logic and combined models")
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--det", required=True, help="detection JSONL")
    p.add_argument("--verdicts", required=True, help="verdict JSONL")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="all stages end to end")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--noise", required=True, help="noise JSON")
    p.add_argument("--rules", help="rule file replacing the shipped rules")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--window", type=int, help="frames of history visible to the rules (default 30)")
    p.add_argument("--disable-green-rule", action="store_true", help="turn off inferred_green")
    p.add_argument("--out", required=True, help="report JSON; artifacts are written next to it")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except AVReasonError as exc:
        print(f"avreason {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        # Output paths that cannot be written.
        err = ConfigError(f"{exc.filename}: {exc.strerror}")
        print(f"avreason {args.command}: {err}", file=sys.stderr)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
