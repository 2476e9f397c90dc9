"""Malformed inputs and the exit code the CLI must answer each with."""

from __future__ import annotations

import contextlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

from avreason.cli import main
from avreason.facts import frame_atoms, write_fact_file
from avreason.reasoner import Verdict, write_verdicts
from avreason.records import write_log

from conftest import crossing, scenario_path


@dataclass(frozen=True)
class Case:
    name: str
    kind: str  # rules | facts | world | noise | log | missing | align
    content: str
    code: int
    mentions: tuple[str, ...] = ()


CASES = [
    Case("missing period", "rules", "p(X) :- e(X)", 2, ("line 1",)),
    Case("unclosed argument list", "rules", "p(X :- e(X).", 2, ("line 1",)),
    Case("capitalised predicate", "rules", "P(x).", 2),
    Case("unknown operator", "rules", "p(X) :- e(X), X <> 1.", 2),
    Case("unbound head variable", "rules", "p(X) :- e(Y).", 2, ("X", "p(X) :- e(Y).")),
    Case("unbound negated variable", "rules", "p(X) :- \\+ e(X).", 2, ("X", "rule")),
    Case("unbound comparison variable", "rules", "p(X) :- e(X), Y > 1.", 2, ("Y", "rule")),
    Case("arity clash", "rules", "p(X) :- e(X).\np(X, Y) :- e(X), e(Y).", 2),
    Case("negation cycle", "rules", "p(X) :- e(X), \\+ q(X).\nq(X) :- p(X).", 3, ("p -> q",)),
    Case("count cycle", "rules", "p(X) :- e(X), N = count(Y : p(Y)), N > 1.", 3, ("p -> p",)),
    Case("self negation", "rules", "p(X) :- e(X), \\+ p(X).", 3, ("p",)),
    Case("non-ground fact", "facts", "ego(X, up, 0.0, 0.0).", 2),
    Case("rule in fact file", "facts", "ego(0, up, 0.0, 0.0) :- x(1).", 2),
    Case("fact arity", "facts", "property_vehicle(0, 1, moving).", 2, ("property_vehicle",)),
    Case("unknown world key", "world", "colour", 4, ("colour",)),
    Case("conflicting greens", "world", "greens", 4, ("both green",)),
    Case("probability out of range", "noise", '{"light_flip_p": 1.5}', 4, ("light_flip_p",)),
    Case("invalid log line", "log", "{not json}\n", 4, ("invalid JSON",)),
    Case("missing rules file", "missing", "", 2, ("no_such_rules.csr",)),
    Case("misaligned verdicts", "align", "", 5, ("frames",)),
]


def _world(kind: str) -> dict:
    d = json.loads(scenario_path("scenario_a.json").read_text())
    if kind == "colour":
        d["colour"] = "red"
    else:
        for ph in d["light_phases"]:
            ph.update(red_s=0.0, green_s=30.0, yellow_s=0.0, phase_offset_s=0.0)
    return d


def run(case: Case, workdir: Path) -> tuple[int, str]:
    """Build the inputs for ``case`` in ``workdir``, invoke the CLI and return (exit code, stderr)."""
    gt = [crossing(f, "red") for f in range(5)]
    log = workdir / "log.jsonl"
    write_log(log, gt)
    facts = workdir / "ok.facts"
    write_fact_file(facts, [a for r in gt for a in frame_atoms(r)])
    out = str(workdir / "out")
    bad = workdir / "bad"
    if case.kind == "rules":
        bad.write_text(case.content)
        argv = ["reason", "--facts", str(facts), "--rules", str(bad), "--out", out]
    elif case.kind == "facts":
        bad.write_text(case.content)
        argv = ["reason", "--facts", str(bad), "--out", out]
    elif case.kind == "world":
        bad.write_text(json.dumps(_world(case.content)))
        argv = ["simulate", "--config", str(bad), "--out", out]
    elif case.kind == "noise":
        bad.write_text(case.content)
        argv = ["corrupt", "--in", str(log), "--noise", str(bad), "--out", out]
    elif case.kind == "log":
        bad.write_text(case.content)
        argv = ["reason", "--in", str(bad), "--out", out]
    elif case.kind == "missing":
        argv = ["reason", "--facts", str(facts), "--rules", str(workdir / "no_such_rules.csr"), "--out", out]
    else:
        verdicts = workdir / "v.jsonl"
        write_verdicts(verdicts, [Verdict(f + 1) for f in range(5)])
        argv = ["evaluate", "--gt", str(log), "--det", str(log), "--verdicts", str(verdicts), "--out", out]
    err = io.StringIO()
    with contextlib.redirect_stderr(err):
        code = main(argv)
    return code, err.getvalue()
