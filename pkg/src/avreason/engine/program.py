from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import RangeRestrictionError, RuleSyntaxError, SchemaError, StratificationError
from .parser import parse_rules
from .syntax import Comparison, Count, Negative, Positive, Rule, expr_variables


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...]
    strata: tuple[frozenset[str], ...]
    arities: dict[str, int] = field(hash=False, compare=False)

    @property
    def intensional(self) -> frozenset[str]:
        return frozenset(r.head.predicate for r in self.rules)

    @property
    def extensional(self) -> frozenset[str]:
        return frozenset(self.arities) - self.intensional

    def stratum_of(self, predicate: str) -> int:
        for i, preds in enumerate(self.strata):
            if predicate in preds:
                return i
        return -1

    def __str__(self) -> str:
        return "\n".join(str(r) for r in self.rules) + ("\n" if self.rules else "")

    @classmethod
    def from_rules(cls, rules) -> "Program":
        rules = tuple(rules)
        arities = _check_arities(rules)
        for rule in rules:
            check_range_restriction(rule)
        return cls(rules, stratify(rules), arities)


def parse_program(text: str) -> Program:
    return Program.from_rules(parse_rules(text))


def load_program(path: str | Path) -> Program:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise RuleSyntaxError(f"cannot read rule file {path}: {exc.strerror}", 0, 0) from exc
    except UnicodeDecodeError as exc:
        raise RuleSyntaxError(f"rule file {path} is not valid UTF-8", 0, 0) from exc
    return parse_program(text)


def _check_arities(rules) -> dict[str, int]:
    arities: dict[str, int] = {}

    def note(atom, rule):
        seen = arities.setdefault(atom.predicate, atom.arity)
        if seen != atom.arity:
            raise SchemaError(f"predicate {atom.predicate} used with arity {atom.arity} and {seen} "
                              f"(in `{rule}`)")

    for rule in rules:
        note(rule.head, rule)
        for lit in rule.body:
            if isinstance(lit, (Positive, Negative)):
                note(lit.atom, rule)
            elif isinstance(lit, Count):
                note(lit.goal, rule)
    return arities


def check_range_restriction(rule: Rule) -> None:
    bound: set[str] = set()
    for lit in rule.body:
        if isinstance(lit, Positive):
            bound |= {v for v in lit.atom.variables() if "#" not in v}
    for lit in rule.body:
        if isinstance(lit, Count):
            if lit.counted.name not in lit.goal.variables():
                raise RangeRestrictionError(str(rule), str(lit.counted), "counted variable does not occur in the goal")
            if lit.result.name in lit.goal.variables() or lit.result.name in bound:
                raise RangeRestrictionError(str(rule), str(lit.result), "count result must be a fresh variable")
            bound.add(lit.result.name)
    for lit in rule.body:
        if isinstance(lit, Negative):
            names = {v for v in lit.atom.variables() if "#" not in v}
        elif isinstance(lit, Comparison):
            names = expr_variables(lit.left) | expr_variables(lit.right)
        else:
            continue
        for name in sorted(names):
            if name not in bound:
                raise RangeRestrictionError(str(rule), "_" if "#" in name else name)
    for arg in rule.head.args:
        name = getattr(arg, "name", None)
        if name is None:
            continue
        if "#" in name:
            raise RangeRestrictionError(str(rule), "_", "anonymous variable in rule head")
        if name not in bound:
            raise RangeRestrictionError(str(rule), name)


def dependency_edges(rules) -> dict[str, dict[str, bool]]:
    """head -> {body predicate: edge is negative} over intensional predicates."""
    heads = {r.head.predicate for r in rules}
    edges: dict[str, dict[str, bool]] = {p: {} for p in sorted(heads)}
    for rule in rules:
        deps = edges[rule.head.predicate]
        for lit in rule.body:
            if isinstance(lit, Positive):
                target, negative = lit.atom.predicate, False
            elif isinstance(lit, Negative):
                target, negative = lit.atom.predicate, True
            elif isinstance(lit, Count):
                target, negative = lit.goal.predicate, True
            else:
                continue
            if target in heads:
                deps[target] = deps.get(target, False) or negative
    return edges


def components(rules) -> list[list[str]]:
    """Strongly connected components, dependencies first."""
    return _sccs(dependency_edges(rules))


def stratify(rules) -> tuple[frozenset[str], ...]:
    """Assign each intensional predicate a stratum; fail on negative cycles."""
    edges = dependency_edges(rules)
    comps = _sccs(edges)
    comp_of = {p: i for i, comp in enumerate(comps) for p in comp}
    for u in sorted(edges):
        for v, negative in sorted(edges[u].items()):
            if negative and comp_of[u] == comp_of[v]:
                raise StratificationError(_cycle(edges, u, v, comps[comp_of[u]]))

    # Tarjan emits components dependencies-first, so one pass suffices.
    level: dict[int, int] = {}
    for i, comp in enumerate(comps):
        lvl = 0
        for u in comp:
            for v, negative in edges[u].items():
                j = comp_of[v]
                if j != i:
                    lvl = max(lvl, level[j] + (1 if negative else 0))
        level[i] = lvl
    n = max(level.values(), default=-1) + 1
    strata = [set() for _ in range(n)]
    for i, comp in enumerate(comps):
        strata[level[i]].update(comp)
    return tuple(frozenset(s) for s in strata)


def _sccs(edges: dict[str, dict[str, bool]]) -> list[list[str]]:
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[list[str]] = []
    counter = 0
    for root in edges:
        if root in index:
            continue
        work = [(root, iter(sorted(edges[root])))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(sorted(edges[nxt]))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                out.append(sorted(comp))
    return out


def _cycle(edges, u: str, v: str, comp: list[str]) -> list[str]:
    """Shortest path v ~> u inside the component, closed by the edge u -> v."""
    members = set(comp)
    prev = {v: None}
    queue = deque([v])
    while queue:
        node = queue.popleft()
        if node == u:
            break
        for nxt in sorted(edges[node]):
            if nxt in members and nxt not in prev:
                prev[nxt] = node
                queue.append(nxt)
    path = [u]
    node = u
    while node != v:
        node = prev[node]
        path.append(node)
    path.reverse()
    return [u] + path if u != v else [u, u]
