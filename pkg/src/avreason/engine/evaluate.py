"""Bottom-up, stratified, semi-naive evaluation."""

from __future__ import annotations

import operator
from typing import Iterable, Mapping

from ..errors import SchemaError
from .program import Program, components
from .syntax import (
    Atom,
    BinOp,
    Comparison,
    Const,
    Count,
    Expr,
    Negate,
    Negative,
    Positive,
    Rule,
    Var,
    expr_variables,
)

_ARITH = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv}
_CMP = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
        "==": operator.eq, "!=": operator.ne}


class _Fail(Exception):
    pass


def eval_expr(expr: Expr, env: dict):
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Negate):
        value = eval_expr(expr.operand, env)
        if isinstance(value, str):
            raise _Fail
        return -value
    left, right = eval_expr(expr.left, env), eval_expr(expr.right, env)
    if isinstance(left, str) or isinstance(right, str):
        raise _Fail
    try:
        return _ARITH[expr.op](left, right)
    except ZeroDivisionError:
        raise _Fail from None


def compare(op: str, left, right) -> bool:
    """Numbers compare numerically, symbols lexicographically, mixed only by (in)equality."""
    if op in ("==", "!="):
        return _CMP[op](left, right)
    if isinstance(left, str) != isinstance(right, str):
        return False
    return _CMP[op](left, right)


def holds(cmp: Comparison, env: dict) -> bool:
    try:
        return compare(cmp.op, eval_expr(cmp.left, env), eval_expr(cmp.right, env))
    except _Fail:
        return False


class Relation:
    """A set of tuples with lazily built hash indexes.

    An index over one column is keyed by the bare value, over several
    columns by the tuple of values.
    """

    __slots__ = ("tuples", "_indexes")

    def __init__(self, tuples: Iterable[tuple] = ()):
        self.tuples: set[tuple] = set(tuples)
        self._indexes: dict[tuple[int, ...], tuple] = {}

    def __len__(self) -> int:
        return len(self.tuples)

    def add(self, row: tuple) -> bool:
        if row in self.tuples:
            return False
        self.tuples.add(row)
        for key_of, index in self._indexes.values():
            index.setdefault(key_of(row), []).append(row)
        return True

    def lookup(self, cols: tuple[int, ...], key) -> Iterable[tuple]:
        if not cols:
            return self.tuples
        entry = self._indexes.get(cols)
        if entry is None:
            key_of = operator.itemgetter(*cols)
            index: dict = {}
            for row in self.tuples:
                k = key_of(row)
                bucket = index.get(k)
                if bucket is None:
                    index[k] = [row]
                else:
                    bucket.append(row)
            entry = self._indexes[cols] = (key_of, index)
        return entry[1].get(key, ())


class Model:
    """Derived atom set: the extensional input plus everything the rules derive."""

    def __init__(self, relations: dict[str, frozenset[tuple]], arities: dict[str, int]):
        self.relations = relations
        self.arities = arities

    def __contains__(self, atom: tuple) -> bool:
        pred, *args = atom
        return tuple(args) in self.relations.get(pred, ())

    def __eq__(self, other) -> bool:
        return isinstance(other, Model) and self.atoms() == other.atoms()

    def facts(self, predicate: str) -> frozenset[tuple]:
        if predicate not in self.arities:
            raise SchemaError(f"unknown predicate {predicate}")
        return self.relations.get(predicate, frozenset())

    def atoms(self) -> set[tuple]:
        return {(p, *row) for p, rows in self.relations.items() for row in rows}

    def __len__(self) -> int:
        return sum(len(r) for r in self.relations.values())


def _plan(body: tuple, first: int | None) -> list:
    """Order body literals: greedy most-bound-first joins, filters as soon as bound.

    Returns steps annotated with the variables bound before each one, so that
    index access can be fixed at plan time.
    """
    positives = [i for i, lit in enumerate(body) if isinstance(lit, Positive)]
    rest = [lit for lit in body if not isinstance(lit, Positive)]
    bound: set[str] = set()
    order = []
    pending = list(positives)
    if first is not None:
        pending.remove(first)
        order.append(first)
        bound |= body[first].atom.variables()
    while pending:
        def score(i):
            atom = body[i].atom
            n_bound = sum(1 for a in atom.args if isinstance(a, Const) or a.name in bound)
            return (-(n_bound / max(1, atom.arity)) if atom.arity else -1.0, i)
        best = min(pending, key=score)
        pending.remove(best)
        order.append(best)
        bound |= body[best].atom.variables()

    all_positive_vars = set()
    for i in positives:
        all_positive_vars |= _named(body[i].atom)
    steps = []
    placed: set[int] = set()
    bound = set()

    def flush():
        progressed = True
        while progressed:
            progressed = False
            for j, lit in enumerate(rest):
                if j in placed:
                    continue
                if isinstance(lit, Count):
                    group = {v for v in _named(lit.goal) if v in all_positive_vars and v != lit.counted.name}
                    if group <= bound:
                        steps.append(("count", lit, tuple(sorted(group)), _Access(lit.goal, group)))
                        bound.add(lit.result.name)
                    else:
                        continue
                elif isinstance(lit, Comparison):
                    if not (expr_variables(lit.left) | expr_variables(lit.right)) <= bound:
                        continue
                    steps.append(("cmp", lit))
                elif _named(lit.atom) <= bound:
                    steps.append(("neg", lit, _Access(lit.atom, bound)))
                else:
                    continue
                placed.add(j)
                progressed = True

    flush()
    for i in order:
        atom = body[i].atom
        steps.append(("pos", i, atom, _Access(atom, bound)))
        bound |= _named(atom)
        flush()
    if len(placed) != len(rest):
        raise AssertionError("unplaceable literal; range restriction should have caught this")
    return steps


def _named(atom: Atom) -> set[str]:
    return {a.name for a in atom.args if isinstance(a, Var) and not a.anonymous}


class _Access:
    """How to probe a relation for an atom given the variables already bound."""

    __slots__ = ("cols", "key", "free", "dups", "positions")

    def __init__(self, atom: Atom, bound: set[str]):
        cols, key, free, dups = [], [], [], []
        first_free: dict[str, int] = {}
        for i, arg in enumerate(atom.args):
            if isinstance(arg, Const):
                cols.append(i)
                key.append((True, arg.value))
            elif arg.anonymous:
                continue
            elif arg.name in bound:
                cols.append(i)
                key.append((False, arg.name))
            elif arg.name in first_free:
                # A variable repeated inside the atom must agree with itself.
                dups.append((i, first_free[arg.name]))
            else:
                first_free[arg.name] = i
                free.append((i, arg.name))
        self.cols = tuple(cols)
        self.key = tuple(key)
        self.free = tuple(free)
        self.dups = tuple(dups)
        self.positions = first_free

    def rows(self, rel: "Relation", env: dict) -> Iterable[tuple]:
        if len(self.key) == 1:
            c, v = self.key[0]
            rows = rel.lookup(self.cols, v if c else env[v])
        else:
            rows = rel.lookup(self.cols, tuple([v if c else env[v] for c, v in self.key]))
        if self.dups:
            dups = self.dups
            rows = [r for r in rows if all(r[i] == r[j] for i, j in dups)]
        return rows


def _compile_expr(expr: Expr):
    if isinstance(expr, Var):
        name = expr.name
        return lambda env: env[name]
    if isinstance(expr, Const):
        value = expr.value
        return lambda env: value
    if isinstance(expr, Negate):
        inner = _compile_expr(expr.operand)

        def negate(env):
            x = inner(env)
            if x.__class__ is str:
                raise _Fail
            return -x
        return negate
    left, right, op = _compile_expr(expr.left), _compile_expr(expr.right), _ARITH[expr.op]
    if expr.op == "/":
        def divide(env):
            a, b = left(env), right(env)
            if a.__class__ is str or b.__class__ is str or b == 0:
                raise _Fail
            return a / b
        return divide

    def arith(env):
        a, b = left(env), right(env)
        if a.__class__ is str or b.__class__ is str:
            raise _Fail
        return op(a, b)
    return arith


def _compile_comparison(cmp: Comparison):
    left, right, test = _compile_expr(cmp.left), _compile_expr(cmp.right), _CMP[cmp.op]
    equality = cmp.op in ("==", "!=")

    def check(env) -> bool:
        try:
            a, b = left(env), right(env)
        except _Fail:
            return False
        if not equality and (a.__class__ is str) != (b.__class__ is str):
            return False
        return test(a, b)
    return check


class _Plans:
    """Per-program plans, computed once and reused across evaluations.

    Strata are evaluated one dependency component at a time; only recursive
    components need the semi-naive delta loop.
    """

    def __init__(self, program: Program):
        self.components = []
        order = components(program.rules)
        for stratum in program.strata:
            for comp in order:
                preds = frozenset(comp)
                if not preds <= stratum:
                    continue
                rules = [r for r in program.rules if r.head.predicate in preds]
                full = [(r, _plan(r.body, None)) for r in rules]
                delta = [(r, i, _plan(r.body, i)) for r in rules for i, lit in enumerate(r.body)
                         if isinstance(lit, Positive) and lit.atom.predicate in preds]
                self.components.append((preds, full, delta))


def _plans_for(program: Program) -> _Plans:
    plans = program.__dict__.get("_plans")
    if plans is None:
        plans = _Plans(program)
        object.__setattr__(program, "_plans", plans)
    return plans


class _Evaluator:
    def __init__(self, relations: dict[str, Relation]):
        self.rel = relations

    def relation(self, pred: str) -> Relation:
        r = self.rel.get(pred)
        if r is None:
            r = self.rel[pred] = Relation()
        return r

    def chain(self, rule: Rule, steps: list, out: list, delta: dict | None = None, delta_index: int = -1):
        """Compile a plan into nested closures that append head tuples to ``out``."""
        head = tuple((True, a.value) if isinstance(a, Const) else (False, a.name) for a in rule.head.args)
        append = out.append

        def emit(env):
            append(tuple([v if c else env[v] for c, v in head]))
        nxt = emit
        for step in reversed(steps):
            nxt = self._link(step, nxt, delta, delta_index)
        return nxt

    def _link(self, step, nxt, delta, delta_index):
        kind = step[0]
        if kind == "cmp":
            check = _compile_comparison(step[1])

            def filter_(env):
                if check(env):
                    nxt(env)
            return filter_
        if kind == "neg":
            access, rel = step[2], self.relation(step[1].atom.predicate)

            def negation(env):
                for _ in access.rows(rel, env):
                    return
                nxt(env)
            return negation
        if kind == "count":
            _, lit, group, access = step
            rel, cache, result = self.relation(lit.goal.predicate), {}, lit.result.name
            pos = access.positions[lit.counted.name]

            def count(env):
                gk = tuple([env[v] for v in group])
                n = cache.get(gk)
                if n is None:
                    n = cache[gk] = len({row[pos] for row in access.rows(rel, env)})
                new = env.copy()
                new[result] = n
                nxt(new)
            return count
        _, i, atom, access = step
        free = access.free
        if i == delta_index:
            pred = atom.predicate

            def source():
                return delta[pred]
        else:
            fixed = self.relation(atom.predicate)

            def source():
                return fixed
        if not free:
            def probe(env):
                for _ in access.rows(source(), env):
                    nxt(env)
            return probe

        def join(env):
            for row in access.rows(source(), env):
                new = env.copy()
                for j, name in free:
                    new[name] = row[j]
                nxt(new)
        return join

    def component(self, preds: frozenset[str], full: list, delta_plans: list) -> None:
        delta: dict[str, Relation] = {p: Relation() for p in preds}
        for rule, steps in full:
            out: list[tuple] = []
            self.chain(rule, steps, out)({})
            target, d = self.relation(rule.head.predicate), delta[rule.head.predicate]
            for row in out:
                if target.add(row):
                    d.add(row)
        if not delta_plans:
            return
        outputs = []
        for rule, i, steps in delta_plans:
            out = []
            outputs.append((rule, rule.body[i].atom.predicate, out, self.chain(rule, steps, out, delta, i)))
        while any(len(d) for d in delta.values()):
            new: dict[str, Relation] = {p: Relation() for p in preds}
            for rule, pred, out, run in outputs:
                if not len(delta[pred]):
                    continue
                run({})
                target, fresh = self.relation(rule.head.predicate), new[rule.head.predicate]
                for row in out:
                    if row not in target.tuples:
                        fresh.add(row)
                out.clear()
            for p, rel in new.items():
                target = self.relation(p)
                for row in rel.tuples:
                    target.add(row)
            delta.clear()
            delta.update(new)


def evaluate(program: Program, facts) -> Model:
    """Evaluate ``program`` over ``facts``.

    ``facts`` is a FactSet, an iterable of atom tuples ``(pred, *args)``, or
    a mapping ``pred -> set of argument tuples``.
    """
    if isinstance(facts, Mapping):
        grouped = {p: rows if isinstance(rows, set) else set(rows) for p, rows in facts.items()}
    else:
        grouped = {}
        for atom in getattr(facts, "atoms", facts):
            rows = grouped.get(atom[0])
            if rows is None:
                rows = grouped[atom[0]] = set()
            rows.add(atom[1:])
    arities = dict(program.arities)
    intensional = program.intensional
    for pred, rows in grouped.items():
        if not rows:
            continue
        if pred in intensional:
            raise SchemaError(f"fact for intensional predicate {pred}: {_show(pred, next(iter(rows)))}")
        widths = {len(r) for r in rows}
        seen = arities.setdefault(pred, min(widths))
        if widths != {seen}:
            args = next(r for r in rows if len(r) != seen)
            raise SchemaError(f"arity mismatch for {pred}: fact {_show(pred, args)} has {len(args)} "
                              f"argument(s), rules use {seen}")
    ev = _Evaluator({p: Relation(rows) for p, rows in grouped.items() if rows})
    for preds, full, delta in _plans_for(program).components:
        ev.component(preds, full, delta)
    return Model({p: frozenset(r.tuples) for p, r in ev.rel.items() if len(r)}, arities)


def _show(pred: str, args: tuple) -> str:
    from .syntax import format_constant
    return f"{pred}({', '.join(format_constant(a) for a in args)})"


def query(model: Model, predicate: str, pattern=()) -> list[dict]:
    """Bindings for every atom of ``predicate`` matching ``pattern``.

    Pattern entries are constants, or variable names (capitalised strings
    / ``Var``); ``_`` matches anything without binding.
    """
    rows = model.facts(predicate)
    pattern = tuple(pattern)
    arity = model.arities[predicate]
    if pattern and len(pattern) != arity:
        raise SchemaError(f"{predicate} has arity {arity}, pattern has {len(pattern)} term(s)")
    terms = []
    for p in pattern:
        if isinstance(p, Var):
            terms.append(p.name)
        elif isinstance(p, str) and (p[:1].isupper() or p.startswith("_")):
            terms.append(p)
        else:
            terms.append(Const(p.value if isinstance(p, Const) else p))
    out = set()
    for row in rows:
        env = {}
        ok = True
        for t, value in zip(terms, row):
            if isinstance(t, Const):
                if t.value != value:
                    ok = False
                    break
            elif t == "_":
                continue
            elif t in env and env[t] != value:
                ok = False
                break
            else:
                env[t] = value
        if ok:
            out.add(tuple(sorted(env.items())))
    return [dict(b) for b in sorted(out, key=lambda b: [(k, _sort_key(v)) for k, v in b])]


def _sort_key(value):
    return (1, value) if isinstance(value, str) else (0, value)
