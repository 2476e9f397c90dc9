import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avreason.engine import evaluate, parse_program, parse_rules, query
from avreason.engine.program import Program
from avreason.engine.syntax import Comparison, Positive
from avreason.errors import RangeRestrictionError, RuleSyntaxError, SchemaError, StratificationError

from oracles import naive_model, naive_strata, random_program

PATH = "path(X, Y) :- e(X, Y).\npath(X, Z) :- e(X, Y), path(Y, Z).\n"


def test_single_fact_program():
    p = parse_program("a(1).")
    assert len(p.rules) == 1
    assert p.strata == (frozenset({"a"}),)


def test_negation_cycle_rejected():
    with pytest.raises(StratificationError) as exc:
        parse_program("p(X) :- e(X), \\+ q(X).  q(X) :- p(X).")
    assert exc.value.cycle in (["p", "q", "p"], ["q", "p", "q"])
    assert "p -> q" in str(exc.value) or "q -> p" in str(exc.value)
    assert exc.value.exit_code == 3


def test_count_cycle_rejected():
    with pytest.raises(StratificationError):
        parse_program("p(X) :- e(X), N = count(Y : p(Y)), N > 1.")


def test_unsafe_negated_variable():
    with pytest.raises(RangeRestrictionError) as exc:
        parse_program("p(X) :- \\+ e(X).")
    assert exc.value.variable == "X"
    assert "p(X)" in exc.value.rule


def test_unsafe_head_and_comparison_variables():
    with pytest.raises(RangeRestrictionError):
        parse_program("p(X, Y) :- e(X).")
    with pytest.raises(RangeRestrictionError):
        parse_program("p(X) :- e(X), Y > 2.")


def test_transitive_closure():
    m = evaluate(parse_program(PATH), [("e", 1, 2), ("e", 2, 3)])
    assert m.facts("path") == {(1, 2), (2, 3), (1, 3)}


def test_negation_over_lower_stratum():
    rules = "unreach(X) :- n(X), \\+ covered(X).\ncovered(Y) :- e(_, Y).\n"
    facts = [("n", 1), ("n", 2), ("e", 1, 2)]
    p = parse_program(rules)
    m = evaluate(p, facts)
    assert m.facts("unreach") == {(1,)}
    assert m.atoms() == naive_model(p.rules, facts)


def test_count_aggregate():
    m = evaluate(parse_program("many :- N = count(X : v(X)), N >= 2."), [("v", 1), ("v", 2), ("v", 3)])
    assert ("many",) in m


def test_count_below_threshold():
    m = evaluate(parse_program("many :- N = count(X : v(X)), N >= 2."), [("v", 1)])
    assert ("many",) not in m


def test_count_groups_by_bound_variables():
    text = "busy(L) :- lane(L), N = count(V : in_lane(V, L)), N >= 2."
    facts = [("lane", 1), ("lane", 2), ("in_lane", 7, 1), ("in_lane", 8, 1), ("in_lane", 9, 2)]
    assert evaluate(parse_program(text), facts).facts("busy") == {(1,)}


def test_comparison_with_arithmetic():
    text = "mid(X) :- box(X, A, B), (A + B) / 2 > 3."
    m = evaluate(parse_program(text), [("box", 1, 2, 6), ("box", 2, 0, 4), ("box", 3, 1.0, 6.0)])
    assert m.facts("mid") == {(1,), (3,)}


def test_division_by_zero_is_false():
    m = evaluate(parse_program("q(X) :- e(X, Y), X / Y > 0."), [("e", 1, 0), ("e", 2, 1)])
    assert m.facts("q") == {(2,)}


def test_query_bindings():
    m = evaluate(parse_program(PATH), [("e", 1, 2), ("e", 2, 3)])
    assert query(m, "path", (1, "Y")) == [{"Y": 2}, {"Y": 3}]
    assert query(m, "path", ("_", 3)) == [{}]


def test_query_empty_model():
    m = evaluate(parse_program(PATH), [])
    assert query(m, "path", ("X", "Y")) == []


def test_query_unknown_predicate():
    m = evaluate(parse_program(PATH), [])
    with pytest.raises(SchemaError):
        query(m, "nothing", ())


def test_arity_mismatch_between_fact_and_rule():
    with pytest.raises(SchemaError):
        evaluate(parse_program(PATH), [("e", 1, 2, 3)])


def test_fact_for_intensional_predicate():
    with pytest.raises(SchemaError):
        evaluate(parse_program(PATH), [("path", 1, 2)])


def test_inconsistent_arity_in_rules():
    with pytest.raises(SchemaError):
        parse_program("p(X) :- e(X).\np(X, Y) :- e(X), e(Y).")


@pytest.mark.parametrize("text", [
    "p(X :- e(X).",
    "p(X) :- e(X)",
    "p(X) :- .",
    "P(x).",
    "p(X) :- e(X), N = count(e(X)).",
    "p(1) :- 3 <> 4.",
    "p('unterminated).",
])
def test_syntax_errors_have_position(text):
    with pytest.raises(RuleSyntaxError) as exc:
        parse_program(text)
    assert exc.value.line >= 1
    assert exc.value.column >= 1
    assert exc.value.exit_code == 2


def test_syntax_error_lists_expected_tokens():
    with pytest.raises(RuleSyntaxError) as exc:
        parse_program("a(1).\nb(X) :- a(X)")
    assert exc.value.line == 2
    assert exc.value.expected


def test_comments_and_anonymous_variables():
    text = "% comment\nfirst(X) :- e(X, _), e(_, _). % trailing\n"
    m = evaluate(parse_program(text), [("e", 1, 2)])
    assert m.facts("first") == {(1,)}


def test_quoted_symbols_and_floats():
    p = parse_program("p('Hello world', -1.5, 2.0e3, abc).")
    m = evaluate(p, [])
    assert m.facts("p") == {("Hello world", -1.5, 2000.0, "abc")}


def test_shipped_style_strata_match_oracle():
    text = PATH + "iso(X) :- n(X), \\+ path(X, _), \\+ path(_, X).\nlonely :- N = count(X : iso(X)), N >= 1.\n"
    p = parse_program(text)
    strata = [set(s) for s in p.strata]
    assert strata == naive_strata(p.rules)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_pretty_print_round_trip(seed):
    text, _ = random_program(random.Random(seed))
    p = parse_program(text)
    again = parse_program(str(p))
    assert str(again) == str(p)
    assert again.strata == p.strata
    assert len(again.rules) == len(p.rules)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_matches_naive_oracle(seed):
    text, facts = random_program(random.Random(seed))
    p = parse_program(text)
    assert evaluate(p, facts).atoms() == naive_model(p.rules, facts)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.randoms(use_true_random=False))
def test_order_invariance(seed, shuffler):
    text, facts = random_program(random.Random(seed))
    p = parse_program(text)
    rules = list(p.rules)
    shuffler.shuffle(rules)
    facts2 = list(facts)
    shuffler.shuffle(facts2)
    assert evaluate(Program.from_rules(rules), facts2) == evaluate(p, facts)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([0, 1, 2, 3, "a", "b"]))
def test_adding_a_fact_never_removes_positive_derivations(seed, value):
    text, facts = random_program(random.Random(seed))
    # Negation and count are non-monotone by design; keep the positive rules.
    positive = [r for r in parse_program(text).rules
                if all(isinstance(l, (Positive, Comparison)) for l in r.body)]
    if not positive:
        return
    p = Program.from_rules(positive)
    assert len(p.strata) == 1
    pred = sorted(p.extensional)[0]
    extra = (pred,) + (value,) * p.arities[pred]
    assert evaluate(p, facts).atoms() <= evaluate(p, facts + [extra]).atoms()


def test_rules_parse_individually():
    rules = parse_rules(PATH)
    assert [r.head.predicate for r in rules] == ["path", "path"]
