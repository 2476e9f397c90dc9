"""A small stratified Datalog: parser, stratifier and semi-naive evaluator."""

from .evaluate import Model, evaluate, query
from .parser import parse_rules, tokenize
from .program import Program, load_program, parse_program
from .syntax import Atom, Comparison, Const, Count, Negative, Positive, Rule, Var

__all__ = [
    "Atom", "Comparison", "Const", "Count", "Model", "Negative", "Positive", "Program", "Rule", "Var",
    "evaluate", "load_program", "parse_program", "parse_rules", "query", "tokenize",
]
