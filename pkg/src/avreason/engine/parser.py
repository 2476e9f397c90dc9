"""Recursive-descent parser for the ``.csr`` rule language.

Grammar::

    program    := clause*
    clause     := atom "." | atom ":-" body "."
    body       := literal ("," literal)*
    literal    := atom | "\\+" atom | expr CMP expr | VAR "=" "count" "(" VAR ":" atom ")"
    atom       := IDENT [ "(" term ("," term)* ")" ]
    term       := VAR | IDENT | QUOTED | ["-"] NUMBER
    expr       := product (("+" | "-") product)*
    product    := unary (("*" | "/") unary)*
    unary      := "-" unary | VAR | IDENT | QUOTED | NUMBER | "(" expr ")"

Lowercase identifiers are symbols or predicate names, capitalised ones are
variables, ``_`` is a fresh anonymous variable and ``%`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import RuleSyntaxError
from .syntax import (
    COMPARISON_OPS,
    Atom,
    BinOp,
    Comparison,
    Const,
    Count,
    Literal,
    Negate,
    Negative,
    Positive,
    Rule,
    Var,
)

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|%[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<quoted>'(?:[^'\\\n]|\\.)*')
  | (?P<op>:-|\\\+|<=|>=|==|!=|[<>=+\-*/(),.:])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _number(text: str) -> int | float:
    if any(c in text for c in ".eE"):
        return float(text)
    return int(text)


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0
        self.fresh = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, message: str, expected: tuple[str, ...] = ()) -> RuleSyntaxError:
        tok = self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return RuleSyntaxError(f"{message}, found {found}", tok.line, tok.column, expected)

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind not in ("op", "ident"):
            raise self.error("unexpected token", (repr(text),))
        tok = self.tok
        self.i += 1
        return tok

    def at(self, *texts: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in texts

    def program(self) -> list[Rule]:
        rules = []
        while self.tok.kind != "eof":
            rules.append(self.clause())
        return rules

    def clause(self) -> Rule:
        self.fresh = 0
        head = self.atom()
        if self.at("."):
            self.i += 1
            return Rule(head)
        if not self.at(":-"):
            raise self.error("expected end of clause", ("'.'", "':-'"))
        self.i += 1
        body = [self.literal()]
        while self.at(","):
            self.i += 1
            body.append(self.literal())
        if not self.at("."):
            raise self.error("expected end of clause", ("','", "'.'"))
        self.i += 1
        return Rule(head, tuple(body))

    def var(self) -> Var:
        tok = self.tok
        self.i += 1
        if tok.text == "_":
            self.fresh += 1
            return Var(f"_#{self.fresh}")
        return Var(tok.text)

    def atom(self) -> Atom:
        if self.tok.kind != "ident":
            raise self.error("expected a predicate name", ("identifier",))
        name = self.tok.text
        self.i += 1
        args = []
        if self.at("("):
            self.i += 1
            args.append(self.term())
            while self.at(","):
                self.i += 1
                args.append(self.term())
            if not self.at(")"):
                raise self.error("unclosed argument list", ("','", "')'"))
            self.i += 1
        return Atom(name, tuple(args))

    def term(self):
        tok = self.tok
        if tok.kind == "var":
            return self.var()
        if tok.kind == "ident":
            self.i += 1
            return Const(tok.text)
        if tok.kind == "quoted":
            self.i += 1
            return Const(_unquote(tok.text))
        if tok.kind == "num":
            self.i += 1
            return Const(_number(tok.text))
        if self.at("-") and self.peek().kind == "num":
            self.i += 2
            return Const(-_number(self.peek(-1).text))
        raise self.error("expected a term", ("variable", "constant"))

    def literal(self) -> Literal:
        tok = self.tok
        if self.at("\\+"):
            self.i += 1
            return Negative(self.atom())
        if tok.kind == "var" and self.peek().text == "=" and self.peek(2).text == "count":
            return self.aggregate()
        if tok.kind == "ident" and not (self.peek().kind == "op" and
                                        self.peek().text in COMPARISON_OPS + ("+", "-", "*", "/")):
            return Positive(self.atom())
        left = self.expr()
        if not (self.tok.kind == "op" and self.tok.text in COMPARISON_OPS):
            raise self.error("expected a comparison operator", tuple(repr(o) for o in COMPARISON_OPS))
        op = self.tok.text
        self.i += 1
        return Comparison(op, left, self.expr())

    def aggregate(self) -> Count:
        result = self.var()
        self.expect("=")
        self.expect("count")
        self.expect("(")
        if self.tok.kind != "var":
            raise self.error("expected the counted variable", ("variable",))
        counted = self.var()
        self.expect(":")
        goal = self.atom()
        self.expect(")")
        return Count(result, counted, goal)

    def expr(self):
        node = self.product()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.product())
        return node

    def product(self):
        node = self.unary()
        while self.at("*", "/"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.tok
        if self.at("-"):
            self.i += 1
            inner = self.unary()
            if isinstance(inner, Const) and not isinstance(inner.value, str):
                return Const(-inner.value)
            return Negate(inner)
        if self.at("("):
            self.i += 1
            node = self.expr()
            if not self.at(")"):
                raise self.error("unclosed parenthesis", ("')'",))
            self.i += 1
            return node
        if tok.kind in ("var", "ident", "quoted", "num"):
            return self.term()
        raise self.error("expected an expression", ("variable", "number", "'('"))


def parse_rules(text: str) -> list[Rule]:
    return _Parser(text).program()
