"""Abstract syntax for rule programs, plus the canonical pretty-printer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

Constant = Union[int, float, str]


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return "_" if self.anonymous else self.name

    @property
    def anonymous(self) -> bool:
        # The parser names each "_" occurrence "_#<n>".
        return "#" in self.name


@dataclass(frozen=True)
class Const:
    value: Constant

    def __str__(self) -> str:
        return format_constant(self.value)


Term = Union[Var, Const]


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Negate:
    operand: "Expr"

    def __str__(self) -> str:
        return f"-{self.operand}"


Expr = Union[Var, Const, BinOp, Negate]


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple[Term, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    def variables(self) -> set[str]:
        return {a.name for a in self.args if isinstance(a, Var)}

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Positive:
    atom: Atom

    def __str__(self) -> str:
        return str(self.atom)


@dataclass(frozen=True)
class Negative:
    atom: Atom

    def __str__(self) -> str:
        return f"\\+ {self.atom}"


@dataclass(frozen=True)
class Comparison:
    op: str
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return f"{_bare(self.left)} {self.op} {_bare(self.right)}"


@dataclass(frozen=True)
class Count:
    """``Result = count(Counted : goal)``."""

    result: Var
    counted: Var
    goal: Atom

    def __str__(self) -> str:
        return f"{self.result} = count({self.counted} : {self.goal})"


Literal = Union[Positive, Negative, Comparison, Count]

COMPARISON_OPS = ("<", "<=", ">", ">=", "==", "!=")


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...] = ()

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(l) for l in self.body)}."


def _bare(expr: Expr) -> str:
    text = str(expr)
    if isinstance(expr, BinOp):
        return text[1:-1]
    return text


def expr_variables(expr: Expr) -> set[str]:
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, BinOp):
        return expr_variables(expr.left) | expr_variables(expr.right)
    if isinstance(expr, Negate):
        return expr_variables(expr.operand)
    return set()


def literal_variables(lit: Literal) -> set[str]:
    if isinstance(lit, (Positive, Negative)):
        return lit.atom.variables()
    if isinstance(lit, Comparison):
        return expr_variables(lit.left) | expr_variables(lit.right)
    return lit.goal.variables() | {lit.result.name, lit.counted.name}


def format_constant(value: Constant) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not rule constants")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        if text in ("inf", "-inf", "nan"):
            raise ValueError(f"non-finite constant {value!r}")
        if "." not in text:
            mantissa, _, exponent = text.partition("e")
            text = f"{mantissa}.0e{exponent}" if exponent else f"{mantissa}.0"
        return text
    if is_plain_symbol(value):
        return value
    escaped = value.replace("\\", "\\\\").replace("'", "\\'")
    return f"'{escaped}'"


def is_plain_symbol(text: str) -> bool:
    return bool(text) and text[0].islower() and text.isascii() and all(c.isalnum() or c == "_" for c in text)
