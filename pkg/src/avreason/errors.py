"""Exception hierarchy shared by every pipeline stage.

Each exception carries the process exit code the CLI reports for it.
"""

from __future__ import annotations


class AVReasonError(Exception):
    exit_code = 1


class ConfigError(AVReasonError):
    """Invalid world, noise or reasoner configuration."""

    exit_code = 4

    def __init__(self, message: str, field: str | None = None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class RuleSyntaxError(AVReasonError):
    exit_code = 2

    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        # Line 0 marks file-level problems (unreadable file, bad fact file).
        text = f"line {line}, column {column}: {message}" if line else message
        if expected:
            text += f" (expected {', '.join(expected)})"
        super().__init__(text)
        self.line = line
        self.column = column
        self.expected = expected


class RangeRestrictionError(AVReasonError):
    exit_code = 2

    def __init__(self, rule: str, variable: str, reason: str = "has no positive binding"):
        super().__init__(f"unsafe variable {variable} in rule `{rule}`: {reason}")
        self.rule = rule
        self.variable = variable


class StratificationError(AVReasonError):
    exit_code = 3

    def __init__(self, cycle: list[str]):
        path = " -> ".join(cycle)
        super().__init__(f"program is not stratifiable: cycle through negation or aggregation: {path}")
        self.cycle = cycle


class SchemaError(AVReasonError):
    """Arity clash or query against an unknown predicate."""

    exit_code = 2


class AlignmentError(AVReasonError):
    exit_code = 5

    def __init__(self, message: str, frames: list[int] | None = None):
        frames = list(frames or [])
        if frames:
            shown = ", ".join(str(f) for f in frames[:20])
            more = "" if len(frames) <= 20 else f" (+{len(frames) - 20} more)"
            message = f"{message}: frames {shown}{more}"
        super().__init__(message)
        self.frames = frames


class EmptyEvaluationError(AVReasonError):
    exit_code = 1
