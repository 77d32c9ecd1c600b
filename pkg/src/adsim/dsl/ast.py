"""AST node types for the delegation-criteria policy language."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..model import Pathway

# A literal is a number, a boolean, or a bare tag (identifier).
Literal = Union[float, bool, str]

COMPARISON_OPS = ("==", "!=", "<", "<=", ">", ">=")
NUMERIC_ONLY_OPS = ("<", "<=", ">", ">=")


@dataclass(frozen=True)
class Comparison:
    path: tuple[str, ...]
    op: str
    value: Literal


@dataclass(frozen=True)
class Membership:
    path: tuple[str, ...]
    values: tuple[Literal, ...]


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Or:
    lhs: "Expr"
    rhs: "Expr"


Expr = Union[Comparison, Membership, Not, And, Or]


@dataclass(frozen=True)
class Rule:
    rule_id: str
    condition: Expr
    target: Pathway


@dataclass(frozen=True)
class Policy:
    name: str
    default_pathway: Pathway
    rules: tuple[Rule, ...]


def expr_paths(expr: Expr):
    """Yield every field path referenced in an expression."""
    if isinstance(expr, (Comparison, Membership)):
        yield expr.path
    elif isinstance(expr, Not):
        yield from expr_paths(expr.operand)
    elif isinstance(expr, (And, Or)):
        yield from expr_paths(expr.lhs)
        yield from expr_paths(expr.rhs)
