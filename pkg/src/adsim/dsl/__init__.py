"""Delegation-criteria policy language: parse, validate, format, evaluate."""

from .ast import And, Comparison, Expr, Membership, Not, Or, Policy, Rule, expr_paths
from .analysis import validate_policy
from .evaluate import evaluate_expr, resolve_path
from .fmt import format_expr, format_policy
from .lexer import ParseError
from .parser import parse_expr, parse_policy
from .rewrite import set_confidence_literal

__all__ = [
    "And",
    "Comparison",
    "Expr",
    "Membership",
    "Not",
    "Or",
    "ParseError",
    "Policy",
    "Rule",
    "evaluate_expr",
    "expr_paths",
    "format_expr",
    "format_policy",
    "parse_expr",
    "parse_policy",
    "resolve_path",
    "set_confidence_literal",
    "validate_policy",
]
