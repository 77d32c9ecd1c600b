"""Canonical formatter. parse_policy(format_policy(p)) is structurally equal to p."""

from __future__ import annotations

from .ast import And, Comparison, Expr, Literal, Membership, Not, Or, Policy

# Precedence levels: || < && < ! < atoms. Binary operators are left-associative,
# so a right-hand child at equal precedence keeps its parentheses.
_PREC_OR = 1
_PREC_AND = 2
_PREC_NOT = 3
_PREC_ATOM = 4


def format_literal(value: Literal) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return repr(value)
    return value


def _prec(expr: Expr) -> int:
    if isinstance(expr, Or):
        return _PREC_OR
    if isinstance(expr, And):
        return _PREC_AND
    if isinstance(expr, Not):
        return _PREC_NOT
    return _PREC_ATOM


def format_expr(expr: Expr) -> str:
    if isinstance(expr, Comparison):
        return f"{'.'.join(expr.path)} {expr.op} {format_literal(expr.value)}"
    if isinstance(expr, Membership):
        inner = ", ".join(format_literal(v) for v in expr.values)
        return f"{'.'.join(expr.path)} in {{ {inner} }}"
    if isinstance(expr, Not):
        return f"!{_child(expr.operand, _PREC_NOT, right=False)}"
    if isinstance(expr, And):
        return f"{_child(expr.lhs, _PREC_AND, right=False)} && {_child(expr.rhs, _PREC_AND, right=True)}"
    if isinstance(expr, Or):
        return f"{_child(expr.lhs, _PREC_OR, right=False)} || {_child(expr.rhs, _PREC_OR, right=True)}"
    raise TypeError(f"not an expression node: {expr!r}")


def _child(expr: Expr, parent_prec: int, right: bool) -> str:
    text = format_expr(expr)
    prec = _prec(expr)
    if prec < parent_prec or (right and prec == parent_prec):
        return f"({text})"
    return text


def format_policy(policy: Policy) -> str:
    lines = [f'policy "{policy.name}" {{']
    lines.append(f"  default -> {policy.default_pathway.render()};")
    for rule in policy.rules:
        lines.append(
            f"  rule {rule.rule_id} when {format_expr(rule.condition)} -> {rule.target.render()};"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
