"""AST rewriting used by threshold splicing (`policy build` and sweeps)."""

from __future__ import annotations

from dataclasses import replace

from ..errors import PreconditionError
from .ast import And, Comparison, Expr, Membership, Not, Or, Policy, Rule

CONFIDENCE_PATH = ("ai", "confidence")


def set_confidence_literal(policy: Policy, rule_id: str, tau: float) -> Policy:
    """Return a copy of `policy` where every ai.confidence comparison inside
    the named rule uses `tau` as its literal."""
    rules = []
    found = False
    for rule in policy.rules:
        if rule.rule_id == rule_id:
            found = True
            rewritten, changed = _rewrite(rule.condition, tau)
            if not changed:
                raise PreconditionError(
                    f"rule {rule_id!r} has no ai.confidence comparison to rewrite"
                )
            rules.append(Rule(rule.rule_id, rewritten, rule.target))
        else:
            rules.append(rule)
    if not found:
        raise PreconditionError(f"no rule named {rule_id!r} in policy {policy.name!r}")
    return replace(policy, rules=tuple(rules))


def _rewrite(expr: Expr, tau: float) -> tuple[Expr, bool]:
    if isinstance(expr, Comparison):
        if expr.path == CONFIDENCE_PATH:
            return Comparison(expr.path, expr.op, float(tau)), True
        return expr, False
    if isinstance(expr, Membership):
        return expr, False
    if isinstance(expr, Not):
        inner, changed = _rewrite(expr.operand, tau)
        return (Not(inner) if changed else expr), changed
    if isinstance(expr, (And, Or)):
        lhs, c1 = _rewrite(expr.lhs, tau)
        rhs, c2 = _rewrite(expr.rhs, tau)
        if not (c1 or c2):
            return expr, False
        node = And(lhs, rhs) if isinstance(expr, And) else Or(lhs, rhs)
        return node, True
    return expr, False
