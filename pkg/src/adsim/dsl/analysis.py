"""Static validation of policies against a field schema.

Total: always returns a (possibly empty) diagnostic list, never raises.
Unreachability detection is deliberately limited to the decidable case of a
condition whose canonical form is identical to an earlier rule's.
"""

from __future__ import annotations

from ..model import Diagnostic, FieldSchema, FieldSpec, PathwayKind
from .ast import And, Comparison, Expr, Membership, Not, NUMERIC_ONLY_OPS, Or, Policy
from .fmt import format_expr


def validate_policy(
    policy: Policy, schema: FieldSchema, safety_profile: bool = False
) -> list[Diagnostic]:
    out: list[Diagnostic] = []

    if safety_profile and policy.default_pathway.kind is not PathwayKind.CLINICIAN_ONLY:
        out.append(
            Diagnostic(
                "safety",
                f"default pathway must be clinician_only under the safety profile, "
                f"got {policy.default_pathway.render()}",
            )
        )

    seen_ids: set[str] = set()
    seen_conditions: dict[str, str] = {}
    for rule in policy.rules:
        if rule.rule_id in seen_ids:
            out.append(
                Diagnostic("duplicate-rule", f"rule id {rule.rule_id!r} declared twice", rule.rule_id)
            )
        seen_ids.add(rule.rule_id)

        out.extend(_check_expr(rule.condition, schema, rule.rule_id))

        canonical = format_expr(rule.condition)
        if canonical in seen_conditions:
            out.append(
                Diagnostic(
                    "unreachable",
                    f"condition duplicates rule {seen_conditions[canonical]!r}; this rule can never fire",
                    rule.rule_id,
                )
            )
        else:
            seen_conditions[canonical] = rule.rule_id
    return out


def _check_expr(expr: Expr, schema: FieldSchema, rule_id: str) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    if isinstance(expr, (Comparison, Membership)):
        spec = schema.lookup(expr.path)
        dotted = ".".join(expr.path)
        if spec is None:
            out.append(Diagnostic("unknown-field", f"unknown field `{dotted}`", rule_id))
            return out
        if isinstance(expr, Comparison):
            out.extend(_check_comparison(expr, spec, dotted, rule_id))
        else:
            out.extend(_check_membership(expr, spec, dotted, rule_id))
    elif isinstance(expr, Not):
        out.extend(_check_expr(expr.operand, schema, rule_id))
    elif isinstance(expr, (And, Or)):
        out.extend(_check_expr(expr.lhs, schema, rule_id))
        out.extend(_check_expr(expr.rhs, schema, rule_id))
    return out


def _check_comparison(expr: Comparison, spec: FieldSpec, dotted: str, rule_id: str) -> list[Diagnostic]:
    out = []
    if expr.op in NUMERIC_ONLY_OPS and spec.kind != "number":
        out.append(
            Diagnostic("type", f"`{dotted}` is {spec.kind}; {expr.op} needs a numeric field", rule_id)
        )
        return out
    if spec.kind == "number":
        if not isinstance(expr.value, float):
            out.append(Diagnostic("type", f"`{dotted}` compared against non-numeric literal", rule_id))
        elif expr.op in NUMERIC_ONLY_OPS or expr.op in ("==", "!="):
            pass
    elif spec.kind == "bool":
        if not isinstance(expr.value, bool):
            out.append(Diagnostic("type", f"`{dotted}` compared against non-boolean literal", rule_id))
    elif spec.kind == "enum":
        out.extend(_check_tag_literal(expr.value, spec, dotted, rule_id))
    elif spec.kind == "tags":
        out.append(
            Diagnostic("type", f"`{dotted}` is a tag set; use `in {{ ... }}` instead of {expr.op}", rule_id)
        )
    return out


def _check_membership(expr: Membership, spec: FieldSpec, dotted: str, rule_id: str) -> list[Diagnostic]:
    out = []
    if spec.kind in ("number", "bool"):
        out.append(Diagnostic("type", f"`{dotted}` is {spec.kind}; membership needs tags or enum", rule_id))
        return out
    for value in expr.values:
        out.extend(_check_tag_literal(value, spec, dotted, rule_id))
    return out


def _check_tag_literal(value, spec: FieldSpec, dotted: str, rule_id: str) -> list[Diagnostic]:
    if not isinstance(value, str):
        return [Diagnostic("type", f"`{dotted}` compared against non-tag literal {value!r}", rule_id)]
    if spec.values and value not in spec.values:
        return [
            Diagnostic(
                "value",
                f"`{dotted}`: literal {value!r} not among declared values {{{', '.join(spec.values)}}}",
                rule_id,
            )
        ]
    return []
