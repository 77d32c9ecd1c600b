"""Three-valued (Kleene) evaluation of rule conditions against one case.

A comparison that touches a missing field evaluates to `unknown`; and/or/not
follow the Kleene truth tables. A rule can only fire on a definite `true`, so
missing context can never enable a pathway (it can only withhold one).

Missing fields: ai.class / ai.confidence / ai.score when the QC step failed,
any undeclared-or-absent context field, and any enum context field whose value
is the literal string "unknown".
"""

from __future__ import annotations

from typing import Any, Optional

from ..errors import ContractViolation
from ..model import (
    AiAssessment,
    CaseRecord,
    QualityStatus,
    TriState,
    tri_and,
    tri_not,
    tri_or,
)
from .ast import And, Comparison, Expr, Membership, Not, Or

_MISSING = object()

UNKNOWN_VALUE = "unknown"


def resolve_path(path: tuple[str, ...], case: CaseRecord, ai: AiAssessment) -> Any:
    """Field lookup for the evaluator. Returns _MISSING for absent values."""
    if path == ("qc", "status"):
        return ai.qc_status.value
    if path == ("ai", "class"):
        return ai.predicted_class.value if ai.predicted_class is not None else _MISSING
    if path == ("ai", "confidence"):
        conf = ai.calibrated_confidence
        return conf if conf is not None else _MISSING
    if path == ("ai", "score"):
        return ai.raw_score if ai.qc_status is QualityStatus.PASS else _MISSING
    root = path[0]
    if root == "case" and len(path) == 2:
        return getattr(case.specimen, path[1], _MISSING)
    if root == "context" and len(path) == 2:
        value = case.context.get(path[1], _MISSING)
        if value == UNKNOWN_VALUE:
            return _MISSING
        return value
    raise ContractViolation(f"unvalidated field path reached the evaluator: {'.'.join(path)}")


def _compare(op: str, field_value: Any, literal: Any) -> TriState:
    if op in ("<", "<=", ">", ">="):
        if not isinstance(field_value, (int, float)) or isinstance(field_value, bool):
            raise ContractViolation(f"numeric comparison on non-numeric value {field_value!r}")
        result = {
            "<": field_value < literal,
            "<=": field_value <= literal,
            ">": field_value > literal,
            ">=": field_value >= literal,
        }[op]
    elif op == "==":
        result = field_value == literal
    elif op == "!=":
        result = field_value != literal
    else:
        raise ContractViolation(f"unknown comparison operator {op!r}")
    return TriState.TRUE if result else TriState.FALSE


def evaluate_expr(expr: Expr, case: CaseRecord, ai: AiAssessment) -> TriState:
    """Evaluate a validated condition to true / false / unknown."""
    if isinstance(expr, Comparison):
        value = resolve_path(expr.path, case, ai)
        if value is _MISSING:
            return TriState.UNKNOWN
        return _compare(expr.op, value, expr.value)
    if isinstance(expr, Membership):
        value = resolve_path(expr.path, case, ai)
        if value is _MISSING:
            return TriState.UNKNOWN
        if isinstance(value, (set, frozenset)):
            # tag-set field: true when the case's tags intersect the listed ones
            hit = any(v in value for v in expr.values)
        else:
            hit = value in expr.values
        return TriState.TRUE if hit else TriState.FALSE
    if isinstance(expr, Not):
        return tri_not(evaluate_expr(expr.operand, case, ai))
    if isinstance(expr, And):
        return tri_and(evaluate_expr(expr.lhs, case, ai), evaluate_expr(expr.rhs, case, ai))
    if isinstance(expr, Or):
        return tri_or(evaluate_expr(expr.lhs, case, ai), evaluate_expr(expr.rhs, case, ai))
    raise ContractViolation(f"not an expression node: {expr!r}")


def missing_sentinel() -> Optional[object]:
    """Expose the missing-value sentinel to tests that build oracle evaluators."""
    return _MISSING
