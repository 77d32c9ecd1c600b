"""Vectorized population runner.

Runs a whole case population through the agents and a modality as numpy
arrays. Agent randomness is drawn once per replication and shared by every
modality (paired comparison): the AI assessment, the clinician's own read,
and the anchoring/warning/re-read draws are identical arrays, so metric
differences are attributable to the modality alone.

Rule conditions evaluate over columns as int8 tri-state arrays with the
encoding {1: true, -1: false, 0: unknown}, which makes Kleene logic exact
elementwise arithmetic: not = -x, and = minimum, or = maximum. Routing
given the assessments is deterministic, so the batch evaluator is checked
against the scalar evaluator exactly (see tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .agents import AiProfile, ClinicianProfile, InteractionConfig, N_CLASSES
from .calibration import CalibrationMap
from .dsl.ast import And, Comparison, Expr, Membership, Not, Or, Policy
from .errors import ConfigurationError, ContractViolation
from .model import (
    CLASS_INDEX,
    CLASS_ORDER,
    CaseRecord,
    DiagnosisClass,
    FieldSchema,
    PathwayKind,
    QUALITY_INDEX,
    QUALITY_ORDER,
    QualityStatus,
)
from .router import ModalityKind, Modality

_NORMAL = CLASS_INDEX[DiagnosisClass.NORMAL]
_QC_PASS = QUALITY_INDEX[QualityStatus.PASS]

TRI_TRUE = np.int8(1)
TRI_FALSE = np.int8(-1)
TRI_UNKNOWN = np.int8(0)

# decider codes
DEC_AI = 0
DEC_CLINICIAN = 1
DEC_CLINICIAN_WITH_AI = 2

# pathway codes follow PathwayKind order
PATH_AI_ONLY = 0
PATH_CLINICIAN_ONLY = 1
PATH_CLINICIAN_AND_AI = 2
_PATH_CODE = {
    PathwayKind.AI_ONLY: PATH_AI_ONLY,
    PathwayKind.CLINICIAN_ONLY: PATH_CLINICIAN_ONLY,
    PathwayKind.CLINICIAN_AND_AI: PATH_CLINICIAN_AND_AI,
}
PRIORITY_NONE, PRIORITY_URGENT, PRIORITY_ROUTINE = -1, 0, 1
_PRIORITY_CODE = {None: PRIORITY_NONE, "urgent": PRIORITY_URGENT, "routine": PRIORITY_ROUTINE}


@dataclass
class Column:
    kind: str  # "enum" | "bool" | "tags"
    codes: Optional[np.ndarray] = None  # enum: int64, -1 = missing; bool: int8, -1 = missing
    value_to_code: Optional[dict[str, int]] = None
    tags: Optional[dict[str, np.ndarray]] = None  # tag -> bool[n]


@dataclass
class Population:
    """Column-oriented case population."""

    n: int
    true: np.ndarray  # int64 class indices
    quality: np.ndarray  # int64 QUALITY_ORDER indices
    oos_code: np.ndarray  # int64, -1 = none
    oos_entities: tuple[str, ...]
    minutes: np.ndarray  # float64 review time per case
    context: dict[str, Column]
    specimen: dict[str, Column]
    case_ids: Optional[list[str]] = None

    def case_id(self, i: int, label: str = "case") -> str:
        if self.case_ids is not None:
            return self.case_ids[i]
        return f"{label}-{i:06d}"


def population_from_cases(cases: Sequence[CaseRecord], schema: FieldSchema) -> Population:
    n = len(cases)
    true = np.array([CLASS_INDEX[c.true_label] for c in cases], dtype=np.int64)
    quality = np.array([QUALITY_INDEX[c.quality] for c in cases], dtype=np.int64)
    entities = sorted({c.oos_entity for c in cases if c.oos_entity is not None})
    ent_idx = {e: i for i, e in enumerate(entities)}
    oos = np.array([ent_idx.get(c.oos_entity, -1) if c.oos_entity else -1 for c in cases], dtype=np.int64)
    minutes = np.array([c.review_time_minutes for c in cases], dtype=np.float64)

    context: dict[str, Column] = {}
    for name, spec in schema.context.items():
        if spec.kind == "enum":
            v2c = {v: i for i, v in enumerate(spec.values)}
            codes = np.array(
                [
                    -1
                    if c.context.get(name) in (None, "unknown")
                    else v2c[c.context[name]]
                    for c in cases
                ],
                dtype=np.int64,
            )
            context[name] = Column("enum", codes=codes, value_to_code=v2c)
        elif spec.kind == "bool":
            codes = np.array(
                [-1 if c.context.get(name) is None else int(bool(c.context[name])) for c in cases],
                dtype=np.int64,
            )
            context[name] = Column("bool", codes=codes)
        elif spec.kind == "tags":
            all_tags = set(spec.values)
            for c in cases:
                all_tags.update(c.context.get(name, ()))
            tags = {
                t: np.array([t in c.context.get(name, ()) for c in cases], dtype=bool)
                for t in sorted(all_tags)
            }
            context[name] = Column("tags", tags=tags)

    specimen: dict[str, Column] = {}
    for name, spec in schema.specimen.items():
        v2c = {v: i for i, v in enumerate(spec.values)}
        codes = np.array([v2c.get(getattr(c.specimen, name), -1) for c in cases], dtype=np.int64)
        specimen[name] = Column("enum", codes=codes, value_to_code=v2c)

    return Population(
        n=n,
        true=true,
        quality=quality,
        oos_code=oos,
        oos_entities=tuple(entities),
        minutes=minutes,
        context=context,
        specimen=specimen,
        case_ids=[c.case_id for c in cases],
    )


# ---------------------------------------------------------------------------
# Agent draws (shared across modalities within a replication)
# ---------------------------------------------------------------------------


@dataclass
class AiBatch:
    qc_status: np.ndarray  # int64 QUALITY indices; pass where a prediction exists
    pred: np.ndarray  # int64, -1 when no prediction
    raw: np.ndarray  # float64, 0 where no prediction
    correct: np.ndarray  # bool
    calibrated: np.ndarray  # float64, nan when missing (no map or no prediction)
    effective: np.ndarray  # calibrated when a map was applied, else raw; nan if no prediction


def draw_ai_batch(
    profile: AiProfile,
    pop: Population,
    rng: np.random.Generator,
    calibration: Optional[CalibrationMap] = None,
) -> AiBatch:
    n = pop.n
    u_qc = rng.random(n)
    u_pred = rng.random(n)
    u_wrong = rng.random(n)
    u_overconf = rng.random(n)
    ac, bc = profile.score_given_correct
    ai_, bi = profile.score_given_incorrect
    beta_correct = rng.beta(ac, bc, n)
    beta_incorrect = rng.beta(ai_, bi, n)

    detect_p = np.zeros(len(QUALITY_ORDER))
    for status, p in profile.qc_fail_prob_by_quality.items():
        detect_p[QUALITY_INDEX[status]] = p
    for i, status in enumerate(QUALITY_ORDER):
        if status is not QualityStatus.PASS and status not in profile.qc_fail_prob_by_quality:
            detect_p[i] = 1.0
    qc_failed = (pop.quality != _QC_PASS) & (u_qc < detect_p[pop.quality])

    cum = np.cumsum(profile.confusion, axis=1)
    pred = _kernels.sample_rows(cum, pop.true, u_pred)

    oos = pop.oos_code >= 0
    if oos.any():
        # uniformly wrong: offset 1..4 from the true class, modulo the class count
        offset = (u_wrong[oos] * (N_CLASSES - 1)).astype(np.int64) + 1
        pred[oos] = (pop.true[oos] + offset) % N_CLASSES

    correct = pred == pop.true
    use_correct_beta = correct | (oos & (u_overconf < profile.oos_overconfidence_prob))
    raw = np.where(use_correct_beta, beta_correct, beta_incorrect)

    pred = np.where(qc_failed, -1, pred)
    correct = np.where(qc_failed, False, correct)
    raw = np.where(qc_failed, 0.0, raw)
    qc_status = np.where(qc_failed, pop.quality, _QC_PASS)

    has_pred = pred >= 0
    if calibration is not None:
        calibrated = np.where(has_pred, calibration.apply_array(np.clip(raw, 0.0, 1.0)), np.nan)
        effective = calibrated
    else:
        calibrated = np.full(n, np.nan)
        effective = np.where(has_pred, raw, np.nan)
    return AiBatch(qc_status, pred, raw, correct, calibrated, effective)


@dataclass
class ClinicianBatch:
    own: np.ndarray  # int64 class indices
    read_minutes: np.ndarray  # float64
    anchor_u: np.ndarray
    warn_u: np.ndarray
    reread: np.ndarray  # int64 re-read outcome, used only after a warning


def draw_clinician_batch(
    profile: ClinicianProfile, pop: Population, rng: np.random.Generator
) -> ClinicianBatch:
    n = pop.n
    u_read = rng.random(n)
    anchor_u = rng.random(n)
    warn_u = rng.random(n)
    u_reread = rng.random(n)
    own = _kernels.sample_rows(np.cumsum(profile.boosted_confusion, axis=1), pop.true, u_read)
    reread = _kernels.sample_rows(np.cumsum(profile.reread_confusion(), axis=1), pop.true, u_reread)
    minutes_vec = np.array([profile.minutes_by_class[c] for c in CLASS_ORDER])
    return ClinicianBatch(own, minutes_vec[pop.true], anchor_u, warn_u, reread)


# ---------------------------------------------------------------------------
# Batch rule evaluation
# ---------------------------------------------------------------------------


def build_eval_columns(pop: Population, ai: AiBatch) -> dict[tuple[str, ...], tuple]:
    """Map field paths to typed column handles for the batch evaluator."""
    qual_v2c = {q.value: QUALITY_INDEX[q] for q in QUALITY_ORDER}
    class_v2c = {c.value: CLASS_INDEX[c] for c in CLASS_ORDER}
    cols: dict[tuple[str, ...], tuple] = {
        ("qc", "status"): ("enum", ai.qc_status, qual_v2c),
        ("ai", "class"): ("enum", ai.pred, class_v2c),
        ("ai", "confidence"): ("num", ai.calibrated),
        ("ai", "score"): ("num", np.where(ai.pred >= 0, ai.raw, np.nan)),
    }
    for name, col in pop.context.items():
        if col.kind == "enum":
            cols[("context", name)] = ("enum", col.codes, col.value_to_code)
        elif col.kind == "bool":
            cols[("context", name)] = ("bool", col.codes)
        else:
            cols[("context", name)] = ("tags", col.tags)
    for name, col in pop.specimen.items():
        cols[("case", name)] = ("enum", col.codes, col.value_to_code)
    return cols


def _tri_from_bool(result: np.ndarray, present: np.ndarray) -> np.ndarray:
    out = np.where(result, TRI_TRUE, TRI_FALSE).astype(np.int8)
    out[~present] = TRI_UNKNOWN
    return out


def eval_expr_batch(expr: Expr, cols: Mapping[tuple[str, ...], tuple]) -> np.ndarray:
    if isinstance(expr, Comparison):
        col = cols.get(expr.path)
        if col is None:
            raise ContractViolation(f"unvalidated path in batch evaluation: {'.'.join(expr.path)}")
        if col[0] == "num":
            arr = col[1]
            present = ~np.isnan(arr)
            safe = np.where(present, arr, 0.0)
            result = _NUM_OPS[expr.op](safe, expr.value)
            return _tri_from_bool(result, present)
        if col[0] == "enum":
            codes, v2c = col[1], col[2]
            lit = v2c.get(expr.value, -2)  # -2 never matches a present code
            present = codes >= 0
            result = codes == lit if expr.op == "==" else codes != lit
            return _tri_from_bool(result, present)
        if col[0] == "bool":
            codes = col[1]
            present = codes >= 0
            lit = 1 if expr.value else 0
            result = codes == lit if expr.op == "==" else codes != lit
            return _tri_from_bool(result, present)
        raise ContractViolation(f"comparison on tag-set column {'.'.join(expr.path)}")
    if isinstance(expr, Membership):
        col = cols.get(expr.path)
        if col is None:
            raise ContractViolation(f"unvalidated path in batch evaluation: {'.'.join(expr.path)}")
        if col[0] == "tags":
            tag_arrays = col[1]
            n = next(iter(tag_arrays.values())).shape[0] if tag_arrays else 0
            hit = np.zeros(n, dtype=bool)
            for v in expr.values:
                arr = tag_arrays.get(v)
                if arr is not None:
                    hit |= arr
            return np.where(hit, TRI_TRUE, TRI_FALSE).astype(np.int8)
        if col[0] == "enum":
            codes, v2c = col[1], col[2]
            lits = {v2c.get(v, -2) for v in expr.values}
            present = codes >= 0
            result = np.isin(codes, sorted(lits))
            return _tri_from_bool(result, present)
        raise ContractViolation(f"membership on {col[0]} column {'.'.join(expr.path)}")
    if isinstance(expr, Not):
        return -eval_expr_batch(expr.operand, cols)
    if isinstance(expr, And):
        return np.minimum(eval_expr_batch(expr.lhs, cols), eval_expr_batch(expr.rhs, cols))
    if isinstance(expr, Or):
        return np.maximum(eval_expr_batch(expr.lhs, cols), eval_expr_batch(expr.rhs, cols))
    raise ContractViolation(f"not an expression node: {expr!r}")


_NUM_OPS = {
    "==": np.equal,
    "!=": np.not_equal,
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
}


def route_policy_batch(
    policy: Policy, cols: Mapping, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate all rules; return (fired_idx, pathway_code, priority_code, tri_matrix).

    fired_idx == len(rules) means the default pathway.
    """
    tri_rows = [eval_expr_batch(rule.condition, cols) for rule in policy.rules]
    tri = np.stack(tri_rows) if tri_rows else np.zeros((0, n), dtype=np.int8)
    fired = _kernels.first_true_rule(tri)

    kinds = np.array(
        [_PATH_CODE[r.target.kind] for r in policy.rules] + [_PATH_CODE[policy.default_pathway.kind]],
        dtype=np.int8,
    )
    prios = np.array(
        [_PRIORITY_CODE[r.target.priority] for r in policy.rules]
        + [_PRIORITY_CODE[policy.default_pathway.priority]],
        dtype=np.int8,
    )
    return fired, kinds[fired], prios[fired], tri


# ---------------------------------------------------------------------------
# Modality application
# ---------------------------------------------------------------------------


@dataclass
class Outcome:
    pathway: np.ndarray  # int8 pathway codes
    priority: np.ndarray  # int8 priority codes
    final: np.ndarray  # int64 class indices
    decider: np.ndarray  # int8 decider codes
    minutes: np.ndarray  # float64 clinician minutes
    warnings: np.ndarray  # int8 warnings fired per case
    fired: Optional[np.ndarray] = None  # ads only: rule index, len(rules) = default
    tri: Optional[np.ndarray] = None  # ads only: per-rule tri-state matrix


def _clinician_alone(pop: Population, clin: ClinicianBatch) -> tuple[np.ndarray, np.ndarray]:
    return clin.own.copy(), clin.read_minutes.copy()


def apply_modality(
    modality: Modality,
    pop: Population,
    ai: AiBatch,
    clin: ClinicianBatch,
    clinician: ClinicianProfile,
    interaction: Optional[InteractionConfig] = None,
) -> Outcome:
    interaction = interaction or InteractionConfig()
    n = pop.n
    kind = modality.kind
    has_pred = ai.pred >= 0
    eff = ai.effective  # nan when no prediction

    pathway = np.full(n, PATH_CLINICIAN_ONLY, dtype=np.int8)
    priority = np.full(n, PRIORITY_NONE, dtype=np.int8)
    final = clin.own.copy()
    decider = np.full(n, DEC_CLINICIAN, dtype=np.int8)
    minutes = clin.read_minutes.copy()
    warnings = np.zeros(n, dtype=np.int8)

    def ai_final(mask: np.ndarray) -> None:
        pathway[mask] = PATH_AI_ONLY
        final[mask] = ai.pred[mask]
        decider[mask] = DEC_AI
        minutes[mask] = 0.0

    def joint(mask: np.ndarray, alpha: float, disclosure: str, cutoff: float) -> None:
        if not mask.any():
            return
        confident_abnormal = has_pred & (ai.pred != _NORMAL) & ~np.isnan(eff) & (np.nan_to_num(eff) >= cutoff)
        disclosed = np.ones(n, dtype=bool) if disclosure == "always" else confident_abnormal
        adopt = mask & disclosed & has_pred & (ai.pred != clin.own) & (clin.anchor_u < alpha)
        final[adopt] = ai.pred[adopt]
        pathway[mask] = PATH_CLINICIAN_AND_AI
        decider[mask] = DEC_CLINICIAN_WITH_AI

    if kind is ModalityKind.UNAIDED:
        return Outcome(pathway, priority, final, decider, minutes, warnings)

    if kind in (ModalityKind.SEQUENTIAL, ModalityKind.CONCURRENT):
        joint(has_pred, clinician.anchoring_alpha(kind.value), "always", interaction.abnormal_confidence_cutoff)
        return Outcome(pathway, priority, final, decider, minutes, warnings)

    if kind is ModalityKind.CODOC:
        auto = has_pred & (np.nan_to_num(eff, nan=-1.0) >= modality.confidence_cutoff)
        ai_final(auto)
        return Outcome(pathway, priority, final, decider, minutes, warnings)

    if kind is ModalityKind.HCN_AUTOREPORT:
        auto = (ai.pred == _NORMAL) & (np.nan_to_num(eff, nan=-1.0) >= modality.normal_cutoff)
        ai_final(auto)
        return Outcome(pathway, priority, final, decider, minutes, warnings)

    if kind is ModalityKind.DECISION_REFERRAL:
        auto = (ai.pred == _NORMAL) & (np.nan_to_num(eff, nan=-1.0) >= modality.normal_cutoff)
        referred = ~auto & has_pred
        confident_abnormal = (
            (ai.pred != _NORMAL) & has_pred & (np.nan_to_num(eff, nan=-1.0) >= modality.warning_cutoff)
        )
        warned = referred & confident_abnormal & (clin.own == _NORMAL)
        comply = warned & (clin.warn_u < clinician.warning_compliance)
        final[comply] = clin.reread[comply]
        minutes[comply] += clin.read_minutes[comply]
        warnings[warned] = 1
        pathway[referred] = PATH_CLINICIAN_AND_AI
        decider[referred] = DEC_CLINICIAN_WITH_AI
        ai_final(auto)
        return Outcome(pathway, priority, final, decider, minutes, warnings)

    if kind is ModalityKind.AUTONOMOUS_DECISION_SUPPORT:
        cols = build_eval_columns(pop, ai)
        fired, pathway, priority, tri = route_policy_batch(modality.policy, cols, n)
        ai_mask = pathway == PATH_AI_ONLY
        if (ai_mask & ~has_pred).any():
            bad = int(np.flatnonzero(ai_mask & ~has_pred)[0])
            raise ContractViolation(
                f"policy routed case index {bad} to ai_only without an AI prediction"
            )
        joint_mask = pathway == PATH_CLINICIAN_AND_AI
        if (joint_mask & ~has_pred).any():
            bad = int(np.flatnonzero(joint_mask & ~has_pred)[0])
            raise ContractViolation(
                f"policy routed case index {bad} to clinician_and_ai without an AI prediction"
            )
        joint(
            joint_mask,
            clinician.anchoring_alpha(ModalityKind.AUTONOMOUS_DECISION_SUPPORT.value),
            interaction.disclosure,
            interaction.abnormal_confidence_cutoff,
        )
        ai_final(ai_mask)
        out = Outcome(pathway, priority, final, decider, minutes, warnings, fired=fired, tri=tri)
        return out

    raise ConfigurationError(f"unsupported modality kind: {kind}")
