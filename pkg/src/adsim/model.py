"""Shared domain types: cases, assessments, pathways, decisions, audit records.

Every other module builds on these. All types are immutable after construction
and safe to share between threads. Case populations and audit logs serialize
as JSON Lines (one object per line, snake_case field names).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Optional

from .errors import AdsimError, PreconditionError


class DiagnosisClass(Enum):
    """Five-way diagnosis: one normal category plus four abnormal ones.

    Abnormal categories carry a criticality rank (urgent > non-urgent within
    each of the neoplastic / non-neoplastic families).
    """

    NORMAL = "normal"
    NEOPLASTIC_URGENT = "neoplastic_urgent"
    NEOPLASTIC_NON_URGENT = "neoplastic_non_urgent"
    NON_NEOPLASTIC_URGENT = "non_neoplastic_urgent"
    NON_NEOPLASTIC_NON_URGENT = "non_neoplastic_non_urgent"

    @property
    def is_abnormal(self) -> bool:
        return self is not DiagnosisClass.NORMAL

    @property
    def is_urgent(self) -> bool:
        return self in (DiagnosisClass.NEOPLASTIC_URGENT, DiagnosisClass.NON_NEOPLASTIC_URGENT)

    @classmethod
    def from_text(cls, text: str) -> "DiagnosisClass":
        try:
            return cls(text)
        except ValueError:
            raise PreconditionError(f"unknown diagnosis class: {text!r}") from None


# Stable ordering used for array encodings (index 0 is always normal).
CLASS_ORDER: tuple[DiagnosisClass, ...] = (
    DiagnosisClass.NORMAL,
    DiagnosisClass.NEOPLASTIC_URGENT,
    DiagnosisClass.NEOPLASTIC_NON_URGENT,
    DiagnosisClass.NON_NEOPLASTIC_URGENT,
    DiagnosisClass.NON_NEOPLASTIC_NON_URGENT,
)
CLASS_INDEX: dict[DiagnosisClass, int] = {c: i for i, c in enumerate(CLASS_ORDER)}


class QualityStatus(Enum):
    """Outcome of the slide quality-control step. Only `pass` permits a prediction."""

    PASS = "pass"
    OUT_OF_FOCUS = "out_of_focus"
    FOLDED = "folded"
    INADEQUATE_TISSUE = "inadequate_tissue"
    NON_COLONIC = "non_colonic"

    @classmethod
    def from_text(cls, text: str) -> "QualityStatus":
        try:
            return cls(text)
        except ValueError:
            raise PreconditionError(f"unknown quality status: {text!r}") from None


QUALITY_ORDER: tuple[QualityStatus, ...] = tuple(QualityStatus)
QUALITY_INDEX: dict[QualityStatus, int] = {q: i for i, q in enumerate(QUALITY_ORDER)}


class TriState(Enum):
    """Three-valued (Kleene) truth value used by the rule evaluator."""

    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


def tri_not(x: TriState) -> TriState:
    if x is TriState.TRUE:
        return TriState.FALSE
    if x is TriState.FALSE:
        return TriState.TRUE
    return TriState.UNKNOWN


def tri_and(a: TriState, b: TriState) -> TriState:
    if a is TriState.FALSE or b is TriState.FALSE:
        return TriState.FALSE
    if a is TriState.UNKNOWN or b is TriState.UNKNOWN:
        return TriState.UNKNOWN
    return TriState.TRUE


def tri_or(a: TriState, b: TriState) -> TriState:
    if a is TriState.TRUE or b is TriState.TRUE:
        return TriState.TRUE
    if a is TriState.UNKNOWN or b is TriState.UNKNOWN:
        return TriState.UNKNOWN
    return TriState.FALSE


class PathwayKind(Enum):
    AI_ONLY = "ai_only"
    CLINICIAN_ONLY = "clinician_only"
    CLINICIAN_AND_AI = "clinician_and_ai"


PRIORITIES = ("urgent", "routine")


@dataclass(frozen=True)
class Pathway:
    """One of the three routing outcomes. Only clinician_and_ai may carry a priority."""

    kind: PathwayKind
    priority: Optional[str] = None

    def __post_init__(self) -> None:
        if self.priority is not None:
            if self.kind is not PathwayKind.CLINICIAN_AND_AI:
                raise PreconditionError("priority is only valid on clinician_and_ai")
            if self.priority not in PRIORITIES:
                raise PreconditionError(f"unknown priority: {self.priority!r}")

    def render(self) -> str:
        if self.priority is not None:
            return f"{self.kind.value}(priority = {self.priority})"
        return self.kind.value

    @property
    def histogram_key(self) -> str:
        if self.priority is not None:
            return f"{self.kind.value}:{self.priority}"
        return self.kind.value


class Decider(Enum):
    AI = "ai"
    CLINICIAN = "clinician"
    CLINICIAN_WITH_AI = "clinician_with_ai"


@dataclass(frozen=True)
class Specimen:
    site: str
    specimen_type: str
    stain: str
    patient_group: str


@dataclass(frozen=True)
class CaseRecord:
    """One specimen to be routed.

    ``true_label`` is simulation ground truth: only the population generator and
    the metrics layer may read it. Agents and the rule evaluator have no field
    path that reaches it.
    """

    case_id: str
    specimen: Specimen
    context: Mapping[str, Any]
    quality: QualityStatus
    oos_entity: Optional[str]
    true_label: DiagnosisClass
    review_time_minutes: float

    def __post_init__(self) -> None:
        if not self.review_time_minutes > 0:
            raise PreconditionError(
                f"review_time_minutes must be > 0 (case {self.case_id})"
            )


@dataclass(frozen=True)
class AiAssessment:
    """AI output for one case: QC status, prediction, raw and calibrated scores."""

    case_id: str
    qc_status: QualityStatus
    predicted_class: Optional[DiagnosisClass]
    raw_score: float
    calibrated_confidence: Optional[float] = None

    def __post_init__(self) -> None:
        has_prediction = self.predicted_class is not None
        if has_prediction != (self.qc_status is QualityStatus.PASS):
            raise PreconditionError(
                "predicted_class must be present exactly when qc_status is pass"
            )
        if not 0.0 <= self.raw_score <= 1.0:
            raise PreconditionError("raw_score must lie in [0, 1]")
        if self.calibrated_confidence is not None and not (
            0.0 <= self.calibrated_confidence <= 1.0
        ):
            raise PreconditionError("calibrated_confidence must lie in [0, 1]")

    @property
    def confidence(self) -> Optional[float]:
        """Calibrated confidence when available, else the raw score."""
        if self.qc_status is not QualityStatus.PASS:
            return None
        if self.calibrated_confidence is not None:
            return self.calibrated_confidence
        return self.raw_score


DEFAULT_RULE = "default"


@dataclass(frozen=True)
class PathwayDecision:
    """Routing outcome plus the evaluation trace for auditability.

    The trace lists every rule evaluated, in policy order, up to and including
    the one that fired. fired_rule == "default" means no rule evaluated true.
    """

    case_id: str
    pathway: Pathway
    fired_rule: str
    trace: tuple[tuple[str, TriState], ...] = ()


@dataclass(frozen=True)
class FinalDecision:
    case_id: str
    final_label: DiagnosisClass
    decider: Decider
    clinician_minutes: float
    warnings_fired: int = 0

    def __post_init__(self) -> None:
        if self.decider is Decider.AI and self.clinician_minutes != 0:
            raise PreconditionError("ai decisions must have clinician_minutes == 0")
        if self.decider is not Decider.AI and not self.clinician_minutes > 0:
            raise PreconditionError("human decisions must have clinician_minutes > 0")


@dataclass(frozen=True)
class AuditRecord:
    sequence_number: int
    pathway_decision: PathwayDecision
    final_decision: FinalDecision
    timestamp: int


# ---------------------------------------------------------------------------
# Field schema
# ---------------------------------------------------------------------------

FIELD_KINDS = ("number", "enum", "bool", "tags")


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in FIELD_KINDS:
            raise PreconditionError(f"unknown field kind: {self.kind!r}")


# Field paths the rule language can always see, independent of the scenario.
_BUILTIN_FIELDS: dict[tuple[str, str], FieldSpec] = {
    ("qc", "status"): FieldSpec("enum", tuple(q.value for q in QUALITY_ORDER)),
    ("ai", "class"): FieldSpec("enum", tuple(c.value for c in CLASS_ORDER)),
    ("ai", "confidence"): FieldSpec("number"),
    ("ai", "score"): FieldSpec("number"),
}


class FieldSchema:
    """Declares the context and specimen fields a scenario exposes to rules.

    Built-in paths (qc.status, ai.class, ai.confidence, ai.score) are always
    present; context.* and case.* fields come from the scenario's schema file.
    """

    def __init__(
        self,
        context: Mapping[str, FieldSpec] | None = None,
        specimen: Mapping[str, FieldSpec] | None = None,
    ):
        self.context: dict[str, FieldSpec] = dict(context or {})
        self.specimen: dict[str, FieldSpec] = dict(specimen or {})

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FieldSchema":
        def build(section: Mapping[str, Any]) -> dict[str, FieldSpec]:
            out = {}
            for name, spec in section.items():
                out[name] = FieldSpec(spec["type"], tuple(spec.get("values", ())))
            return out

        return cls(build(data.get("context", {})), build(data.get("specimen", {})))

    @classmethod
    def load(cls, path: str | Path) -> "FieldSchema":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def lookup(self, path: tuple[str, ...]) -> Optional[FieldSpec]:
        """Resolve a dotted field path to its declared spec, or None if unknown."""
        if len(path) != 2:
            return None
        if path in _BUILTIN_FIELDS:
            return _BUILTIN_FIELDS[path]
        root, name = path
        if root == "context":
            return self.context.get(name)
        if root == "case":
            return self.specimen.get(name)
        return None

    def context_fields(self) -> dict[str, FieldSpec]:
        return dict(self.context)


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding. An empty diagnostic list means 'valid'."""

    code: str
    message: str
    rule_id: Optional[str] = None

    def render(self) -> str:
        where = f" [rule {self.rule_id}]" if self.rule_id else ""
        return f"{self.code}: {self.message}{where}"


def validate_case(case: CaseRecord, schema: FieldSchema) -> list[Diagnostic]:
    """Check a case against the scenario schema. Returns diagnostics, never raises."""
    out: list[Diagnostic] = []
    if not case.review_time_minutes > 0:  # unreachable via constructor, kept for loads
        out.append(Diagnostic("invariant", "review_time_minutes must be > 0"))
    for name, value in case.context.items():
        spec = schema.context.get(name)
        if spec is None:
            out.append(Diagnostic("unknown-field", f"context field {name!r} not in schema"))
            continue
        out.extend(_check_value(f"context.{name}", value, spec))
    for name, spec in schema.specimen.items():
        value = getattr(case.specimen, name, None)
        if value is not None:
            out.extend(_check_value(f"case.{name}", value, spec))
    return out


def _check_value(label: str, value: Any, spec: FieldSpec) -> list[Diagnostic]:
    if spec.kind == "bool":
        if not isinstance(value, bool):
            return [Diagnostic("type", f"{label}: expected bool, got {value!r}")]
    elif spec.kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return [Diagnostic("type", f"{label}: expected number, got {value!r}")]
    elif spec.kind == "enum":
        if not isinstance(value, str) or (spec.values and value not in spec.values):
            return [
                Diagnostic(
                    "value",
                    f"{label}: value {value!r} not in {{{', '.join(spec.values)}}}",
                )
            ]
    elif spec.kind == "tags":
        if isinstance(value, str) or not isinstance(value, (set, frozenset, list, tuple)):
            return [Diagnostic("type", f"{label}: expected a set of tags, got {value!r}")]
        bad = [v for v in value if spec.values and v not in spec.values]
        if bad:
            return [Diagnostic("value", f"{label}: unknown tags {sorted(bad)}")]
    return []


# ---------------------------------------------------------------------------
# JSON Lines serialization
# ---------------------------------------------------------------------------


def case_to_dict(case: CaseRecord) -> dict[str, Any]:
    context = {}
    for k, v in case.context.items():
        if isinstance(v, (set, frozenset)):
            context[k] = sorted(v)
        else:
            context[k] = v
    return {
        "case_id": case.case_id,
        "specimen": {
            "site": case.specimen.site,
            "specimen_type": case.specimen.specimen_type,
            "stain": case.specimen.stain,
            "patient_group": case.specimen.patient_group,
        },
        "context": context,
        "quality": case.quality.value,
        "oos_entity": case.oos_entity,
        "true_label": case.true_label.value,
        "review_time_minutes": case.review_time_minutes,
    }


def case_from_dict(data: Mapping[str, Any]) -> CaseRecord:
    context = dict(data["context"])
    for k, v in context.items():
        if isinstance(v, list):
            context[k] = frozenset(v)
    return CaseRecord(
        case_id=data["case_id"],
        specimen=Specimen(**data["specimen"]),
        context=context,
        quality=QualityStatus.from_text(data["quality"]),
        oos_entity=data.get("oos_entity"),
        true_label=DiagnosisClass.from_text(data["true_label"]),
        review_time_minutes=float(data["review_time_minutes"]),
    )


def write_cases_jsonl(path: str | Path, cases: Iterable[CaseRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case_to_dict(case), sort_keys=True))
            fh.write("\n")


def read_cases_jsonl(path: str | Path) -> list[CaseRecord]:
    cases = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            case = case_from_dict(json.loads(line))
            if case.case_id in seen:
                raise AdsimError(f"duplicate case_id in population: {case.case_id}")
            seen.add(case.case_id)
            cases.append(case)
    return cases


def audit_record_to_dict(rec: AuditRecord) -> dict[str, Any]:
    pd = rec.pathway_decision
    fd = rec.final_decision
    return {
        "sequence_number": rec.sequence_number,
        "pathway_decision": {
            "case_id": pd.case_id,
            "pathway": {"kind": pd.pathway.kind.value, "priority": pd.pathway.priority},
            "fired_rule": pd.fired_rule,
            "trace": [[rule_id, result.value] for rule_id, result in pd.trace],
        },
        "final_decision": {
            "case_id": fd.case_id,
            "final_label": fd.final_label.value,
            "decider": fd.decider.value,
            "clinician_minutes": fd.clinician_minutes,
            "warnings_fired": fd.warnings_fired,
        },
        "timestamp": rec.timestamp,
    }


def audit_record_from_dict(data: Mapping[str, Any]) -> AuditRecord:
    pd = data["pathway_decision"]
    fd = data["final_decision"]
    return AuditRecord(
        sequence_number=int(data["sequence_number"]),
        pathway_decision=PathwayDecision(
            case_id=pd["case_id"],
            pathway=Pathway(PathwayKind(pd["pathway"]["kind"]), pd["pathway"]["priority"]),
            fired_rule=pd["fired_rule"],
            trace=tuple((rid, TriState(res)) for rid, res in pd["trace"]),
        ),
        final_decision=FinalDecision(
            case_id=fd["case_id"],
            final_label=DiagnosisClass.from_text(fd["final_label"]),
            decider=Decider(fd["decider"]),
            clinician_minutes=float(fd["clinician_minutes"]),
            warnings_fired=int(fd["warnings_fired"]),
        ),
        timestamp=int(data["timestamp"]),
    )
