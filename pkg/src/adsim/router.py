"""Three-pathway routing plus the baseline human-AI teaming modalities.

select_pathway applies a policy with first-match-wins semantics (a rule fires
only on a definite true); resolve_case turns a pathway into a final decision;
run_modality wraps the whole per-case flow for every supported modality. The
audit log is append-only JSON Lines: no decision exists without its record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .agents import AiProfile, ClinicianProfile, InteractionConfig, ai_assess, clinician_read, clinician_with_ai
from .calibration import CalibrationMap
from .dsl.ast import Policy
from .dsl.evaluate import evaluate_expr
from .errors import AuditIOError, ConfigurationError, ContractViolation
from .model import (
    AiAssessment,
    AuditRecord,
    CaseRecord,
    DEFAULT_RULE,
    Decider,
    DiagnosisClass,
    FinalDecision,
    Pathway,
    PathwayDecision,
    PathwayKind,
    TriState,
    audit_record_from_dict,
    audit_record_to_dict,
)


class ModalityKind(Enum):
    UNAIDED = "unaided"
    SEQUENTIAL = "sequential"
    CONCURRENT = "concurrent"
    CODOC = "codoc"
    HCN_AUTOREPORT = "hcn_autoreport"
    DECISION_REFERRAL = "decision_referral"
    AUTONOMOUS_DECISION_SUPPORT = "autonomous_decision_support"


@dataclass(frozen=True)
class Modality:
    """A teaming modality with its parameters, validated at construction."""

    kind: ModalityKind
    confidence_cutoff: Optional[float] = None  # codoc
    normal_cutoff: Optional[float] = None  # hcn_autoreport, decision_referral
    warning_cutoff: Optional[float] = None  # decision_referral
    policy: Optional[Policy] = None  # autonomous_decision_support

    def __post_init__(self) -> None:
        kind = self.kind
        if kind is ModalityKind.CODOC and self.confidence_cutoff is None:
            raise ConfigurationError("codoc requires confidence_cutoff")
        if kind is ModalityKind.HCN_AUTOREPORT and self.normal_cutoff is None:
            raise ConfigurationError("hcn_autoreport requires normal_cutoff")
        if kind is ModalityKind.DECISION_REFERRAL and (
            self.normal_cutoff is None or self.warning_cutoff is None
        ):
            raise ConfigurationError("decision_referral requires normal_cutoff and warning_cutoff")
        if kind is ModalityKind.AUTONOMOUS_DECISION_SUPPORT and self.policy is None:
            raise ConfigurationError("autonomous_decision_support requires a validated policy")


def select_pathway(policy: Policy, case: CaseRecord, ai: AiAssessment) -> PathwayDecision:
    """First rule whose condition is definitely true fires; otherwise default."""
    trace: list[tuple[str, TriState]] = []
    for rule in policy.rules:
        result = evaluate_expr(rule.condition, case, ai)
        trace.append((rule.rule_id, result))
        if result is TriState.TRUE:
            return PathwayDecision(case.case_id, rule.target, rule.rule_id, tuple(trace))
    return PathwayDecision(case.case_id, policy.default_pathway, DEFAULT_RULE, tuple(trace))


def resolve_case(
    decision: PathwayDecision,
    case: CaseRecord,
    ai: AiAssessment,
    clinician: ClinicianProfile,
    interaction: InteractionConfig,
    rng: np.random.Generator,
    mode: str = ModalityKind.AUTONOMOUS_DECISION_SUPPORT.value,
) -> FinalDecision:
    if decision.case_id != case.case_id or ai.case_id != case.case_id:
        raise ContractViolation("case_id mismatch between decision, case, and assessment")
    kind = decision.pathway.kind
    if kind is PathwayKind.AI_ONLY:
        if ai.predicted_class is None:
            raise ContractViolation(
                f"policy routed case {case.case_id} to ai_only without an AI prediction"
            )
        return FinalDecision(case.case_id, ai.predicted_class, Decider.AI, 0.0, 0)
    if kind is PathwayKind.CLINICIAN_ONLY:
        label, minutes = clinician_read(clinician, case, rng)
        return FinalDecision(case.case_id, label, Decider.CLINICIAN, minutes, 0)
    label, minutes, warnings = clinician_with_ai(
        clinician,
        case,
        ai,
        mode,
        interaction.disclosure,
        rng,
        interaction.abnormal_confidence_cutoff,
    )
    return FinalDecision(case.case_id, label, Decider.CLINICIAN_WITH_AI, minutes, warnings)


def _modality_decision(case_id: str, kind: ModalityKind, pathway: Pathway) -> PathwayDecision:
    return PathwayDecision(case_id, pathway, f"modality:{kind.value}", ())


def run_modality(
    modality: Modality,
    case: CaseRecord,
    ai_profile: AiProfile,
    clinician: ClinicianProfile,
    rng: np.random.Generator,
    calibration: Optional[CalibrationMap] = None,
    interaction: Optional[InteractionConfig] = None,
) -> tuple[PathwayDecision, FinalDecision]:
    """Run one case under one modality.

    The RNG is split into an AI stream and a human stream so that modalities
    sharing a per-case seed see identical agent behaviour (paired comparison):
    the clinician's own read consumes the same draws in every modality.
    """
    interaction = interaction or InteractionConfig()
    rng_ai, rng_h = rng.spawn(2)
    kind = modality.kind
    cid = case.case_id

    if kind is ModalityKind.UNAIDED:
        label, minutes = clinician_read(clinician, case, rng_h)
        decision = _modality_decision(cid, kind, Pathway(PathwayKind.CLINICIAN_ONLY))
        return decision, FinalDecision(cid, label, Decider.CLINICIAN, minutes, 0)

    ai = ai_assess(ai_profile, case, rng_ai, calibration)
    conf = ai.confidence

    if kind in (ModalityKind.SEQUENTIAL, ModalityKind.CONCURRENT):
        if ai.predicted_class is None:
            label, minutes = clinician_read(clinician, case, rng_h)
            decision = _modality_decision(cid, kind, Pathway(PathwayKind.CLINICIAN_ONLY))
            return decision, FinalDecision(cid, label, Decider.CLINICIAN, minutes, 0)
        label, minutes, warnings = clinician_with_ai(
            clinician, case, ai, kind.value, "always", rng_h, interaction.abnormal_confidence_cutoff
        )
        decision = _modality_decision(cid, kind, Pathway(PathwayKind.CLINICIAN_AND_AI))
        return decision, FinalDecision(cid, label, Decider.CLINICIAN_WITH_AI, minutes, warnings)

    if kind is ModalityKind.CODOC:
        if ai.predicted_class is not None and conf is not None and conf >= modality.confidence_cutoff:
            decision = _modality_decision(cid, kind, Pathway(PathwayKind.AI_ONLY))
            return decision, FinalDecision(cid, ai.predicted_class, Decider.AI, 0.0, 0)
        label, minutes = clinician_read(clinician, case, rng_h)
        decision = _modality_decision(cid, kind, Pathway(PathwayKind.CLINICIAN_ONLY))
        return decision, FinalDecision(cid, label, Decider.CLINICIAN, minutes, 0)

    if kind is ModalityKind.HCN_AUTOREPORT:
        if (
            ai.predicted_class is DiagnosisClass.NORMAL
            and conf is not None
            and conf >= modality.normal_cutoff
        ):
            decision = _modality_decision(cid, kind, Pathway(PathwayKind.AI_ONLY))
            return decision, FinalDecision(cid, ai.predicted_class, Decider.AI, 0.0, 0)
        label, minutes = clinician_read(clinician, case, rng_h)
        decision = _modality_decision(cid, kind, Pathway(PathwayKind.CLINICIAN_ONLY))
        return decision, FinalDecision(cid, label, Decider.CLINICIAN, minutes, 0)

    if kind is ModalityKind.DECISION_REFERRAL:
        if (
            ai.predicted_class is DiagnosisClass.NORMAL
            and conf is not None
            and conf >= modality.normal_cutoff
        ):
            decision = _modality_decision(cid, kind, Pathway(PathwayKind.AI_ONLY))
            return decision, FinalDecision(cid, ai.predicted_class, Decider.AI, 0.0, 0)
        if ai.predicted_class is None:
            label, minutes = clinician_read(clinician, case, rng_h)
            decision = _modality_decision(cid, kind, Pathway(PathwayKind.CLINICIAN_ONLY))
            return decision, FinalDecision(cid, label, Decider.CLINICIAN, minutes, 0)
        label, minutes, warnings = clinician_with_ai(
            clinician, case, ai, kind.value, "always", rng_h, modality.warning_cutoff
        )
        decision = _modality_decision(cid, kind, Pathway(PathwayKind.CLINICIAN_AND_AI))
        return decision, FinalDecision(cid, label, Decider.CLINICIAN_WITH_AI, minutes, warnings)

    if kind is ModalityKind.AUTONOMOUS_DECISION_SUPPORT:
        decision = select_pathway(modality.policy, case, ai)
        final = resolve_case(decision, case, ai, clinician, interaction, rng_h, kind.value)
        return decision, final

    raise ConfigurationError(f"unsupported modality kind: {kind}")


class AuditLog:
    """Append-only decision trail with strictly increasing sequence numbers.

    In-memory by default; give a path to persist each record as it is
    appended. The timestamp is a monotone counter (keeps outputs byte-stable).
    """

    def __init__(self, path: Optional[str | Path] = None):
        self.records: list[AuditRecord] = []
        self.path = Path(path) if path is not None else None
        self._fh = None
        if self.path is not None:
            try:
                self._fh = open(self.path, "a", encoding="utf-8")
            except OSError as exc:
                raise AuditIOError(f"cannot open audit log {self.path}: {exc}") from exc

    def append(self, pathway: PathwayDecision, final: FinalDecision) -> AuditRecord:
        seq = self.records[-1].sequence_number + 1 if self.records else 1
        record = AuditRecord(seq, pathway, final, timestamp=seq)
        if self._fh is not None:
            try:
                self._fh.write(json.dumps(audit_record_to_dict(record), sort_keys=True))
                self._fh.write("\n")
            except OSError as exc:
                raise AuditIOError(f"audit write failed: {exc}", sequence_number=seq) from exc
        self.records.append(record)
        return record

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "AuditLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @classmethod
    def load(cls, path: str | Path) -> "AuditLog":
        """Read a log back. A truncated (partial) final line is dropped; any
        other corruption or a non-increasing sequence number is an error."""
        log = cls()
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        prev_seq = 0
        for i, line in enumerate(lines):
            try:
                record = audit_record_from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError) as exc:
                if i == len(lines) - 1:
                    break  # partial trailing record from an interrupted write
                raise AuditIOError(f"corrupt audit record at line {i + 1}: {exc}") from exc
            if record.sequence_number <= prev_seq:
                raise AuditIOError(
                    f"sequence numbers not strictly increasing at line {i + 1}",
                    sequence_number=record.sequence_number,
                )
            prev_seq = record.sequence_number
            log.records.append(record)
        return log


def append_audit(log: AuditLog, pathway: PathwayDecision, final: FinalDecision) -> AuditLog:
    """Functional wrapper over AuditLog.append, returning the log."""
    log.append(pathway, final)
    return log
