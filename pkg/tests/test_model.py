"""Domain type invariants and JSON Lines round trips."""

from __future__ import annotations

import pytest

from adsim.errors import AdsimError, PreconditionError
from adsim.model import (
    AiAssessment,
    AuditRecord,
    CaseRecord,
    CLASS_ORDER,
    Decider,
    DiagnosisClass,
    FieldSchema,
    FinalDecision,
    Pathway,
    PathwayDecision,
    PathwayKind,
    QualityStatus,
    Specimen,
    TriState,
    audit_record_from_dict,
    audit_record_to_dict,
    case_from_dict,
    case_to_dict,
    read_cases_jsonl,
    validate_case,
    write_cases_jsonl,
)

SPECIMEN = Specimen(site="colon", specimen_type="biopsy", stain="h_and_e", patient_group="adult")


def make_case(case_id="c1", minutes=2.0, quality=QualityStatus.PASS):
    return CaseRecord(
        case_id=case_id,
        specimen=SPECIMEN,
        context={
            "endoscopy": "normal",
            "transplant_history": False,
            "clinical_suspicion": frozenset({"ibd"}),
        },
        quality=quality,
        oos_entity=None,
        true_label=DiagnosisClass.NORMAL,
        review_time_minutes=minutes,
    )


def test_class_properties():
    assert not DiagnosisClass.NORMAL.is_abnormal
    assert DiagnosisClass.NEOPLASTIC_URGENT.is_urgent
    assert not DiagnosisClass.NEOPLASTIC_NON_URGENT.is_urgent
    assert CLASS_ORDER[0] is DiagnosisClass.NORMAL
    with pytest.raises(PreconditionError):
        DiagnosisClass.from_text("weird")


def test_pathway_priority_rules():
    assert Pathway(PathwayKind.CLINICIAN_AND_AI, "urgent").render() == (
        "clinician_and_ai(priority = urgent)"
    )
    assert Pathway(PathwayKind.AI_ONLY).histogram_key == "ai_only"
    assert Pathway(PathwayKind.CLINICIAN_AND_AI, "routine").histogram_key == (
        "clinician_and_ai:routine"
    )
    with pytest.raises(PreconditionError):
        Pathway(PathwayKind.AI_ONLY, "urgent")
    with pytest.raises(PreconditionError):
        Pathway(PathwayKind.CLINICIAN_AND_AI, "whenever")


def test_case_requires_positive_review_time():
    with pytest.raises(PreconditionError):
        make_case(minutes=0.0)


def test_assessment_prediction_iff_qc_pass():
    with pytest.raises(PreconditionError):
        AiAssessment("c1", QualityStatus.FOLDED, DiagnosisClass.NORMAL, 0.5)
    with pytest.raises(PreconditionError):
        AiAssessment("c1", QualityStatus.PASS, None, 0.5)
    ai = AiAssessment("c1", QualityStatus.PASS, DiagnosisClass.NORMAL, 0.7)
    assert ai.confidence == 0.7  # raw stands in when uncalibrated
    ai = AiAssessment("c1", QualityStatus.PASS, DiagnosisClass.NORMAL, 0.7, 0.62)
    assert ai.confidence == 0.62
    failed = AiAssessment("c1", QualityStatus.FOLDED, None, 0.0)
    assert failed.confidence is None


def test_final_decision_minutes_invariants():
    FinalDecision("c1", DiagnosisClass.NORMAL, Decider.AI, 0.0)
    with pytest.raises(PreconditionError):
        FinalDecision("c1", DiagnosisClass.NORMAL, Decider.AI, 1.0)
    with pytest.raises(PreconditionError):
        FinalDecision("c1", DiagnosisClass.NORMAL, Decider.CLINICIAN, 0.0)


def test_case_jsonl_roundtrip(tmp_path):
    cases = [make_case(f"c{i}") for i in range(5)]
    path = tmp_path / "cases.jsonl"
    write_cases_jsonl(path, cases)
    assert read_cases_jsonl(path) == cases


def test_duplicate_case_id_rejected(tmp_path):
    path = tmp_path / "cases.jsonl"
    write_cases_jsonl(path, [make_case("dup"), make_case("dup")])
    with pytest.raises(AdsimError):
        read_cases_jsonl(path)


def test_case_dict_roundtrip_preserves_tags():
    case = make_case()
    again = case_from_dict(case_to_dict(case))
    assert again == case
    assert isinstance(again.context["clinical_suspicion"], frozenset)


def test_audit_record_roundtrip():
    record = AuditRecord(
        sequence_number=3,
        pathway_decision=PathwayDecision(
            "c1",
            Pathway(PathwayKind.CLINICIAN_AND_AI, "urgent"),
            "critical_abn",
            (("qc_fail", TriState.FALSE), ("critical_abn", TriState.TRUE)),
        ),
        final_decision=FinalDecision(
            "c1", DiagnosisClass.NEOPLASTIC_URGENT, Decider.CLINICIAN_WITH_AI, 6.0, 0
        ),
        timestamp=3,
    )
    assert audit_record_from_dict(audit_record_to_dict(record)) == record


def test_schema_lookup_and_case_validation(docs_dir):
    schema = FieldSchema.load(docs_dir / "cobix_schema.json")
    assert schema.lookup(("ai", "confidence")).kind == "number"
    assert schema.lookup(("context", "endoscopy")).kind == "enum"
    assert schema.lookup(("case", "site")).kind == "enum"
    assert schema.lookup(("context", "nope")) is None
    assert schema.lookup(("too", "many", "parts")) is None

    assert validate_case(make_case(), schema) == []
    bad = CaseRecord(
        case_id="b",
        specimen=SPECIMEN,
        context={"endoscopy": "sideways", "mystery": 1, "clinical_suspicion": {"nope"}},
        quality=QualityStatus.PASS,
        oos_entity=None,
        true_label=DiagnosisClass.NORMAL,
        review_time_minutes=1.0,
    )
    codes = sorted(d.code for d in validate_case(bad, schema))
    assert codes == ["unknown-field", "value", "value"]
