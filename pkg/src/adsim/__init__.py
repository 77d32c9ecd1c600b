"""Delegation-criteria policy engine and human-AI teaming simulation harness.

Routes each case to one of three pathways (AI only, clinician only, clinician
and AI together) via a declarative rule language, with confidence calibration,
safety-constrained threshold selection, and a paired-comparison simulator for
the standard teaming modalities.
"""

from .calibration import (
    CalibrationMap,
    ReliabilityReport,
    ThresholdResult,
    apply_calibration,
    fit_pav,
    reliability,
    select_threshold,
)
from .errors import (
    AdsimError,
    AuditIOError,
    ConfigurationError,
    ContractViolation,
    PreconditionError,
)
from .model import (
    AiAssessment,
    AuditRecord,
    CaseRecord,
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
)
from .agents import AiProfile, ClinicianProfile, InteractionConfig
from .router import AuditLog, Modality, ModalityKind, run_modality, select_pathway
from .harness import (
    ExperimentResult,
    MetricsReport,
    ScenarioConfig,
    generate_population,
    load_scenario,
    run_experiment,
    sweep_threshold,
)

__version__ = "0.1.0"
