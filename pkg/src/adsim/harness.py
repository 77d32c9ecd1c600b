"""Scenario loading, synthetic populations, experiments, and metrics.

Scenarios are single JSON documents (see docs/scenario_format.md). Every
replication regenerates its population, recalibrates, rebuilds thresholds
from validation data when configured, and runs all requested modalities over
the same population with the same agent draws (paired comparison). All
randomness derives from the scenario's base seed; nothing reads the
environment, so repeated runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .agents import AiProfile, ClinicianProfile, InteractionConfig
from .calibration import (
    CalibrationMap,
    ThresholdResult,
    fit_pav,
    select_threshold_from_scores,
)
from .dsl import parse_policy, set_confidence_literal, validate_policy
from .dsl.ast import Policy
from .engine import (
    AiBatch,
    ClinicianBatch,
    DEC_AI,
    DEC_CLINICIAN,
    DEC_CLINICIAN_WITH_AI,
    Outcome,
    PATH_AI_ONLY,
    PATH_CLINICIAN_AND_AI,
    PATH_CLINICIAN_ONLY,
    PRIORITY_NONE,
    PRIORITY_ROUTINE,
    PRIORITY_URGENT,
    Population,
    apply_modality,
    draw_ai_batch,
    draw_clinician_batch,
)
from .errors import AdsimError, ConfigurationError
from .model import (
    CLASS_INDEX,
    CLASS_ORDER,
    CaseRecord,
    DEFAULT_RULE,
    Decider,
    DiagnosisClass,
    FieldSchema,
    FinalDecision,
    Pathway,
    PathwayDecision,
    PathwayKind,
    QUALITY_INDEX,
    QUALITY_ORDER,
    QualityStatus,
    Specimen,
    TriState,
)
from .router import AuditLog, Modality, ModalityKind, run_modality

_NORMAL = CLASS_INDEX[DiagnosisClass.NORMAL]

# stream tags for per-replication RNG derivation
_STREAM_POP, _STREAM_VAL, _STREAM_AI, _STREAM_CLIN, _STREAM_VAL_AI = range(5)


class InfeasibleThresholdError(AdsimError):
    """Raised when no confidence cutoff can meet the configured error target."""

    def __init__(self, result: ThresholdResult):
        super().__init__(
            f"no feasible threshold for {result.target_class.value} at "
            f"target error {result.target_error} ({result.method}, "
            f"{result.n_class_predictions} predictions)"
        )
        self.result = result


@dataclass(frozen=True)
class ContextModel:
    endoscopy_abnormal_given_abnormal: float
    endoscopy_abnormal_given_normal: float
    endoscopy_unknown_rate: float
    transplant_history_rate: float
    suspicion_tag_rates: Mapping[str, float]
    oos_entity_rates: Mapping[str, float]

    def __post_init__(self) -> None:
        rates = [
            self.endoscopy_abnormal_given_abnormal,
            self.endoscopy_abnormal_given_normal,
            self.endoscopy_unknown_rate,
            self.transplant_history_rate,
            *self.suspicion_tag_rates.values(),
            *self.oos_entity_rates.values(),
        ]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ConfigurationError("context model rates must lie in [0, 1]")


@dataclass(frozen=True)
class AutoThreshold:
    rule: str
    target_class: DiagnosisClass
    target_error: float
    method: str


@dataclass
class ScenarioConfig:
    name: str
    schema: FieldSchema
    specimen: Specimen
    prevalence: np.ndarray  # aligned with CLASS_ORDER
    context_model: ContextModel
    quality_defect_rates: Mapping[QualityStatus, float]
    ai_profile: AiProfile
    clinician_profile: ClinicianProfile
    interaction: InteractionConfig
    calibration_source: str  # "identity" | "inline" | "fit_on_validation"
    inline_calibration: Optional[CalibrationMap]
    policy: Policy
    policy_path: Optional[Path]
    safety_profile: bool
    auto_thresholds: tuple[AutoThreshold, ...]
    modality_params: Mapping[str, Mapping[str, float]]
    population_size: int
    validation_size: int
    base_seed: int
    replications: int
    assumptions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if abs(float(self.prevalence.sum()) - 1.0) > 1e-9:
            raise ConfigurationError("prevalence must sum to 1")
        if (self.prevalence < 0).any():
            raise ConfigurationError("prevalence entries must be >= 0")
        defect_total = 0.0
        for status, rate in self.quality_defect_rates.items():
            if status is QualityStatus.PASS:
                raise ConfigurationError("quality_defect_rates must not include pass")
            if not 0.0 <= rate <= 1.0:
                raise ConfigurationError("quality defect rates must lie in [0, 1]")
            defect_total += rate
        if defect_total > 1.0:
            raise ConfigurationError("quality defect rates sum above 1")
        diags = validate_policy(self.policy, self.schema, self.safety_profile)
        if diags:
            rendered = "; ".join(d.render() for d in diags)
            raise ConfigurationError(f"policy fails validation: {rendered}")

    def build_modality(self, kind: str, policy: Optional[Policy] = None) -> Modality:
        mk = ModalityKind(kind)
        params = dict(self.modality_params.get(kind, {}))
        if mk is ModalityKind.AUTONOMOUS_DECISION_SUPPORT:
            return Modality(mk, policy=policy if policy is not None else self.policy)
        return Modality(mk, **params)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    base = path.parent

    if "schema_path" in data:
        schema = FieldSchema.load(base / data["schema_path"])
    else:
        schema = FieldSchema.from_dict(data["schema"])

    policy_path = base / data["policy_path"]
    policy = parse_policy(policy_path.read_text(encoding="utf-8"))

    prevalence = np.array(
        [float(data["prevalence"].get(c.value, 0.0)) for c in CLASS_ORDER], dtype=np.float64
    )
    cm = data["context_model"]
    context_model = ContextModel(
        endoscopy_abnormal_given_abnormal=float(cm["endoscopy_abnormal_given_abnormal"]),
        endoscopy_abnormal_given_normal=float(cm["endoscopy_abnormal_given_normal"]),
        endoscopy_unknown_rate=float(cm.get("endoscopy_unknown_rate", 0.0)),
        transplant_history_rate=float(cm.get("transplant_history_rate", 0.0)),
        suspicion_tag_rates=dict(cm.get("suspicion_tag_rates", {})),
        oos_entity_rates=dict(cm.get("oos_entity_rates", {})),
    )

    cal = data.get("calibration", {"source": "identity"})
    source = cal["source"]
    inline = None
    if source == "inline":
        inline = CalibrationMap(tuple((float(u), float(v)) for u, v in cal["breakpoints"]))
    elif source not in ("identity", "fit_on_validation"):
        raise ConfigurationError(f"unknown calibration source {source!r}")

    seeds = data.get("seeds", {})
    return ScenarioConfig(
        name=data["name"],
        schema=schema,
        specimen=Specimen(**data["specimen"]),
        prevalence=prevalence,
        context_model=context_model,
        quality_defect_rates={
            QualityStatus.from_text(k): float(v)
            for k, v in data.get("quality_defect_rates", {}).items()
        },
        ai_profile=AiProfile.from_config(data["ai_profile"]),
        clinician_profile=ClinicianProfile.from_config(data["clinician_profile"]),
        interaction=InteractionConfig(**data.get("interaction", {})),
        calibration_source=source,
        inline_calibration=inline,
        policy=policy,
        policy_path=policy_path,
        safety_profile=bool(data.get("safety_profile", True)),
        auto_thresholds=tuple(
            AutoThreshold(
                rule=t["rule"],
                target_class=DiagnosisClass.from_text(t["target_class"]),
                target_error=float(t["target_error"]),
                method=t.get("method", "binomial_upper_95"),
            )
            for t in data.get("auto_thresholds", ())
        ),
        modality_params=data.get("modalities", {}),
        population_size=int(data.get("population_size", 10000)),
        validation_size=int(data.get("validation_size", 10000)),
        base_seed=int(seeds.get("base", 0)),
        replications=int(seeds.get("replications", 1)),
        assumptions=tuple(data.get("assumptions", ())),
    )


# ---------------------------------------------------------------------------
# Population generation
# ---------------------------------------------------------------------------


def _stream(base_seed: int, rep: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, rep, tag]))


def generate_population_arrays(scenario: ScenarioConfig, n: int, seed: int) -> Population:
    """Column-oriented population; deterministic given (scenario, n, seed)."""
    if n < 1:
        raise ConfigurationError("population size must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    cm = scenario.context_model

    true = rng.choice(len(CLASS_ORDER), size=n, p=scenario.prevalence)

    defect_statuses = sorted(scenario.quality_defect_rates, key=lambda s: QUALITY_INDEX[s])
    probs = [scenario.quality_defect_rates[s] for s in defect_statuses]
    qual_choices = [QUALITY_INDEX[s] for s in defect_statuses] + [QUALITY_INDEX[QualityStatus.PASS]]
    quality = np.asarray(qual_choices, dtype=np.int64)[
        rng.choice(len(qual_choices), size=n, p=np.array(probs + [1.0 - sum(probs)]))
    ]

    abnormal = true != _NORMAL
    u_unknown = rng.random(n)
    u_endo = rng.random(n)
    p_abn = np.where(
        abnormal, cm.endoscopy_abnormal_given_abnormal, cm.endoscopy_abnormal_given_normal
    )
    # endoscopy codes follow the schema's declared value order (normal, abnormal, unknown)
    endo_spec = scenario.schema.context.get("endoscopy")
    if endo_spec is None:
        raise ConfigurationError("schema must declare an `endoscopy` context field")
    v2c = {v: i for i, v in enumerate(endo_spec.values)}
    endo = np.where(u_endo < p_abn, v2c["abnormal"], v2c["normal"]).astype(np.int64)
    endo_codes = np.where(u_unknown < cm.endoscopy_unknown_rate, -1, endo)

    transplant = (rng.random(n) < cm.transplant_history_rate).astype(np.int64)

    susp_spec = scenario.schema.context.get("clinical_suspicion")
    declared_tags = set(susp_spec.values) if susp_spec is not None else set()
    tag_arrays: dict[str, np.ndarray] = {}
    for tag in sorted(declared_tags | set(cm.suspicion_tag_rates)):
        rate = cm.suspicion_tag_rates.get(tag, 0.0)
        tag_arrays[tag] = rng.random(n) < rate

    entities = tuple(sorted(cm.oos_entity_rates))
    oos_code = np.full(n, -1, dtype=np.int64)
    for idx, entity in enumerate(entities):
        hit = (rng.random(n) < cm.oos_entity_rates[entity]) & (oos_code < 0)
        oos_code[hit] = idx

    minutes_vec = np.array([scenario.clinician_profile.minutes_by_class[c] for c in CLASS_ORDER])

    from .engine import Column  # local import to avoid cycle at module load

    context: dict[str, "Column"] = {
        "endoscopy": Column("enum", codes=endo_codes, value_to_code=v2c),
        "transplant_history": Column("bool", codes=transplant),
        "clinical_suspicion": Column("tags", tags=tag_arrays),
    }
    specimen_cols: dict[str, "Column"] = {}
    for fname, spec in scenario.schema.specimen.items():
        sv2c = {v: i for i, v in enumerate(spec.values)}
        value = getattr(scenario.specimen, fname)
        specimen_cols[fname] = Column(
            "enum", codes=np.full(n, sv2c.get(value, -1), dtype=np.int64), value_to_code=sv2c
        )

    return Population(
        n=n,
        true=true.astype(np.int64),
        quality=quality,
        oos_code=oos_code,
        oos_entities=entities,
        minutes=minutes_vec[true],
        context=context,
        specimen=specimen_cols,
    )


def materialize_cases(scenario: ScenarioConfig, pop: Population, seed: int) -> list[CaseRecord]:
    """Expand a column population into CaseRecord objects (JSON Lines shape)."""
    endo = pop.context["endoscopy"]
    code_to_endo = {v: k for k, v in endo.value_to_code.items()}
    transplant = pop.context["transplant_history"].codes
    tags = pop.context["clinical_suspicion"].tags
    cases = []
    for i in range(pop.n):
        suspicion = frozenset(t for t, arr in tags.items() if arr[i])
        context = {
            "endoscopy": code_to_endo.get(int(endo.codes[i]), "unknown"),
            "transplant_history": bool(transplant[i]),
            "clinical_suspicion": suspicion,
        }
        oos = pop.oos_entities[pop.oos_code[i]] if pop.oos_code[i] >= 0 else None
        cases.append(
            CaseRecord(
                case_id=f"{scenario.name}-s{seed}-{i:06d}",
                specimen=scenario.specimen,
                context=context,
                quality=QUALITY_ORDER[int(pop.quality[i])],
                oos_entity=oos,
                true_label=CLASS_ORDER[int(pop.true[i])],
                review_time_minutes=float(pop.minutes[i]),
            )
        )
    return cases


def generate_population(scenario: ScenarioConfig, n: int, seed: int) -> list[CaseRecord]:
    return materialize_cases(scenario, generate_population_arrays(scenario, n, seed), seed)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    n: int
    per_class_sensitivity: dict[str, Optional[float]]
    per_class_specificity: dict[str, Optional[float]]
    sensitivity: Optional[float]  # binary: abnormal detected as abnormal
    specificity: Optional[float]  # binary: normal reported normal
    autonomy_rate: float
    fn_among_auto: Optional[float]
    case_reduction: float
    time_reduction: float
    pathway_histogram: dict[str, int]
    warnings_total: int
    clinician_minutes_total: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "per_class_sensitivity": self.per_class_sensitivity,
            "per_class_specificity": self.per_class_specificity,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "autonomy_rate": self.autonomy_rate,
            "fn_among_auto": self.fn_among_auto,
            "case_reduction": self.case_reduction,
            "time_reduction": self.time_reduction,
            "pathway_histogram": self.pathway_histogram,
            "warnings_total": self.warnings_total,
            "clinician_minutes_total": self.clinician_minutes_total,
        }


def _histogram_key(path_code: int, priority_code: int) -> str:
    if path_code == PATH_AI_ONLY:
        return "ai_only"
    if path_code == PATH_CLINICIAN_ONLY:
        return "clinician_only"
    if priority_code == PRIORITY_URGENT:
        return "clinician_and_ai:urgent"
    if priority_code == PRIORITY_ROUTINE:
        return "clinician_and_ai:routine"
    return "clinician_and_ai"


def metrics_from_outcome(
    outcome: Outcome, true: np.ndarray, baseline_minutes_total: float
) -> MetricsReport:
    n = true.shape[0]
    final = outcome.final

    per_sens: dict[str, Optional[float]] = {}
    per_spec: dict[str, Optional[float]] = {}
    for cls in CLASS_ORDER:
        idx = CLASS_INDEX[cls]
        pos = true == idx
        neg = ~pos
        per_sens[cls.value] = float((final[pos] == idx).mean()) if pos.any() else None
        per_spec[cls.value] = float((final[neg] != idx).mean()) if neg.any() else None

    truth_abnormal = true != _NORMAL
    final_abnormal = final != _NORMAL
    sensitivity = float(final_abnormal[truth_abnormal].mean()) if truth_abnormal.any() else None
    specificity = (
        float((~final_abnormal)[~truth_abnormal].mean()) if (~truth_abnormal).any() else None
    )

    auto = outcome.decider == DEC_AI
    autonomy_rate = float(auto.mean())
    auto_normal = auto & (final == _NORMAL)
    fn_among_auto = float(truth_abnormal[auto_normal].mean()) if auto_normal.any() else None

    histogram: dict[str, int] = {}
    keys = np.array([_histogram_key(int(p), int(q)) for p, q in zip(outcome.pathway, outcome.priority)])
    for key in sorted(set(keys.tolist())):
        histogram[key] = int((keys == key).sum())

    minutes_total = float(outcome.minutes.sum())
    time_reduction = (
        1.0 - minutes_total / baseline_minutes_total if baseline_minutes_total > 0 else 0.0
    )
    return MetricsReport(
        n=n,
        per_class_sensitivity=per_sens,
        per_class_specificity=per_spec,
        sensitivity=sensitivity,
        specificity=specificity,
        autonomy_rate=autonomy_rate,
        fn_among_auto=fn_among_auto,
        case_reduction=autonomy_rate,
        time_reduction=time_reduction,
        pathway_histogram=histogram,
        warnings_total=int(outcome.warnings.sum()),
        clinician_minutes_total=minutes_total,
    )


def compute_metrics(
    audit: AuditLog | Iterable,
    truths: Mapping[str, DiagnosisClass],
    unaided_baseline: AuditLog | Iterable,
) -> MetricsReport:
    """Metrics from materialized audit logs (the record-level path).

    The array-level path (metrics_from_outcome) is used inside experiments;
    the two are checked for equality in the test suite.
    """
    records = list(audit)
    baseline = list(unaided_baseline)
    missing = [r.final_decision.case_id for r in records if r.final_decision.case_id not in truths]
    if missing:
        raise AdsimError(f"missing ground truth for case_ids: {missing[:5]}" )

    true = np.array([CLASS_INDEX[truths[r.final_decision.case_id]] for r in records], dtype=np.int64)
    final = np.array([CLASS_INDEX[r.final_decision.final_label] for r in records], dtype=np.int64)
    decider = np.array(
        [DEC_AI if r.final_decision.decider is Decider.AI else (
            DEC_CLINICIAN if r.final_decision.decider is Decider.CLINICIAN else DEC_CLINICIAN_WITH_AI
        ) for r in records],
        dtype=np.int8,
    )
    path_codes = {PathwayKind.AI_ONLY: PATH_AI_ONLY, PathwayKind.CLINICIAN_ONLY: PATH_CLINICIAN_ONLY,
                  PathwayKind.CLINICIAN_AND_AI: PATH_CLINICIAN_AND_AI}
    prio_codes = {None: PRIORITY_NONE, "urgent": PRIORITY_URGENT, "routine": PRIORITY_ROUTINE}
    pathway = np.array([path_codes[r.pathway_decision.pathway.kind] for r in records], dtype=np.int8)
    priority = np.array([prio_codes[r.pathway_decision.pathway.priority] for r in records], dtype=np.int8)
    minutes = np.array([r.final_decision.clinician_minutes for r in records], dtype=np.float64)
    warnings = np.array([r.final_decision.warnings_fired for r in records], dtype=np.int8)
    outcome = Outcome(pathway, priority, final, decider, minutes, warnings)
    baseline_minutes = float(sum(r.final_decision.clinician_minutes for r in baseline))
    return metrics_from_outcome(outcome, true, baseline_minutes)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

_AGG_FIELDS = (
    "sensitivity",
    "specificity",
    "autonomy_rate",
    "fn_among_auto",
    "case_reduction",
    "time_reduction",
    "warnings_total",
)


@dataclass
class ModalityResult:
    kind: str
    reports: list[MetricsReport]

    def summary(self) -> dict[str, dict[str, Optional[float]]]:
        out = {}
        for name in _AGG_FIELDS:
            values = [getattr(r, name) for r in self.reports]
            values = [v for v in values if v is not None]
            if not values:
                out[name] = {"mean": None, "ci95": None}
                continue
            mean = float(np.mean(values))
            if len(values) > 1:
                half = 1.96 * float(np.std(values, ddof=1)) / math.sqrt(len(values))
            else:
                half = None
            out[name] = {"mean": mean, "ci95": half}
        return out


@dataclass
class ExperimentResult:
    scenario: str
    n: int
    replications: int
    per_modality: dict[str, ModalityResult]
    thresholds: list[dict]  # per replication: rule -> ThresholdResult dict

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "replications": self.replications,
            "modalities": {
                kind: {
                    "summary": res.summary(),
                    "replications": [r.to_dict() for r in res.reports],
                }
                for kind, res in self.per_modality.items()
            },
            "thresholds": self.thresholds,
        }


@dataclass
class ReplicationSetup:
    """Everything needed to run modalities over one replication's population."""

    pop: Population
    ai_batch: AiBatch
    clin_batch: ClinicianBatch
    calibration: Optional[CalibrationMap]
    policy: Policy
    thresholds: dict[str, ThresholdResult]


def _fit_replication_calibration(
    scenario: ScenarioConfig, rep: int
) -> Optional[CalibrationMap]:
    if scenario.calibration_source == "identity":
        return CalibrationMap.identity()
    if scenario.calibration_source == "inline":
        return scenario.inline_calibration
    # fit-on-validation: separate population, raw scores vs correctness
    val_pop = generate_population_arrays(
        scenario, scenario.validation_size, seed=scenario.base_seed * 1_000_003 + rep * 2 + 1
    )
    rng = _stream(scenario.base_seed, rep, _STREAM_VAL_AI)
    batch = draw_ai_batch(scenario.ai_profile, val_pop, rng, calibration=None)
    mask = batch.pred >= 0
    return fit_pav(batch.raw[mask], batch.correct[mask])


def _validation_batch(scenario: ScenarioConfig, rep: int, calibration: Optional[CalibrationMap]):
    val_pop = generate_population_arrays(
        scenario, scenario.validation_size, seed=scenario.base_seed * 1_000_003 + rep * 2 + 1
    )
    rng = _stream(scenario.base_seed, rep, _STREAM_VAL_AI)
    batch = draw_ai_batch(scenario.ai_profile, val_pop, rng, calibration)
    return val_pop, batch


def prepare_replication(scenario: ScenarioConfig, rep: int, n: int) -> ReplicationSetup:
    calibration = _fit_replication_calibration(scenario, rep)

    policy = scenario.policy
    thresholds: dict[str, ThresholdResult] = {}
    if scenario.auto_thresholds:
        val_pop, val_batch = _validation_batch(scenario, rep, calibration)
        for spec in scenario.auto_thresholds:
            cls_idx = CLASS_INDEX[spec.target_class]
            mask = val_batch.pred == cls_idx
            conf = val_batch.effective[mask]
            wrong = val_pop.true[mask] != cls_idx
            result = select_threshold_from_scores(
                conf, wrong, spec.target_class, spec.target_error, spec.method
            )
            thresholds[spec.rule] = result
            if not result.feasible:
                raise InfeasibleThresholdError(result)
            policy = set_confidence_literal(policy, spec.rule, result.tau)

    pop_seed = scenario.base_seed * 1_000_003 + rep * 2
    pop = generate_population_arrays(scenario, n, seed=pop_seed)
    ai_batch = draw_ai_batch(
        scenario.ai_profile, pop, _stream(scenario.base_seed, rep, _STREAM_AI), calibration
    )
    clin_batch = draw_clinician_batch(
        scenario.clinician_profile, pop, _stream(scenario.base_seed, rep, _STREAM_CLIN)
    )
    return ReplicationSetup(pop, ai_batch, clin_batch, calibration, policy, thresholds)


def run_experiment(
    scenario: ScenarioConfig,
    modalities: Sequence[str],
    n: Optional[int] = None,
    replications: Optional[int] = None,
) -> ExperimentResult:
    n = n if n is not None else scenario.population_size
    reps = replications if replications is not None else scenario.replications
    results: dict[str, list[MetricsReport]] = {kind: [] for kind in modalities}
    thresholds_log: list[dict] = []

    for rep in range(reps):
        setup = prepare_replication(scenario, rep, n)
        thresholds_log.append({rule: res.to_dict() for rule, res in setup.thresholds.items()})

        unaided_outcome = apply_modality(
            scenario.build_modality("unaided"),
            setup.pop,
            setup.ai_batch,
            setup.clin_batch,
            scenario.clinician_profile,
            scenario.interaction,
        )
        baseline_minutes = float(unaided_outcome.minutes.sum())

        for kind in modalities:
            if kind == "unaided":
                outcome = unaided_outcome
            else:
                modality = scenario.build_modality(kind, policy=setup.policy)
                outcome = apply_modality(
                    modality,
                    setup.pop,
                    setup.ai_batch,
                    setup.clin_batch,
                    scenario.clinician_profile,
                    scenario.interaction,
                )
            results[kind].append(metrics_from_outcome(outcome, setup.pop.true, baseline_minutes))

    return ExperimentResult(
        scenario=scenario.name,
        n=n,
        replications=reps,
        per_modality={kind: ModalityResult(kind, reports) for kind, reports in results.items()},
        thresholds=thresholds_log,
    )


def sweep_threshold(
    scenario: ScenarioConfig,
    tau_grid: Sequence[float],
    rule: str = "auto_normal",
    n: Optional[int] = None,
) -> list[dict]:
    """One paired experiment per tau spliced into the named rule's
    ai.confidence literal. Rows come back in grid order."""
    if any(not 0.0 <= t <= 1.0 for t in tau_grid):
        raise ConfigurationError("tau grid values must lie in [0, 1]")
    if any(b < a for a, b in zip(tau_grid, list(tau_grid)[1:])):
        raise ConfigurationError("tau grid must be ascending")
    n = n if n is not None else scenario.population_size
    setup = prepare_replication(scenario, 0, n)
    unaided = apply_modality(
        scenario.build_modality("unaided"),
        setup.pop,
        setup.ai_batch,
        setup.clin_batch,
        scenario.clinician_profile,
        scenario.interaction,
    )
    baseline_minutes = float(unaided.minutes.sum())
    rows = []
    for tau in tau_grid:
        policy = set_confidence_literal(setup.policy, rule, float(tau))
        outcome = apply_modality(
            scenario.build_modality("autonomous_decision_support", policy=policy),
            setup.pop,
            setup.ai_batch,
            setup.clin_batch,
            scenario.clinician_profile,
            scenario.interaction,
        )
        report = metrics_from_outcome(outcome, setup.pop.true, baseline_minutes)
        rows.append(
            {
                "tau": float(tau),
                "coverage": report.autonomy_rate,
                "fn_among_auto": report.fn_among_auto,
                "time_reduction": report.time_reduction,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Audit materialization and the scalar (per-case) runner
# ---------------------------------------------------------------------------

_DECIDER_BY_CODE = {DEC_AI: Decider.AI, DEC_CLINICIAN: Decider.CLINICIAN,
                    DEC_CLINICIAN_WITH_AI: Decider.CLINICIAN_WITH_AI}
_PATHWAY_BY_CODE = {PATH_AI_ONLY: PathwayKind.AI_ONLY, PATH_CLINICIAN_ONLY: PathwayKind.CLINICIAN_ONLY,
                    PATH_CLINICIAN_AND_AI: PathwayKind.CLINICIAN_AND_AI}
_PRIORITY_BY_CODE = {PRIORITY_NONE: None, PRIORITY_URGENT: "urgent", PRIORITY_ROUTINE: "routine"}
_TRI_BY_CODE = {1: TriState.TRUE, -1: TriState.FALSE, 0: TriState.UNKNOWN}


def outcome_to_audit(
    outcome: Outcome,
    pop: Population,
    modality_kind: str,
    policy: Optional[Policy] = None,
    path: Optional[str | Path] = None,
    label: str = "case",
) -> AuditLog:
    """Expand engine arrays into audit records (synchronous with resolution in
    the scalar path; here materialized after the batch run, same content)."""
    log = AuditLog(path)
    rules = policy.rules if policy is not None else ()
    for i in range(pop.n):
        case_id = pop.case_id(i, label)
        kind = _PATHWAY_BY_CODE[int(outcome.pathway[i])]
        pathway = Pathway(kind, _PRIORITY_BY_CODE[int(outcome.priority[i])])
        if outcome.fired is not None and policy is not None:
            fired_idx = int(outcome.fired[i])
            fired = rules[fired_idx].rule_id if fired_idx < len(rules) else DEFAULT_RULE
            upto = min(fired_idx + 1, len(rules))
            trace = tuple(
                (rules[r].rule_id, _TRI_BY_CODE[int(outcome.tri[r, i])]) for r in range(upto)
            )
        else:
            fired = f"modality:{modality_kind}"
            trace = ()
        decision = PathwayDecision(case_id, pathway, fired, trace)
        final = FinalDecision(
            case_id,
            CLASS_ORDER[int(outcome.final[i])],
            _DECIDER_BY_CODE[int(outcome.decider[i])],
            float(outcome.minutes[i]),
            int(outcome.warnings[i]),
        )
        log.append(decision, final)
    log.close()
    return log


def case_seed_sequence(base_seed: int, case_id: str) -> np.random.SeedSequence:
    """Per-case stream derivation: hash(seed, case_id). Stable across runs and
    independent of case order, so case-level parallelism cannot change results."""
    digest = hashlib.sha256(case_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([base_seed, *words])


def run_cases_scalar(
    modality: Modality,
    cases: Sequence[CaseRecord],
    ai_profile: AiProfile,
    clinician: ClinicianProfile,
    base_seed: int,
    calibration: Optional[CalibrationMap] = None,
    interaction: Optional[InteractionConfig] = None,
    audit_path: Optional[str | Path] = None,
) -> AuditLog:
    """Reference per-case runner: one derived RNG stream per case, audit
    appended synchronously with resolution."""
    log = AuditLog(audit_path)
    for case in cases:
        rng = np.random.default_rng(case_seed_sequence(base_seed, case.case_id))
        decision, final = run_modality(
            modality, case, ai_profile, clinician, rng, calibration, interaction
        )
        log.append(decision, final)
    log.close()
    return log
