"""Scenario loading, population generation, metrics, and experiments."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from adsim.errors import AdsimError, ConfigurationError
from adsim.harness import (
    AutoThreshold,
    InfeasibleThresholdError,
    compute_metrics,
    generate_population,
    generate_population_arrays,
    load_scenario,
    materialize_cases,
    metrics_from_outcome,
    outcome_to_audit,
    prepare_replication,
    run_cases_scalar,
    run_experiment,
    sweep_threshold,
)
from adsim.engine import apply_modality
from adsim.model import CLASS_INDEX, CLASS_ORDER, DiagnosisClass, QualityStatus
from adsim.router import Modality, ModalityKind
from conftest import SCENARIOS


@pytest.fixture(scope="module")
def cobix():
    return load_scenario(SCENARIOS / "cobix.json")


@pytest.fixture(scope="module")
def workload():
    return load_scenario(SCENARIOS / "workload.json")


def test_load_scenario_fields(cobix):
    assert cobix.name == "cobix"
    assert cobix.prevalence.sum() == pytest.approx(1.0)
    assert cobix.policy.name == "cobix-v1"
    assert cobix.auto_thresholds[0].target_class is DiagnosisClass.NORMAL
    assert cobix.calibration_source == "fit_on_validation"


def test_generate_population_deterministic(cobix):
    a = generate_population(cobix, 200, seed=42)
    b = generate_population(cobix, 200, seed=42)
    c = generate_population(cobix, 200, seed=43)
    assert a == b
    assert a != c
    assert len({case.case_id for case in a}) == 200


def test_population_matches_configured_rates(cobix):
    pop = generate_population_arrays(cobix, 50000, seed=7)
    share_normal = float((pop.true == 0).mean())
    assert abs(share_normal - 0.35) < 0.01
    defect = float((pop.quality != 0).mean())
    assert abs(defect - 0.035) < 0.005
    endo = pop.context["endoscopy"].codes
    assert abs(float((endo == -1).mean()) - 0.05) < 0.005
    # endoscopy tracks tissue abnormality
    abn_code = pop.context["endoscopy"].value_to_code["abnormal"]
    seen = endo >= 0
    abnormal = pop.true != 0
    assert float((endo[seen & abnormal] == abn_code).mean()) > 0.85
    assert float((endo[seen & ~abnormal] == abn_code).mean()) < 0.2


def test_materialized_cases_are_valid(cobix):
    pop = generate_population_arrays(cobix, 300, seed=9)
    cases = materialize_cases(cobix, pop, seed=9)
    from adsim.model import validate_case

    for case in cases:
        assert validate_case(case, cobix.schema) == []


def test_metrics_array_and_audit_paths_agree(workload):
    setup = prepare_replication(workload, 0, 500)
    unaided = apply_modality(
        workload.build_modality("unaided"), setup.pop, setup.ai_batch, setup.clin_batch,
        workload.clinician_profile, workload.interaction,
    )
    ads = apply_modality(
        workload.build_modality("autonomous_decision_support", policy=setup.policy),
        setup.pop, setup.ai_batch, setup.clin_batch,
        workload.clinician_profile, workload.interaction,
    )
    array_report = metrics_from_outcome(ads, setup.pop.true, float(unaided.minutes.sum()))

    audit = outcome_to_audit(ads, setup.pop, "autonomous_decision_support", setup.policy)
    baseline = outcome_to_audit(unaided, setup.pop, "unaided")
    truths = {
        setup.pop.case_id(i): CLASS_ORDER[int(setup.pop.true[i])] for i in range(setup.pop.n)
    }
    audit_report = compute_metrics(audit, truths, baseline)
    assert audit_report == array_report
    assert set(array_report.pathway_histogram) <= {"ai_only", "clinician_only"}
    assert sum(array_report.pathway_histogram.values()) == 500


def test_compute_metrics_requires_truths(workload):
    setup = prepare_replication(workload, 0, 10)
    out = apply_modality(
        workload.build_modality("unaided"), setup.pop, setup.ai_batch, setup.clin_batch,
        workload.clinician_profile, workload.interaction,
    )
    audit = outcome_to_audit(out, setup.pop, "unaided")
    with pytest.raises(AdsimError):
        compute_metrics(audit, {}, audit)


def test_run_experiment_shapes_and_pairing(workload):
    result = run_experiment(
        workload, ["unaided", "autonomous_decision_support", "codoc"], n=1000, replications=3
    )
    assert result.replications == 3
    for res in result.per_modality.values():
        assert len(res.reports) == 3
    summary = result.per_modality["unaided"].summary()
    assert summary["autonomy_rate"]["mean"] == 0.0
    # rerunning yields identical reports (same seeds, same draws)
    again = run_experiment(workload, ["unaided"], n=1000, replications=3)
    assert again.per_modality["unaided"].reports == result.per_modality["unaided"].reports


def test_experiment_logs_selected_thresholds(cobix):
    result = run_experiment(cobix, ["autonomous_decision_support"], n=500, replications=2)
    assert len(result.thresholds) == 2
    for entry in result.thresholds:
        assert entry["auto_normal"]["feasible"] is True
        assert 0.0 <= entry["auto_normal"]["tau"] <= 1.0


def test_infeasible_threshold_aborts_with_report(cobix):
    impossible = dataclasses.replace(
        cobix,
        auto_thresholds=(
            AutoThreshold("auto_normal", DiagnosisClass.NORMAL, 1e-7, "binomial_upper_95"),
        ),
    )
    with pytest.raises(InfeasibleThresholdError) as err:
        run_experiment(impossible, ["autonomous_decision_support"], n=100, replications=1)
    assert err.value.result.feasible is False
    assert err.value.result.tau is None


def test_sweep_threshold_coverage_monotone(workload):
    grid = [0.0, 0.2, 0.5, 0.8, 0.9, 0.99, 1.0]
    rows = sweep_threshold(workload, grid, rule="auto_normal", n=4000)
    assert [r["tau"] for r in rows] == grid
    coverages = [r["coverage"] for r in rows]
    assert all(b <= a for a, b in zip(coverages, coverages[1:]))
    assert coverages[0] > 0.3  # tau 0: every AI-normal call auto-reports
    for r in rows:
        if r["coverage"] == 0.0:
            assert r["fn_among_auto"] is None


def test_sweep_threshold_rejects_bad_grid(workload):
    with pytest.raises(ConfigurationError):
        sweep_threshold(workload, [0.5, 0.2])
    with pytest.raises(ConfigurationError):
        sweep_threshold(workload, [0.5, 1.2])


def test_scalar_runner_is_deterministic_and_order_free(workload):
    cases = generate_population(workload, 40, seed=3)
    modality = Modality(ModalityKind.UNAIDED)
    log1 = run_cases_scalar(modality, cases, workload.ai_profile,
                            workload.clinician_profile, base_seed=11)
    log2 = run_cases_scalar(modality, list(reversed(cases)), workload.ai_profile,
                            workload.clinician_profile, base_seed=11)
    by_id_1 = {r.final_decision.case_id: r.final_decision for r in log1}
    by_id_2 = {r.final_decision.case_id: r.final_decision for r in log2}
    assert by_id_1 == by_id_2  # per-case streams don't depend on order
