"""End-to-end acceptance gate.

Eight checks over the shipped scenarios and tools:

1. safety invariants of the colorectal-biopsy policy are exact at scale
2. a selected autonomy threshold keeps the auto-report error within target
3. isotonic calibration repairs a deliberately miscalibrated score
4. policy-routed assistance beats the unaided clinician on both binary
   sensitivity and specificity, matching a closed-form oracle
5. workload accounting matches its closed form; time savings lag case savings
6. confident urgent abnormals are never auto-reported by the policy but are
   by the confidence-only baseline
7. rule-language round-trip, evaluator, and isotonic fit agree with
   independent reference implementations
8. the command-line tools are byte-deterministic
"""

from __future__ import annotations

import filecmp
import itertools
import json
import math

import numpy as np
import pytest

from adsim import _kernels
from adsim.calibration import fit_pav, reliability
from adsim.cli import EXIT_OK, main as cli_main
from adsim.dsl import evaluate_expr, format_expr, format_policy, parse_policy
from adsim.engine import PATH_AI_ONLY, PATH_CLINICIAN_AND_AI, PRIORITY_URGENT, apply_modality
from adsim.harness import load_scenario, prepare_replication, run_experiment
from conftest import SCENARIOS, random_expr, random_policy
from oracles import (
    complementarity_expectations,
    identity_step_tail,
    isotonic_enumerate,
    reference_evaluate,
)
from test_dsl import _TRI_TO_LETTER, oracle_values, random_case_and_ai

_URGENT = (1, 3)  # class indices of the two urgent categories


def _ads_outcome(scenario, rep, n):
    setup = prepare_replication(scenario, rep, n)
    outcome = apply_modality(
        scenario.build_modality("autonomous_decision_support", policy=setup.policy),
        setup.pop, setup.ai_batch, setup.clin_batch,
        scenario.clinician_profile, scenario.interaction,
    )
    return setup, outcome


# ---------------------------------------------------------------------------
# 1. safety invariants, exact
# ---------------------------------------------------------------------------


def test_safety_invariants_exact_at_scale():
    scenario = load_scenario(SCENARIOS / "cobix.json")
    for rep in range(10):
        setup, outcome = _ads_outcome(scenario, rep, 100_000)
        auto = outcome.pathway == PATH_AI_ONLY
        assert auto.any()  # the check is vacuous otherwise

        # (a) never auto-report a case whose quality check failed
        assert not (auto & (setup.ai_batch.qc_status != 0)).any()
        # (b) never auto-report an AI-normal call against an abnormal endoscopy
        endo = setup.pop.context["endoscopy"]
        abn = endo.codes == endo.value_to_code["abnormal"]
        assert not (auto & abn & (setup.ai_batch.pred == 0)).any()
        # (c) never auto-report transplant patients (out of scope)
        assert not (auto & (setup.pop.context["transplant_history"].codes == 1)).any()
        # (d) never auto-report a declared spirochetosis suspicion (known gap)
        susp = setup.pop.context["clinical_suspicion"].tags["spirochetosis"]
        assert not (auto & susp).any()


# ---------------------------------------------------------------------------
# 2. threshold safety
# ---------------------------------------------------------------------------


def test_selected_threshold_bounds_auto_report_error():
    scenario = load_scenario(SCENARIOS / "cobix.json")
    result = run_experiment(
        scenario, ["autonomous_decision_support"], n=10_000, replications=100
    )
    reports = result.per_modality["autonomous_decision_support"].reports
    within = sum(
        1 for r in reports if r.fn_among_auto is None or r.fn_among_auto <= 0.01
    )
    assert within >= 95, f"only {within}/100 replications met the 1% target"
    assert all(r.autonomy_rate > 0.0 for r in reports)


# ---------------------------------------------------------------------------
# 3. calibration repair
# ---------------------------------------------------------------------------


def test_pav_repairs_miscalibrated_scores():
    rng = np.random.default_rng(424242)
    n = 20_000
    raw = rng.random(n)
    correct = rng.random(n) < raw**2  # accuracy raw^2, reported confidence raw

    before = reliability(raw, correct)
    assert before.ece >= 0.10

    cal = fit_pav(raw, correct)
    calibrated = cal.apply_array(raw)
    after = reliability(calibrated, correct)
    assert after.ece <= 0.02

    band = (calibrated >= 0.88) & (calibrated <= 0.92)
    assert band.sum() > 100
    accuracy = float(correct[band].mean())
    assert abs(accuracy - 0.90) <= 0.02

    values = [v for _, v in cal.breakpoints]
    assert all(b >= a for a, b in zip(values, values[1:]))  # monotone, exact


# ---------------------------------------------------------------------------
# 4. complementarity
# ---------------------------------------------------------------------------


def test_assisted_routing_beats_unaided_on_both_axes():
    scenario = load_scenario(SCENARIOS / "complementarity.json")
    result = run_experiment(
        scenario, ["unaided", "autonomous_decision_support"], n=10_000, replications=100
    )
    unaided = result.per_modality["unaided"].reports
    assisted = result.per_modality["autonomous_decision_support"].reports

    d_sens = float(np.mean([a.sensitivity - u.sensitivity for a, u in zip(assisted, unaided)]))
    d_spec = float(np.mean([a.specificity - u.specificity for a, u in zip(assisted, unaided)]))
    assert d_sens >= 0.01, f"sensitivity delta {d_sens:+.4f}"
    assert d_spec >= 0.01, f"specificity delta {d_spec:+.4f}"

    expected = complementarity_expectations(scenario)
    for kind, reports in (("unaided", unaided), ("autonomous_decision_support", assisted)):
        sens = float(np.mean([r.sensitivity for r in reports]))
        spec = float(np.mean([r.specificity for r in reports]))
        assert abs(sens - expected[kind]["sensitivity"]) <= 0.005, kind
        assert abs(spec - expected[kind]["specificity"]) <= 0.005, kind


# ---------------------------------------------------------------------------
# 5. workload accounting
# ---------------------------------------------------------------------------


def test_workload_matches_closed_form():
    scenario = load_scenario(SCENARIOS / "workload.json")
    result = run_experiment(
        scenario, ["autonomous_decision_support"], n=20_000, replications=10
    )
    reports = result.per_modality["autonomous_decision_support"].reports

    prev = scenario.prevalence
    A = scenario.ai_profile.confusion
    ac, bc = scenario.ai_profile.score_given_correct
    ai_, bi = scenario.ai_profile.score_given_incorrect
    q_correct = identity_step_tail(0.8, ac, bc)
    q_wrong = identity_step_tail(0.8, ai_, bi)

    # expected auto rate: AI calls normal and clears the 0.8 cutoff
    q = np.where(np.arange(5) == 0, q_correct, q_wrong)
    expect_auto = float(np.sum(prev * A[:, 0] * q))
    # review minutes follow the true class: 2 for normals, 6 for abnormals
    minutes_by_true = np.array([2.0, 6.0, 6.0, 6.0, 6.0])
    expect_saved = float(np.sum(prev * A[:, 0] * q * minutes_by_true))
    expect_time_reduction = expect_saved / float(np.sum(prev * minutes_by_true))

    for r in reports:
        assert abs(r.case_reduction - expect_auto) <= 0.01
        assert abs(r.time_reduction - expect_time_reduction) <= 0.01
        # auto-reported cases are the cheap normals, so time lags cases
        assert r.time_reduction < r.case_reduction


# ---------------------------------------------------------------------------
# 6. criticality contrast
# ---------------------------------------------------------------------------


def test_confident_urgents_route_joint_not_auto():
    scenario = load_scenario(SCENARIOS / "criticality.json")
    setup, ads = _ads_outcome(scenario, 0, 10_000)
    confident_urgent = (
        np.isin(setup.ai_batch.pred, _URGENT) & (setup.ai_batch.effective >= 0.9)
    )
    assert confident_urgent.sum() > 100

    # policy: every confident urgent goes to the joint urgent pathway
    urgent_joint = (ads.pathway == PATH_CLINICIAN_AND_AI) & (ads.priority == PRIORITY_URGENT)
    assert np.array_equal(urgent_joint, confident_urgent)

    # confidence-only baseline: every one of them is auto-reported
    codoc = apply_modality(
        scenario.build_modality("codoc"), setup.pop, setup.ai_batch, setup.clin_batch,
        scenario.clinician_profile, scenario.interaction,
    )
    assert (codoc.pathway[confident_urgent] == PATH_AI_ONLY).all()
    assert (codoc.decider[confident_urgent] == 0).all()


# ---------------------------------------------------------------------------
# 7. language and fit correctness vs references
# ---------------------------------------------------------------------------


def test_policy_parse_format_fixpoint():
    rng = np.random.default_rng(20_001)
    for _ in range(10_000):
        policy = random_policy(rng)
        text = format_policy(policy)
        reparsed = parse_policy(text)
        assert reparsed == policy
        assert format_policy(reparsed) == text


def test_evaluator_matches_reference_at_scale():
    rng = np.random.default_rng(20_002)
    for _ in range(10_000):
        expr = random_expr(rng)
        case, ai = random_case_and_ai(rng)
        got = _TRI_TO_LETTER[evaluate_expr(expr, case, ai)]
        want = reference_evaluate(expr, oracle_values(case, ai))
        assert got == want, format_expr(expr)


def test_pav_matches_exhaustive_enumeration():
    for n in range(1, 7):
        for pattern in itertools.product([0.0, 1.0], repeat=n):
            values = np.array(pattern)
            weights = np.ones(n)
            got = _kernels.pav_fit(values, weights)
            want = isotonic_enumerate(values, weights)
            assert np.array_equal(got, want), pattern


# ---------------------------------------------------------------------------
# 8. CLI determinism
# ---------------------------------------------------------------------------


def test_cli_outputs_are_byte_identical(tmp_path, capsys):
    scenario = str(SCENARIOS / "criticality.json")
    sim = ("simulate", scenario, "--modality", "autonomous_decision_support,codoc",
           "--n", "500", "--replications", "2", "--seed", "17")
    cmp_args = ("compare", scenario, "--against", "codoc,hcn_autoreport",
                "--n", "500", "--replications", "2", "--seed", "17")
    for args, names in (
        (sim, ("report.json", "summary.txt", "audit_unaided.jsonl",
               "audit_autonomous_decision_support.jsonl", "audit_codoc.jsonl")),
        (cmp_args, ("compare.csv", "compare.txt")),
    ):
        out1 = tmp_path / (args[0] + "1")
        out2 = tmp_path / (args[0] + "2")
        assert cli_main([*args, "--out", str(out1)]) == EXIT_OK
        assert cli_main([*args, "--out", str(out2)]) == EXIT_OK
        capsys.readouterr()
        for name in names:
            assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name
