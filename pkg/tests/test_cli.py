"""Command-line interface: exit codes, file outputs, and determinism."""

from __future__ import annotations

import filecmp
import json

import pytest

from adsim.cli import (
    EXIT_DIAGNOSTICS,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    main,
)
from conftest import DOCS, SCENARIOS

COBIX_DCP = str(DOCS / "cobix.dcp")
COBIX_SCHEMA = str(DOCS / "cobix_schema.json")
CRITICALITY = str(SCENARIOS / "criticality.json")


def run(*argv):
    return main(list(argv))


# ---------------------------------------------------------------------------
# policy check / fmt / build
# ---------------------------------------------------------------------------


def test_check_shipped_policy_is_clean(capsys):
    assert run("policy", "check", COBIX_DCP, "--schema", COBIX_SCHEMA,
               "--safety-profile") == EXIT_OK
    assert "ok" in capsys.readouterr().out


def test_check_reports_diagnostics(tmp_path, capsys):
    bad = tmp_path / "bad.dcp"
    bad.write_text(
        'policy "p" {\n'
        "  default -> ai_only;\n"
        "  rule r when ai.confidence >= 0.5 -> ai_only;\n"
        "}\n"
    )
    assert run("policy", "check", str(bad), "--safety-profile") == EXIT_DIAGNOSTICS
    assert "default" in capsys.readouterr().err


def test_check_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.dcp"
    bad.write_text('policy "p" { default -> ')
    assert run("policy", "check", str(bad)) == EXIT_DIAGNOSTICS
    assert "parse error" in capsys.readouterr().err


def test_missing_file_is_runtime_error(capsys):
    assert run("policy", "check", "/nonexistent/x.dcp") == EXIT_RUNTIME
    assert run("calibrate", "/nonexistent/v.jsonl") == EXIT_RUNTIME


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run("policy", "check")  # missing positional
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == EXIT_USAGE


def test_fmt_is_idempotent(tmp_path, capsys):
    assert run("policy", "fmt", COBIX_DCP) == EXIT_OK
    once = capsys.readouterr().out
    f = tmp_path / "p.dcp"
    f.write_text(once)
    assert run("policy", "fmt", str(f), "--write") == EXIT_OK
    assert f.read_text() == once  # shipped file is already canonical


def test_build_with_tau(tmp_path, capsys):
    out = tmp_path / "built.dcp"
    assert run("policy", "build", COBIX_DCP, "--rule", "auto_normal",
               "--tau", "0.97", "--out", str(out)) == EXIT_OK
    assert "ai.confidence >= 0.97" in out.read_text()


def test_build_from_threshold_json(tmp_path):
    result = tmp_path / "threshold.json"
    result.write_text(json.dumps({"feasible": True, "tau": 0.92}))
    out = tmp_path / "built.dcp"
    assert run("policy", "build", COBIX_DCP, "--rule", "auto_normal",
               "--threshold-json", str(result), "--out", str(out)) == EXIT_OK
    assert "ai.confidence >= 0.92" in out.read_text()

    result.write_text(json.dumps({"feasible": False, "tau": None}))
    assert run("policy", "build", COBIX_DCP, "--rule", "auto_normal",
               "--threshold-json", str(result), "--out", str(out)) == EXIT_DIAGNOSTICS


# ---------------------------------------------------------------------------
# calibrate / threshold
# ---------------------------------------------------------------------------


def test_calibrate_writes_report(tmp_path):
    validation = tmp_path / "val.jsonl"
    lines = [json.dumps({"raw_score": 0.1 + 0.2 * i, "correct": i >= 2}) for i in range(5)]
    validation.write_text("\n".join(lines) + "\n")
    out = tmp_path / "cal.json"
    assert run("calibrate", str(validation), "--out", str(out)) == EXIT_OK
    report = json.loads(out.read_text())
    assert "breakpoints" in report["calibration_map"]
    assert report["reliability_after"]["ece"] <= report["reliability_before"]["ece"]


def test_calibrate_empty_input(tmp_path, capsys):
    empty = tmp_path / "val.jsonl"
    empty.write_text("")
    assert run("calibrate", str(empty)) == EXIT_DIAGNOSTICS
    assert "empty" in capsys.readouterr().err


def threshold_fixture(tmp_path):
    confs = [0.55, 0.61, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99]
    wrong = [True, True] + [False] * 8
    path = tmp_path / "val.jsonl"
    path.write_text(
        "\n".join(
            json.dumps(
                {
                    "predicted_class": "normal",
                    "confidence": c,
                    "true_label": "neoplastic_urgent" if w else "normal",
                }
            )
            for c, w in zip(confs, wrong)
        )
        + "\n"
    )
    return path


def test_threshold_feasible(tmp_path, capsys):
    path = threshold_fixture(tmp_path)
    assert run("threshold", str(path), "--class", "normal", "--target-error", "0",
               "--method", "point_estimate") == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["feasible"] is True
    assert result["tau"] == pytest.approx(0.92)
    assert result["coverage"] == pytest.approx(0.8)


def test_threshold_infeasible(tmp_path, capsys):
    path = tmp_path / "val.jsonl"
    path.write_text(json.dumps({"predicted_class": "normal", "confidence": 0.9,
                                "true_label": "neoplastic_urgent"}) + "\n")
    assert run("threshold", str(path), "--class", "normal",
               "--target-error", "0.01") == EXIT_DIAGNOSTICS
    result = json.loads(capsys.readouterr().out)
    assert result["feasible"] is False


# ---------------------------------------------------------------------------
# simulate / compare
# ---------------------------------------------------------------------------


def test_simulate_outputs_and_determinism(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ("simulate", CRITICALITY, "--modality", "autonomous_decision_support,codoc",
            "--n", "400", "--replications", "2")
    assert run(*args, "--out", str(out1)) == EXIT_OK
    assert run(*args, "--out", str(out2)) == EXIT_OK
    capsys.readouterr()
    names = ["report.json", "summary.txt", "audit_unaided.jsonl",
             "audit_autonomous_decision_support.jsonl", "audit_codoc.jsonl"]
    for name in names:
        assert (out1 / name).exists(), name
        assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name
    report = json.loads((out1 / "report.json").read_text())
    assert set(report["modalities"]) == {"unaided", "autonomous_decision_support", "codoc"}
    assert report["replications"] == 2


def test_simulate_seed_override_changes_results(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ("simulate", CRITICALITY, "--n", "400", "--replications", "1")
    assert run(*args, "--out", str(out1), "--seed", "1") == EXIT_OK
    assert run(*args, "--out", str(out2), "--seed", "2") == EXIT_OK
    capsys.readouterr()
    assert (out1 / "report.json").read_text() != (out2 / "report.json").read_text()


def test_simulate_infeasible_threshold_exit_code(tmp_path, capsys):
    scenario = json.loads((SCENARIOS / "cobix.json").read_text())
    scenario["auto_thresholds"][0]["target_error"] = 1e-9
    for key in ("policy_path", "schema_path"):
        scenario[key] = str((SCENARIOS / scenario[key]).resolve())
    path = tmp_path / "impossible.json"
    path.write_text(json.dumps(scenario))
    assert run("simulate", str(path), "--n", "100", "--replications", "1",
               "--out", str(tmp_path / "out")) == EXIT_DIAGNOSTICS
    result = json.loads(capsys.readouterr().out)
    assert result["feasible"] is False


def test_compare_outputs_and_baseline_self_delta(tmp_path, capsys):
    out = tmp_path / "cmp"
    assert run("compare", CRITICALITY, "--baseline", "unaided",
               "--against", "unaided,codoc", "--n", "400", "--replications", "2",
               "--out", str(out)) == EXIT_OK
    capsys.readouterr()
    rows = (out / "compare.csv").read_text().splitlines()
    assert rows[0].startswith("modality,delta_sensitivity_mean")
    self_row = rows[1].split(",")
    assert self_row[0] == "unaided"
    assert float(self_row[1]) == 0.0
    assert (out / "compare.txt").exists()


def test_compare_is_deterministic(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ("compare", CRITICALITY, "--against", "codoc", "--n", "400",
            "--replications", "2")
    assert run(*args, "--out", str(out1)) == EXIT_OK
    assert run(*args, "--out", str(out2)) == EXIT_OK
    capsys.readouterr()
    assert filecmp.cmp(out1 / "compare.csv", out2 / "compare.csv", shallow=False)
    assert filecmp.cmp(out1 / "compare.txt", out2 / "compare.txt", shallow=False)


def test_unknown_modality_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run("simulate", CRITICALITY, "--modality", "psychic")
    assert exc.value.code == EXIT_USAGE
