"""Command-line entry point.

Subcommands: `policy check|fmt|build`, `calibrate`, `threshold`, `simulate`,
`compare`. Exit codes: 0 success, 1 diagnostics or infeasible result, 2 usage
error, 3 runtime failure (unreadable files, internal contract violations).
Machine outputs are JSON/CSV with sorted keys and are byte-identical across
repeated runs with the same inputs and seed; files are written atomically
(temp file then rename). ADSIM_OUT_DIR sets the default output directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .calibration import (
    CalibrationMap,
    fit_pav,
    reliability,
    select_threshold_from_scores,
)
from .dsl import ParseError, format_policy, parse_policy, set_confidence_literal, validate_policy
from .errors import AdsimError, AuditIOError, ContractViolation
from .harness import (
    InfeasibleThresholdError,
    ModalityResult,
    load_scenario,
    outcome_to_audit,
    prepare_replication,
    run_experiment,
)
from .engine import apply_modality
from .model import DiagnosisClass, FieldSchema
from .router import ModalityKind

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

ALL_MODALITIES = tuple(k.value for k in ModalityKind)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            records.append(json.loads(line))
    return records


def _out_dir(arg: Optional[str]) -> Path:
    if arg is not None:
        return Path(arg)
    return Path(os.environ.get("ADSIM_OUT_DIR", "."))


# ---------------------------------------------------------------------------
# policy subcommands
# ---------------------------------------------------------------------------


def cmd_policy_check(args) -> int:
    source = Path(args.policy).read_text(encoding="utf-8")
    try:
        policy = parse_policy(source)
    except ParseError as exc:
        print(f"{args.policy}:{exc.line}:{exc.col}: parse error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    schema = FieldSchema.load(args.schema) if args.schema else FieldSchema()
    diagnostics = validate_policy(policy, schema, safety_profile=args.safety_profile)
    for diag in diagnostics:
        print(f"{args.policy}: {diag.render()}", file=sys.stderr)
    if diagnostics:
        return EXIT_DIAGNOSTICS
    print(f"{args.policy}: ok ({len(policy.rules)} rules)")
    return EXIT_OK


def cmd_policy_fmt(args) -> int:
    source = Path(args.policy).read_text(encoding="utf-8")
    try:
        policy = parse_policy(source)
    except ParseError as exc:
        print(f"{args.policy}:{exc.line}:{exc.col}: parse error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    formatted = format_policy(policy)
    if args.write:
        _write_atomic(Path(args.policy), formatted)
    else:
        sys.stdout.write(formatted)
    return EXIT_OK


def cmd_policy_build(args) -> int:
    source = Path(args.template).read_text(encoding="utf-8")
    try:
        policy = parse_policy(source)
    except ParseError as exc:
        print(f"{args.template}:{exc.line}:{exc.col}: parse error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    if args.tau is not None:
        tau = float(args.tau)
    else:
        result = json.loads(Path(args.threshold_json).read_text(encoding="utf-8"))
        if not result.get("feasible"):
            print("threshold result is infeasible; refusing to build", file=sys.stderr)
            return EXIT_DIAGNOSTICS
        tau = float(result["tau"])
    policy = set_confidence_literal(policy, args.rule, tau)
    formatted = format_policy(policy)
    if args.out:
        _write_atomic(Path(args.out), formatted)
        print(f"wrote {args.out} (rule {args.rule}, tau {tau})")
    else:
        sys.stdout.write(formatted)
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate / threshold
# ---------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    records = _read_jsonl(Path(args.validation))
    if not records:
        print("empty validation input", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    scores = np.array([float(r["raw_score"]) for r in records])
    correct = np.array([bool(r["correct"]) for r in records])
    cal = fit_pav(scores, correct)
    before = reliability(scores, correct, n_bins=args.bins)
    after = reliability(cal.apply_array(scores), correct, n_bins=args.bins)
    report = {
        "calibration_map": json.loads(cal.to_json()),
        "reliability_before": before.to_dict(),
        "reliability_after": after.to_dict(),
        "n": int(scores.size),
    }
    text = _json_dumps(report)
    if args.out:
        _write_atomic(Path(args.out), text)
        print(f"wrote {args.out} (ECE {before.ece:.4f} -> {after.ece:.4f})")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_threshold(args) -> int:
    records = _read_jsonl(Path(args.validation))
    target = DiagnosisClass.from_text(getattr(args, "class"))
    confs, wrong = [], []
    for r in records:
        if r["predicted_class"] != target.value:
            continue
        confs.append(float(r["confidence"]))
        wrong.append(r["predicted_class"] != r["true_label"])
    result = select_threshold_from_scores(
        confs, wrong, target, args.target_error, args.method
    )
    sys.stdout.write(_json_dumps(result.to_dict()))
    return EXIT_OK if result.feasible else EXIT_DIAGNOSTICS


# ---------------------------------------------------------------------------
# simulate / compare
# ---------------------------------------------------------------------------


def _load_scenario_with_seed(args):
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, base_seed=int(args.seed))
    return scenario


def _parse_modalities(text: str) -> list[str]:
    modalities = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in modalities if m not in ALL_MODALITIES]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown modalities {unknown}; choose from {list(ALL_MODALITIES)}"
        )
    return modalities


def cmd_simulate(args) -> int:
    scenario = _load_scenario_with_seed(args)
    modalities = args.modality
    if "unaided" not in modalities:
        modalities = ["unaided"] + modalities
    n = args.n if args.n is not None else scenario.population_size
    reps = args.replications if args.replications is not None else scenario.replications
    result = run_experiment(scenario, modalities, n=n, replications=reps)

    out = _out_dir(args.out)
    _write_atomic(out / "report.json", _json_dumps(result.to_dict()))

    # audit trail for the first replication of each modality
    setup = prepare_replication(scenario, 0, n)
    for kind in modalities:
        modality = scenario.build_modality(kind, policy=setup.policy)
        outcome = apply_modality(
            modality, setup.pop, setup.ai_batch, setup.clin_batch,
            scenario.clinician_profile, scenario.interaction,
        )
        audit_path = out / f"audit_{kind}.jsonl"
        if audit_path.exists():
            audit_path.unlink()  # audit logs are append-only; start a fresh file
        policy = setup.policy if kind == "autonomous_decision_support" else None
        outcome_to_audit(outcome, setup.pop, kind, policy, audit_path,
                         label=f"{scenario.name}-r0")

    lines = [f"scenario: {scenario.name}  n={n}  replications={reps}"]
    for kind, res in result.per_modality.items():
        summary = res.summary()
        lines.append(f"\n[{kind}]")
        for field_name, stat in summary.items():
            mean, ci = stat["mean"], stat["ci95"]
            if mean is None:
                lines.append(f"  {field_name}: n/a")
            elif ci is None:
                lines.append(f"  {field_name}: {mean:.4f}")
            else:
                lines.append(f"  {field_name}: {mean:.4f} +/- {ci:.4f}")
    text = "\n".join(lines) + "\n"
    _write_atomic(out / "summary.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = _load_scenario_with_seed(args)
    baseline = args.baseline
    against = args.against
    modalities = [baseline] + [m for m in against if m != baseline]
    n = args.n if args.n is not None else scenario.population_size
    reps = args.replications if args.replications is not None else scenario.replications
    result = run_experiment(scenario, modalities, n=n, replications=reps)

    base_reports = result.per_modality[baseline].reports
    delta_fields = ("sensitivity", "specificity", "time_reduction")
    rows = []
    for kind in against:
        if kind == baseline:
            deltas = {f: (0.0, 0.0 if reps > 1 else None) for f in delta_fields}
        else:
            reports = result.per_modality[kind].reports
            deltas = {}
            for f in delta_fields:
                per_rep = [
                    getattr(r, f) - getattr(b, f)
                    for r, b in zip(reports, base_reports)
                    if getattr(r, f) is not None and getattr(b, f) is not None
                ]
                if not per_rep:
                    deltas[f] = (None, None)
                    continue
                mean = float(np.mean(per_rep))
                ci = (
                    1.96 * float(np.std(per_rep, ddof=1)) / float(np.sqrt(len(per_rep)))
                    if len(per_rep) > 1
                    else None
                )
                deltas[f] = (mean, ci)
        rows.append((kind, deltas))

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["modality"]
    for f in delta_fields:
        header += [f"delta_{f}_mean", f"delta_{f}_ci95"]
    writer.writerow(header)
    for kind, deltas in rows:
        row = [kind]
        for f in delta_fields:
            mean, ci = deltas[f]
            row.append("" if mean is None else f"{mean:.6f}")
            row.append("" if ci is None else f"{ci:.6f}")
        writer.writerow(row)
    csv_text = buf.getvalue()

    lines = [f"paired comparison vs {baseline} (scenario {scenario.name}, n={n}, reps={reps})"]
    for kind, deltas in rows:
        parts = []
        for f in delta_fields:
            mean, ci = deltas[f]
            if mean is None:
                parts.append(f"d{f}=n/a")
            elif ci is None:
                parts.append(f"d{f}={mean:+.4f}")
            else:
                parts.append(f"d{f}={mean:+.4f}+/-{ci:.4f}")
        lines.append(f"  {kind}: " + "  ".join(parts))
    text = "\n".join(lines) + "\n"

    out = _out_dir(args.out)
    _write_atomic(out / "compare.csv", csv_text)
    _write_atomic(out / "compare.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    policy = sub.add_parser("policy", help="policy file tooling")
    psub = policy.add_subparsers(dest="policy_command", required=True)

    check = psub.add_parser("check", help="parse and validate a policy")
    check.add_argument("policy")
    check.add_argument("--schema", help="field schema JSON")
    check.add_argument("--safety-profile", action="store_true", dest="safety_profile")
    check.set_defaults(func=cmd_policy_check)

    fmt = psub.add_parser("fmt", help="canonically format a policy")
    fmt.add_argument("policy")
    fmt.add_argument("--write", action="store_true", help="rewrite the file in place")
    fmt.set_defaults(func=cmd_policy_fmt)

    build = psub.add_parser("build", help="splice a selected threshold into a template")
    build.add_argument("template")
    build.add_argument("--rule", required=True, help="rule whose confidence literal to set")
    group = build.add_mutually_exclusive_group(required=True)
    group.add_argument("--tau", type=float)
    group.add_argument("--threshold-json", dest="threshold_json")
    build.add_argument("--out")
    build.set_defaults(func=cmd_policy_build)

    calibrate = sub.add_parser("calibrate", help="fit a calibration map from validation scores")
    calibrate.add_argument("validation", help="JSON Lines of {raw_score, correct}")
    calibrate.add_argument("--bins", type=int, default=10)
    calibrate.add_argument("--out")
    calibrate.set_defaults(func=cmd_calibrate)

    threshold = sub.add_parser("threshold", help="select a safety-constrained threshold")
    threshold.add_argument(
        "validation", help="JSON Lines of {predicted_class, confidence, true_label}"
    )
    threshold.add_argument("--class", required=True, help="target class, e.g. normal")
    threshold.add_argument("--target-error", dest="target_error", type=float, required=True)
    threshold.add_argument(
        "--method",
        default="binomial_upper_95",
        choices=("point_estimate", "binomial_upper_95"),
    )
    threshold.set_defaults(func=cmd_threshold)

    simulate = sub.add_parser("simulate", help="run a scenario and write reports + audit logs")
    simulate.add_argument("scenario")
    simulate.add_argument(
        "--modality", type=_parse_modalities, default=["autonomous_decision_support"],
        help="comma-separated modality list",
    )
    simulate.add_argument("--out", help="output directory (default: ADSIM_OUT_DIR or .)")
    simulate.add_argument("--seed", type=int, help="override the scenario base seed")
    simulate.add_argument("--n", type=int, help="override the scenario population size")
    simulate.add_argument("--replications", type=int)
    simulate.set_defaults(func=cmd_simulate)

    compare = sub.add_parser("compare", help="paired delta table against a baseline modality")
    compare.add_argument("scenario")
    compare.add_argument("--baseline", default="unaided", choices=ALL_MODALITIES)
    compare.add_argument("--against", type=_parse_modalities, required=True)
    compare.add_argument("--out", help="output directory (default: ADSIM_OUT_DIR or .)")
    compare.add_argument("--seed", type=int)
    compare.add_argument("--n", type=int)
    compare.add_argument("--replications", type=int)
    compare.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: cannot read {getattr(exc, 'filename', exc)}", file=sys.stderr)
        return EXIT_RUNTIME
    except InfeasibleThresholdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.stdout.write(_json_dumps(exc.result.to_dict()))
        return EXIT_DIAGNOSTICS
    except ParseError as exc:
        print(f"error: {exc} (line {exc.line}, col {exc.col})", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except (ContractViolation, AuditIOError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except AdsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
