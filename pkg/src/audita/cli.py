"""``audita`` command line.

Exit codes: 0 pass, 1 substantive failure, 2 input error, 3 validation
error, 4 unverifiable evidence.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, NoReturn, Sequence

from . import formats
from .auditability import IncompleteDescriptorError, ThresholdVector, UnitMismatchError, generate_card, is_auditable
from .canonical import canonical_dumps
from .evidence import EvidenceLog, dump_log, load_signing_key, verify
from .lab import DegradationKind, GenerationSpec, degrade, generate
from .metrics import GBUnit, MetricsBundle, MissingRequirementsError, measure
from .model import FieldRequirements, validate_execution
from .policy import MalformedPolicyError, PolicyVerdict, adl, evaluate

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_VALIDATION = 3
EXIT_UNVERIFIABLE = 4

KEYFILE_ENV = "AUDITA_KEYFILE"
_GB_UNITS = {"steps": GBUnit.STEP_COUNT, "micros": GBUnit.DURATION_MICROSECONDS}
_CARD_QUESTION = {
    "action_recoverability": "q1",
    "lifecycle_coverage": "q2",
    "policy_checkability": "q3",
    "responsibility_attribution": "q4",
    "evidence_integrity": "q5",
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise CliError(EXIT_INPUT, f"{self.prog}: {message}")


def _emit(doc: Any, table: list[tuple[str, str]] | None, fmt: str, out: str | None = None) -> None:
    text = canonical_dumps(doc) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    if fmt == "table" and table is not None:
        width = max((len(k) for k, _ in table), default=0)
        sys.stdout.write("".join(f"{k.ljust(width)}  {v}\n" for k, v in table))
    else:
        sys.stdout.write(text)


def _signing_key() -> Any:
    path = os.environ.get(KEYFILE_ENV)
    if not path:
        return None
    try:
        return load_signing_key(path)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"cannot load signing key {path}: {exc}") from exc


def _bundle(args: argparse.Namespace) -> MetricsBundle:
    if not args.trace or not args.record:
        raise CliError(EXIT_INPUT, "--trace and --record are required")
    execution = formats.load_trace(args.trace)
    record, log = formats.load_record(args.record)
    diags = validate_execution(execution)
    if diags:
        for d in diags:
            print(f"{args.trace}: {d.code}: {d.message}", file=sys.stderr)
        raise CliError(EXIT_VALIDATION, f"{len(diags)} validation diagnostics")
    policies = formats.load_policies(args.policies) if args.policies else []
    reqs = formats.load_requirements(args.requirements) if args.requirements else FieldRequirements.default()
    try:
        bundle = measure(execution, record, policies, reqs, _GB_UNITS[args.gb_unit], log=log)
    except MissingRequirementsError as exc:
        raise CliError(EXIT_INPUT, f"{args.requirements or 'default requirements'}: {exc}") from exc
    if args.no_vc:
        bundle = replace(bundle, vc=0)
    return bundle


def _thresholds(args: argparse.Namespace) -> ThresholdVector:
    if args.thresholds:
        return formats.load_thresholds(args.thresholds)
    return ThresholdVector.default(_GB_UNITS[args.gb_unit])


def cmd_metrics(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    _emit(bundle.to_dict(), bundle.table_rows(), args.format, args.out)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    bundle = _bundle(args)
    try:
        report = is_auditable(bundle, _thresholds(args))
    except UnitMismatchError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    rows = [
        (f"{m} ({c.dimension})", f"{c.value} vs {c.threshold}: {'pass' if c.passed else 'FAIL'}")
        for m, c in report.per_dimension.items()
    ]
    rows.append(("auditable", "yes" if report.auditable else "no"))
    _emit(report.to_dict(), rows, args.format, args.out)
    for dim in report.failed_dimensions():
        print(f"failed dimension: {dim} ({_CARD_QUESTION[dim]})", file=sys.stderr)
    return EXIT_OK if report.auditable else EXIT_FAIL


def cmd_verify(args: argparse.Namespace) -> int:
    if not args.record:
        raise CliError(EXIT_INPUT, "--record (evidence log) is required")
    log = formats.load_log(args.record)
    report = verify(log)
    if args.no_vc:
        report = replace(report, vc=0)
    rows = [
        ("status", report.status),
        ("level", str(report.level)),
        ("checked_entries", str(report.checked_entries)),
        ("first_bad_seq", "-" if report.first_bad_seq is None else str(report.first_bad_seq)),
        ("vc", f"{report.vc}us"),
        ("unattested", str(len(report.unattested))),
    ]
    _emit(report.to_dict(), rows, args.format, args.out)
    if report.ok is None:
        return EXIT_UNVERIFIABLE
    if not report.ok:
        print(f"tampering detected at seq {report.first_bad_seq}: {report.reason}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_card(args: argparse.Namespace) -> int:
    if not args.descriptor:
        raise CliError(EXIT_INPUT, "--descriptor is required")
    descriptor = formats.load_descriptor(args.descriptor)
    bundle = _bundle(args)
    try:
        card = generate_card(descriptor, bundle, _thresholds(args))
    except IncompleteDescriptorError as exc:
        raise CliError(EXIT_INPUT, f"{args.descriptor}: {exc}") from exc
    except UnitMismatchError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "card.json").write_text(canonical_dumps(card.to_dict()) + "\n", encoding="utf-8")
    (out / "card.md").write_text(card.to_markdown(), encoding="utf-8")
    if args.format == "table":
        sys.stdout.write(card.to_markdown())
    else:
        sys.stdout.write(canonical_dumps(card.to_dict()) + "\n")
    return EXIT_OK


def cmd_lab_gen(args: argparse.Namespace) -> int:
    spec = formats.load_generation_spec(args.spec) if args.spec else GenerationSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    execution, record = generate(spec)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    formats.dump_trace(execution, out / "trace.jsonl")
    formats.dump_record(record, out / "record.jsonl")
    written = ["trace.jsonl", "record.jsonl"]
    if args.level is not None:
        key = _signing_key() if args.level == 3 else None
        if args.level == 3 and key is None:
            raise CliError(EXIT_INPUT, f"level 3 needs a signing key; set {KEYFILE_ENV}")
        log = EvidenceLog.create(args.level, key)
        log.extend(record.entries)
        dump_log(log, out / "evidence.log")
        written.append("evidence.log")
    for name in written:
        print(out / name)
    return EXIT_OK


def cmd_lab_degrade(args: argparse.Namespace) -> int:
    if not args.record or not args.op or not args.out:
        raise CliError(EXIT_INPUT, "--record, --op and --out are required")
    op = formats.load_degradation_op(args.op)
    seed = args.seed or 0
    if op.kind is DegradationKind.TAMPER_BYTE:
        log = formats.load_log(args.record, _signing_key())
        try:
            dump_log(degrade(log, op, seed), args.out)
        except (ValueError, IndexError) as exc:
            raise CliError(EXIT_INPUT, str(exc)) from exc
        return EXIT_OK
    record, log = formats.load_record(args.record)
    degraded = degrade(record, op, seed)
    if log is None:
        formats.dump_record(degraded, args.out)
        return EXIT_OK
    # re-seal at the same level so the output is again a well-formed log
    key = _signing_key() if log.level == 3 else None
    if log.level == 3 and key is None:
        raise CliError(EXIT_INPUT, f"re-sealing a level-3 log needs a signing key; set {KEYFILE_ENV}")
    rebuilt = EvidenceLog.create(log.level, key)
    rebuilt.extend(degraded.entries)
    dump_log(rebuilt, args.out)
    return EXIT_OK


def cmd_policy_eval(args: argparse.Namespace) -> int:
    if not args.policies or not args.record:
        raise CliError(EXIT_INPUT, "--policies and --record are required")
    policies = formats.load_policies(args.policies)
    record, _ = formats.load_record(args.record)
    execution = formats.load_trace(args.trace) if args.trace else None
    doc = {}
    rows = []
    violated = False
    for p in policies:
        outcome = evaluate(p, record)
        entry = outcome.to_dict()
        if execution is not None:
            entry["adl_micros"] = adl(p, execution, record)
        doc[p.policy_id] = entry
        violated |= outcome.verdict is PolicyVerdict.VIOLATE
        detail = ""
        if outcome.verdict is PolicyVerdict.UNDECIDABLE:
            detail = f" missing {', '.join(sorted(outcome.missing_fields))}"
        elif outcome.violating_step is not None:
            detail = f" at step {outcome.violating_step}"
        rows.append((p.policy_id, outcome.verdict.value + detail))
    _emit({"outcomes": doc}, rows, args.format, args.out)
    return EXIT_FAIL if violated else EXIT_OK


def _common(p: argparse.ArgumentParser, metrics_inputs: bool = True) -> None:
    if metrics_inputs:
        p.add_argument("--trace")
        p.add_argument("--record")
        p.add_argument("--policies")
        p.add_argument("--requirements")
        p.add_argument("--thresholds")
        p.add_argument("--gb-unit", choices=sorted(_GB_UNITS), default="steps")
    p.add_argument("--format", choices=["json", "table"], default="json")
    p.add_argument("--out")
    p.add_argument("--no-vc", action="store_true", help="report VC as 0 for reproducible output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="audita", description="Agent auditability toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("metrics", help="compute the metric bundle")
    _common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("check", help="evaluate the auditability predicate")
    _common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("verify", help="verify an evidence log")
    p.add_argument("--record", help="evidence log path")
    _common(p, metrics_inputs=False)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("card", help="generate an Auditability Card")
    _common(p)
    p.add_argument("--descriptor")
    p.set_defaults(func=cmd_card)

    lab = sub.add_parser("lab", help="synthetic traces and degradations")
    lab_sub = lab.add_subparsers(dest="lab_command", required=True, parser_class=_Parser)
    p = lab_sub.add_parser("gen")
    p.add_argument("--spec")
    p.add_argument("--seed", type=int)
    p.add_argument("--level", type=int, choices=[0, 1, 2, 3])
    p.add_argument("--out")
    p.set_defaults(func=cmd_lab_gen)
    p = lab_sub.add_parser("degrade")
    p.add_argument("--record")
    p.add_argument("--op")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lab_degrade)

    pol = sub.add_parser("policy", help="policy evaluation")
    pol_sub = pol.add_subparsers(dest="policy_command", required=True, parser_class=_Parser)
    p = pol_sub.add_parser("eval")
    p.add_argument("--policies")
    p.add_argument("--record")
    p.add_argument("--trace")
    p.add_argument("--format", choices=["json", "table"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_policy_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except (formats.InputError, MalformedPolicyError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
