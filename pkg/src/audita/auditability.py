"""Thresholded auditability predicate, audit verdicts and Auditability Cards."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

from .metrics import GapBurden, GBUnit, MetricsBundle, format_ratio, parse_ratio, recovered_chain, segment_observed, segments
from .model import AuditRecord, Execution
from .policy import PolicyVerdict, StructuralPolicy, evaluate

__all__ = [
    "AuditabilityCard",
    "AuditabilityReport",
    "CardSection",
    "DIMENSIONS",
    "DimensionCheck",
    "IncompleteDescriptorError",
    "SegmentDescriptor",
    "ThresholdVector",
    "UnitMismatchError",
    "Verdict",
    "assemble_verdict",
    "generate_card",
    "is_auditable",
]

# metric -> dimension it thresholds
DIMENSIONS = {
    "acr": "action_recoverability",
    "rf": "action_recoverability",
    "lpc": "lifecycle_coverage",
    "gb": "lifecycle_coverage",
    "spdr": "policy_checkability",
    "ac": "responsibility_attribution",
    "is": "evidence_integrity",
}


class UnitMismatchError(ValueError):
    pass


class IncompleteDescriptorError(ValueError):
    def __init__(self, missing: list[str]):
        super().__init__(f"descriptor is missing sections: {', '.join(missing)}")
        self.missing = missing


@dataclass(frozen=True)
class ThresholdVector:
    tau_acr: Fraction
    tau_rf: Fraction
    tau_lpc: Fraction
    tau_gb: GapBurden
    tau_spdr: Fraction
    tau_ac: Fraction
    tau_is: int

    @classmethod
    def default(cls, gb_unit: GBUnit = GBUnit.STEP_COUNT) -> "ThresholdVector":
        """Illustrative profile only; real deployments must calibrate their own."""
        nine = Fraction(9, 10)
        return cls(nine, nine, nine, GapBurden(0, GBUnit(gb_unit)), nine, nine, 2)

    @classmethod
    def zero(cls, gb_unit: GBUnit = GBUnit.STEP_COUNT) -> "ThresholdVector":
        z = Fraction(0)
        return cls(z, z, z, GapBurden(0, GBUnit(gb_unit)), z, z, 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tau_acr": format_ratio(self.tau_acr),
            "tau_rf": format_ratio(self.tau_rf),
            "tau_lpc": format_ratio(self.tau_lpc),
            "tau_gb": self.tau_gb.to_dict(),
            "tau_spdr": format_ratio(self.tau_spdr),
            "tau_ac": format_ratio(self.tau_ac),
            "tau_is": self.tau_is,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ThresholdVector":
        tau_is = d["tau_is"]
        if not isinstance(tau_is, int) or isinstance(tau_is, bool) or not 0 <= tau_is <= 3:
            raise ValueError(f"tau_is must be an integer 0..3, got {tau_is!r}")
        ratios = {}
        for k in ("tau_acr", "tau_rf", "tau_lpc", "tau_spdr", "tau_ac"):
            v = parse_ratio(d[k])
            if not 0 <= v <= 1:
                raise ValueError(f"{k} must lie in [0, 1], got {d[k]!r}")
            ratios[k] = v
        return cls(tau_gb=GapBurden.from_dict(d["tau_gb"]), tau_is=tau_is, **ratios)


@dataclass(frozen=True)
class DimensionCheck:
    metric: str
    dimension: str
    value: str
    threshold: str
    passed: bool


@dataclass(frozen=True)
class AuditabilityReport:
    auditable: bool
    per_dimension: Mapping[str, DimensionCheck]
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def failed_dimensions(self) -> list[str]:
        return sorted({c.dimension for c in self.per_dimension.values() if not c.passed})

    def failed_metrics(self) -> list[str]:
        return [m for m, c in self.per_dimension.items() if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "auditable": self.auditable,
            "per_dimension": {
                m: {"dimension": c.dimension, "value": c.value, "threshold": c.threshold, "pass": c.passed}
                for m, c in self.per_dimension.items()
            },
            "failed_dimensions": self.failed_dimensions(),
            "diagnostics": dict(self.diagnostics),
        }


def is_auditable(bundle: MetricsBundle, thresholds: ThresholdVector) -> AuditabilityReport:
    """Check every thresholded metric; ADL, ACD and VC are reported only."""
    if bundle.gb.unit is not thresholds.tau_gb.unit:
        raise UnitMismatchError(
            f"gap burden in {bundle.gb.unit.value} but threshold in {thresholds.tau_gb.unit.value}")
    t = thresholds
    checks = {
        "acr": (format_ratio(bundle.acr), format_ratio(t.tau_acr), bundle.acr >= t.tau_acr),
        "rf": (format_ratio(bundle.rf), format_ratio(t.tau_rf), bundle.rf >= t.tau_rf),
        "lpc": (format_ratio(bundle.lpc), format_ratio(t.tau_lpc), bundle.lpc >= t.tau_lpc),
        "gb": (str(bundle.gb.value), str(t.tau_gb.value), bundle.gb.value <= t.tau_gb.value),
        "spdr": (format_ratio(bundle.spdr), format_ratio(t.tau_spdr), bundle.spdr >= t.tau_spdr),
        "ac": (format_ratio(bundle.ac), format_ratio(t.tau_ac), bundle.ac >= t.tau_ac),
        "is": (str(bundle.is_level), str(t.tau_is), bundle.is_level >= t.tau_is),
    }
    per = {m: DimensionCheck(m, DIMENSIONS[m], v, th, ok) for m, (v, th, ok) in checks.items()}
    diagnostics = {
        "adl_micros": dict(sorted(bundle.adl.items())),
        "acd": format_ratio(bundle.acd),
        "vc_micros": bundle.vc,
    }
    return AuditabilityReport(all(c.passed for c in per.values()), per, diagnostics)


@dataclass(frozen=True)
class SegmentDescriptor:
    phase: str
    first_step: int
    last_step: int
    observed: bool

    def to_dict(self) -> dict[str, Any]:
        return {"phase": self.phase, "first_step": self.first_step, "last_step": self.last_step,
                "observed": self.observed}


@dataclass(frozen=True)
class Verdict:
    """An audit verdict: action, context, outcome, responsibility, integrity."""

    policy_id: str
    action: int | None
    context: tuple[SegmentDescriptor, ...]
    verdict: PolicyVerdict
    responsibility: tuple[str, ...]
    integrity: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy_id": self.policy_id,
            "action": self.action,
            "context": [c.to_dict() for c in self.context],
            "verdict": self.verdict.value,
            "responsibility": list(self.responsibility),
            "integrity": self.integrity,
        }


def _context(execution: Execution, record: AuditRecord, step_id: int) -> tuple[SegmentDescriptor, ...]:
    segs = segments(execution)
    where = next(i for i, seg in enumerate(segs) if any(s.step_id == step_id for s in seg))
    out = []
    for i in range(max(0, where - 1), min(len(segs), where + 2)):
        seg = segs[i]
        seen = segment_observed(seg, record)
        # the segment holding the action is always reported; neighbours only when observed
        if i == where or seen:
            out.append(SegmentDescriptor(execution.phase_of[seg[0].step_id], seg[0].step_id, seg[-1].step_id, seen))
    return tuple(out)


def assemble_verdict(policy: StructuralPolicy, execution: Execution, record: AuditRecord) -> Verdict | None:
    """Build the verdict tuple for a decidable policy; ``None`` when undecidable.

    A vacuously satisfied policy (no evidence steps) yields a verdict with no
    action, empty context and empty responsibility.
    """
    outcome = evaluate(policy, record)
    if not outcome.decidable:
        return None
    if outcome.verdict is PolicyVerdict.VIOLATE:
        action = outcome.violating_step
    else:
        action = outcome.trigger_steps[0] if outcome.trigger_steps else None
    if action is None:
        return Verdict(policy.policy_id, None, (), outcome.verdict, (), record.integrity.summary())
    return Verdict(
        policy.policy_id,
        action,
        _context(execution, record, action),
        outcome.verdict,
        recovered_chain(action, execution, record),
        record.integrity.summary(),
    )


QUESTIONS = (
    ("q1_actions", "Q1: Actions", "What policy-relevant actions does the system record?"),
    ("q2_phases", "Q2: Phases", "Which execution phases are covered?"),
    ("q3_policies", "Q3: Policies", "What policies can be mechanically checked?"),
    ("q4_attribution", "Q4: Attribution", "What responsibility chain is available?"),
    ("q5_integrity", "Q5: Integrity", "What protects the record from modification?"),
    ("q6_missing_logs", "Q6: Missing logs", "What happens when logs are missing or detached?"),
)

_INTEGRITY_TEXT = {
    0: "Level 0: none",
    1: "Level 1: append-only",
    2: "Level 2: hash-chained",
    3: "Level 3: signed, hash-chained",
}


@dataclass(frozen=True)
class CardSection:
    key: str
    question: str
    disclose: str
    answer: str
    metrics: Mapping[str, str]

    def to_dict(self) -> dict[str, Any]:
        return {"question": self.question, "disclose": self.disclose, "answer": self.answer,
                "metrics": dict(self.metrics)}


@dataclass(frozen=True)
class AuditabilityCard:
    sections: tuple[CardSection, ...]
    auditable: bool

    def __post_init__(self) -> None:
        keys = [s.key for s in self.sections]
        if keys != [q[0] for q in QUESTIONS]:
            raise ValueError(f"card needs sections {[q[0] for q in QUESTIONS]}, got {keys}")
        for s in self.sections:
            if not s.answer.strip():
                raise ValueError(f"section {s.key} is empty")

    def __getattr__(self, name: str) -> CardSection:
        for s in self.__dict__.get("sections", ()):
            if s.key == name:
                return s
        raise AttributeError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"auditable": self.auditable, "sections": {s.key: s.to_dict() for s in self.sections}}

    def to_markdown(self) -> str:
        lines = [
            "| Question | What to disclose | This system |",
            "|---|---|---|",
        ]
        for s in self.sections:
            metrics = "; ".join(f"{k}={v}" for k, v in s.metrics.items())
            answer = s.answer.replace("|", "\\|").replace("\n", " ")
            lines.append(f"| {s.question} | {s.disclose} | {answer} ({metrics}) |")
        lines.append("")
        lines.append(f"Auditable under the supplied thresholds: {'yes' if self.auditable else 'no'}")
        return "\n".join(lines) + "\n"


def _mark(report: AuditabilityReport, metric: str, value: str) -> str:
    return f"{value} [{'pass' if report.per_dimension[metric].passed else 'fail'}]"


def generate_card(descriptor: Mapping[str, str], bundle: MetricsBundle, thresholds: ThresholdVector,
                  verification: Any = None) -> AuditabilityCard:
    """Merge a system's free-text answers with the computed metrics.

    ``descriptor`` maps ``q1`` .. ``q6`` (or the full section keys such as
    ``q1_actions``) to the system's answers. ``verification`` is an optional
    :class:`~audita.evidence.VerificationReport` used for the missing-logs
    section.
    """
    answers: dict[str, str] = {}
    missing = []
    for key, _, _ in QUESTIONS:
        short = key.split("_", 1)[0]
        text = descriptor.get(short, descriptor.get(key))
        if not isinstance(text, str) or not text.strip():
            missing.append(short)
        else:
            answers[key] = text.strip()
    if missing:
        raise IncompleteDescriptorError(missing)

    report = is_auditable(bundle, thresholds)
    adl = ", ".join(f"{k}={v}us" for k, v in sorted(bundle.adl.items())) or "undefined"
    unattested = bundle.unattested_entries
    if verification is not None:
        unattested = len(verification.unattested)
    bound = (
        f"{unattested} entries predate sealing and are unattested; "
        if unattested else "no unattested entries; "
    ) + "fields absent from every entry cannot be recovered post hoc"
    level_text = _INTEGRITY_TEXT[bundle.is_level]

    metrics = {
        "q1_actions": {"ACR": _mark(report, "acr", format_ratio(bundle.acr)),
                       "RF": _mark(report, "rf", format_ratio(bundle.rf))},
        "q2_phases": {"LPC": _mark(report, "lpc", format_ratio(bundle.lpc)),
                      "GB": _mark(report, "gb", f"{bundle.gb.value} {bundle.gb.unit.value}")},
        "q3_policies": {"SPDR": _mark(report, "spdr", format_ratio(bundle.spdr)), "ADL": adl},
        "q4_attribution": {"AC": _mark(report, "ac", format_ratio(bundle.ac)),
                           "ACD": format_ratio(bundle.acd)},
        "q5_integrity": {"IS": _mark(report, "is", str(bundle.is_level)), "VC": f"{bundle.vc}us"},
        "q6_missing_logs": {"unattested_entries": str(unattested), "recovery_bound": bound},
    }
    sections = []
    for key, question, disclose in QUESTIONS:
        answer = answers[key]
        if key == "q5_integrity":
            answer = f"{level_text}. {answer}"
        sections.append(CardSection(key, question, disclose, answer, metrics[key]))
    return AuditabilityCard(tuple(sections), report.auditable)
