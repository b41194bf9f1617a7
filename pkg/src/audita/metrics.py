"""Trace-level auditability metrics.

All ratios are exact :class:`fractions.Fraction` values; :func:`format_ratio`
renders them with six fractional digits for display and serialization.

Edge-case conventions:

=====================================  ===========================
condition                              values
=====================================  ===========================
no policy-relevant steps               ACR = RF = AC = 1, ACD = 0
relevant steps exist, none covered     RF = 0
no lifecycle segments                  LPC = 1, GB = 0
=====================================  ===========================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .model import (
    CHAIN_FIELD,
    PHASE_FIELD,
    AuditRecord,
    Execution,
    FieldRequirements,
    Step,
    recovered_fields,
    recovered_observations,
)

__all__ = [
    "GapBurden",
    "GBUnit",
    "MetricsBundle",
    "MissingRequirementsError",
    "ac",
    "acd",
    "acr",
    "recovered_chain",
    "format_ratio",
    "gb",
    "lpc",
    "measure",
    "parse_ratio",
    "rf",
    "segment_observed",
    "segments",
]

ONE = Fraction(1)
ZERO = Fraction(0)


class GBUnit(str, Enum):
    STEP_COUNT = "step_count"
    DURATION_MICROSECONDS = "duration_microseconds"


@dataclass(frozen=True, order=True)
class GapBurden:
    value: int
    unit: GBUnit = GBUnit.STEP_COUNT

    def to_dict(self) -> dict[str, Any]:
        return {"value": self.value, "unit": self.unit.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GapBurden":
        return cls(int(d["value"]), GBUnit(d["unit"]))


class MissingRequirementsError(KeyError):
    """An action type among the relevant steps has no field requirements."""

    def __init__(self, action_type: str):
        super().__init__(action_type)
        self.action_type = action_type

    def __str__(self) -> str:
        return f"no field requirements for action type {self.action_type!r}"


def format_ratio(value: Fraction | int) -> str:
    """Render an exact ratio as a decimal with six fractional digits."""
    q = Decimal(Fraction(value).numerator) / Decimal(Fraction(value).denominator)
    return str(q.quantize(Decimal("0.000001"), rounding=ROUND_HALF_EVEN))


def parse_ratio(text: str | int) -> Fraction:
    """Parse ``"0.9"``, ``"3/4"`` or an integer into an exact fraction."""
    if isinstance(text, bool):
        raise ValueError("boolean is not a ratio")
    return Fraction(text)


def _covered(step: Step, record: AuditRecord) -> bool:
    return bool(recovered_fields(step.step_id, record))


def acr(execution: Execution, record: AuditRecord) -> Fraction:
    """Action coverage rate: share of relevant steps with any recovered field."""
    rel = execution.relevant_steps
    if not rel:
        return ONE
    return Fraction(sum(1 for s in rel if _covered(s, record)), len(rel))


def rf(execution: Execution, record: AuditRecord, reqs: FieldRequirements | None = None) -> Fraction:
    """Record fidelity: mean share of required fields recovered per covered step."""
    reqs = reqs or FieldRequirements.default()
    rel = execution.relevant_steps
    for s in rel:
        if s.action_type not in reqs:
            raise MissingRequirementsError(s.action_type.value)
    if not rel:
        return ONE
    total = ZERO
    n_cov = 0
    for s in rel:
        got = recovered_fields(s.step_id, record)
        if not got:
            continue
        need = reqs[s.action_type]
        total += Fraction(len(need & got), len(need))
        n_cov += 1
    if n_cov == 0:
        return ZERO
    return total / n_cov


def segments(execution: Execution) -> list[tuple[Step, ...]]:
    """Maximal runs of consecutive steps sharing a phase label."""
    out: list[list[Step]] = []
    last_phase = object()
    for step in execution.steps:
        phase = execution.phase_of[step.step_id]
        if out and phase == last_phase:
            out[-1].append(step)
        else:
            out.append([step])
        last_phase = phase
    return [tuple(seg) for seg in out]


def segment_observed(segment: Sequence[Step], record: AuditRecord) -> bool:
    """A segment counts as observed when some step's phase label was recovered."""
    return any(PHASE_FIELD in recovered_fields(s.step_id, record) for s in segment)


def _segment_size(segment: Sequence[Step], unit: GBUnit) -> int:
    if unit is GBUnit.STEP_COUNT:
        return len(segment)
    # inclusive microsecond span so a single-step segment still occupies one tick
    return segment[-1].timestamp - segment[0].timestamp + 1


def lpc(execution: Execution, record: AuditRecord) -> Fraction:
    """Lifecycle phase coverage: share of segments observed."""
    segs = segments(execution)
    if not segs:
        return ONE
    return Fraction(sum(1 for seg in segs if segment_observed(seg, record)), len(segs))


def gb(execution: Execution, record: AuditRecord, unit: GBUnit = GBUnit.STEP_COUNT) -> GapBurden:
    """Gap burden: total size of unobserved segments."""
    unit = GBUnit(unit)
    total = sum(_segment_size(seg, unit) for seg in segments(execution) if not segment_observed(seg, record))
    return GapBurden(total, unit)


def _matching_prefix(candidate: Any, truth: Sequence[str]) -> int:
    if not isinstance(candidate, (list, tuple)):
        return 0
    n = 0
    for got, want in zip(candidate, truth):
        if got != want:
            break
        n += 1
    return n


def recovered_chain(step_id: int, execution: Execution, record: AuditRecord) -> tuple[str, ...]:
    """Longest prefix of the true responsibility chain the record supports.

    Each preserved ``context.caller_chain`` value for the step is compared
    position by position with the ground-truth chain; the longest agreeing
    leading run across all observations wins.
    """
    truth = execution.responsibility_of.get(step_id, ())
    best = 0
    for value in recovered_observations(step_id, CHAIN_FIELD, record):
        best = max(best, _matching_prefix(value, truth))
    return tuple(truth[:best])


def ac(execution: Execution, record: AuditRecord) -> Fraction:
    """Attribution completeness: share of relevant steps with a full chain."""
    rel = execution.relevant_steps
    if not rel:
        return ONE
    full = sum(
        1 for s in rel
        if len(recovered_chain(s.step_id, execution, record)) == len(execution.responsibility_of.get(s.step_id, ()))
    )
    return Fraction(full, len(rel))


def acd(execution: Execution, record: AuditRecord) -> Fraction:
    """Attribution chain depth: mean recovered prefix length over relevant steps."""
    rel = execution.relevant_steps
    if not rel:
        return ZERO
    return Fraction(sum(len(recovered_chain(s.step_id, execution, record)) for s in rel), len(rel))


@dataclass(frozen=True)
class MetricsBundle:
    """The ten metric values for one execution, record and policy set.

    ``adl`` maps each violated policy id to its detection latency in
    microseconds; ``vc`` is verification wall-clock time in microseconds.
    """

    acr: Fraction
    rf: Fraction
    lpc: Fraction
    gb: GapBurden
    spdr: Fraction
    ac: Fraction
    acd: Fraction
    is_level: int
    vc: int = 0
    adl: Mapping[str, int] = field(default_factory=dict)
    unattested_entries: int = 0

    def __post_init__(self) -> None:
        for name in ("acr", "rf", "lpc", "spdr", "ac"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.gb.value < 0 or self.acd < 0:
            raise ValueError("gb and acd must be non-negative")
        if self.is_level not in (0, 1, 2, 3):
            raise ValueError(f"is_level must be 0..3, got {self.is_level}")

    def to_dict(self) -> dict[str, Any]:
        ratios = {k: getattr(self, k) for k in ("acr", "rf", "lpc", "spdr", "ac", "acd")}
        d: dict[str, Any] = {k: format_ratio(v) for k, v in ratios.items()}
        d["exact"] = {k: f"{v.numerator}/{v.denominator}" for k, v in ratios.items()}
        d["gb"] = self.gb.to_dict()
        d["is_level"] = self.is_level
        d["vc_micros"] = self.vc
        d["adl_micros"] = dict(sorted(self.adl.items()))
        d["unattested_entries"] = self.unattested_entries
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricsBundle":
        exact = d.get("exact", {})
        def ratio(k: str) -> Fraction:
            return Fraction(exact[k]) if k in exact else parse_ratio(d[k])
        return cls(
            acr=ratio("acr"), rf=ratio("rf"), lpc=ratio("lpc"), gb=GapBurden.from_dict(d["gb"]),
            spdr=ratio("spdr"), ac=ratio("ac"), acd=ratio("acd"), is_level=int(d["is_level"]),
            vc=int(d.get("vc_micros", 0)), adl=dict(d.get("adl_micros", {})),
            unattested_entries=int(d.get("unattested_entries", 0)),
        )

    def table_rows(self) -> list[tuple[str, str]]:
        rows = [
            ("ACR", format_ratio(self.acr)),
            ("RF", format_ratio(self.rf)),
            ("LPC", format_ratio(self.lpc)),
            ("GB", f"{self.gb.value} ({self.gb.unit.value})"),
            ("SPDR", format_ratio(self.spdr)),
            ("ADL", ", ".join(f"{k}={v}us" for k, v in sorted(self.adl.items())) or "undefined"),
            ("AC", format_ratio(self.ac)),
            ("ACD", format_ratio(self.acd)),
            ("IS", str(self.is_level)),
            ("VC", f"{self.vc}us"),
        ]
        return rows


def measure(
    execution: Execution,
    record: AuditRecord,
    policies: Iterable[Any] = (),
    reqs: FieldRequirements | None = None,
    gb_unit: GBUnit = GBUnit.STEP_COUNT,
    log: Any = None,
) -> MetricsBundle:
    """Compute the full bundle.

    ``log`` is the :class:`~audita.evidence.EvidenceLog` backing the record;
    without one the record carries no verifiable integrity and IS is 0.
    """
    from .evidence import integrity_level, verify
    from .policy import adl, spdr

    policies = list(policies)
    latencies = {}
    for p in policies:
        lat = adl(p, execution, record)
        if lat is not None:
            latencies[p.policy_id] = lat
    if log is not None:
        report = verify(log)
        level, vc, unattested = integrity_level(log), report.vc, len(report.unattested)
    else:
        level, vc, unattested = 0, 0, 0
    return MetricsBundle(
        acr=acr(execution, record),
        rf=rf(execution, record, reqs),
        lpc=lpc(execution, record),
        gb=gb(execution, record, gb_unit),
        spdr=spdr(policies, record),
        ac=ac(execution, record),
        acd=acd(execution, record),
        is_level=level,
        vc=vc,
        adl=latencies,
        unattested_entries=unattested,
    )
