"""Structural policies with three-valued evaluation.

A policy is evaluated against an audit record alone and yields ``comply``,
``violate`` or ``undecidable``. Four structural kinds are supported:

``require_prior_event``
    every step matching ``trigger`` must be preceded (by step order) by a
    step matching ``requirement["prior"]``.
``forbid_sequence``
    no step matching ``trigger`` may follow a step matching
    ``requirement["after"]`` unless the trigger step's
    ``requirement["unless"]`` flag is ``true``.
``field_presence``
    every trigger step must carry a non-empty value for each field in
    ``requirement["fields"]``.
``field_value``
    every trigger step's ``requirement["field"]`` must satisfy
    ``requirement["op"]`` (``eq``, ``ne``, ``in``, ``not_in``) against
    ``requirement["value"]``.

Evaluation proceeds in three stages.

1. *Evidence steps* are the recorded steps whose recovered action type does
   not contradict the action type of at least one of the policy's selectors
   (a selector without an action type admits every step). If there are none
   the policy holds vacuously.
2. The *field gate* looks at the evidence steps whose action type is known
   to fit a selector. Every required field must be recovered on one of them;
   otherwise the policy is undecidable. In particular, a required field
   absent from every evidence step always yields ``undecidable``.
3. The kind's rule runs over recovered values under a closed-world reading:
   compliance must be positively evidenced, so a missing approval step,
   sanitization flag or field value counts against the trigger step. Only
   steps whose recovered values satisfy a selector outright take part.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .model import ActionType, AuditRecord, Execution, RecordEntry, payload_key

__all__ = [
    "MalformedPolicyError",
    "PolicyKind",
    "PolicyOutcome",
    "PolicyVerdict",
    "Selector",
    "StructuralPolicy",
    "adl",
    "evaluate",
    "evidence_steps",
    "spdr",
]

_MISSING = object()


class MalformedPolicyError(ValueError):
    pass


class PolicyKind(str, Enum):
    REQUIRE_PRIOR_EVENT = "require_prior_event"
    FORBID_SEQUENCE = "forbid_sequence"
    FIELD_PRESENCE = "field_presence"
    FIELD_VALUE = "field_value"


class PolicyVerdict(str, Enum):
    COMPLY = "comply"
    VIOLATE = "violate"
    UNDECIDABLE = "undecidable"


@dataclass(frozen=True)
class Selector:
    """Matches steps by action type and exact field values."""

    action_type: ActionType | None = None
    where: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.action_type is not None and not isinstance(self.action_type, ActionType):
            object.__setattr__(self, "action_type", ActionType(self.action_type))
        object.__setattr__(self, "where", dict(self.where))

    def _conditions(self) -> dict[str, Any]:
        cond = dict(self.where)
        if self.action_type is not None:
            cond["action_type"] = self.action_type.value
        return cond

    @property
    def fields(self) -> frozenset[str]:
        return frozenset(self._conditions())

    def definitely(self, values: Mapping[str, Any]) -> bool:
        return all(values.get(k, _MISSING) == v for k, v in self._conditions().items())

    def admits(self, values: Mapping[str, Any]) -> bool:
        """The step's action type, if recovered, fits this selector."""
        return self.action_type is None or values.get("action_type", self.action_type.value) == self.action_type.value

    def scopes(self, values: Mapping[str, Any]) -> bool:
        """The step's action type is recovered and fits this selector."""
        return self.action_type is None or values.get("action_type", _MISSING) == self.action_type.value

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"where": dict(self.where)}
        if self.action_type is not None:
            d["action_type"] = self.action_type.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Selector":
        at = d.get("action_type")
        return cls(None if at is None else ActionType(at), dict(d.get("where", {})))


_OPS = {"eq", "ne", "in", "not_in"}


@dataclass(frozen=True)
class StructuralPolicy:
    policy_id: str
    kind: PolicyKind
    trigger: Selector
    requirement: Mapping[str, Any] = field(default_factory=dict)
    required_fields: frozenset[str] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        req = dict(self.requirement)
        for key in ("prior", "after"):
            if key in req and not isinstance(req[key], Selector):
                req[key] = Selector.from_dict(req[key])
        object.__setattr__(self, "requirement", req)
        if self.required_fields is None:
            object.__setattr__(self, "required_fields", self.referenced_fields())
        else:
            object.__setattr__(self, "required_fields", frozenset(self.required_fields))

    def selectors(self) -> tuple[Selector, ...]:
        req = self.requirement
        if self.kind is PolicyKind.REQUIRE_PRIOR_EVENT:
            return (self.trigger, req["prior"])
        if self.kind is PolicyKind.FORBID_SEQUENCE:
            return (self.trigger, req["after"])
        return (self.trigger,)

    def referenced_fields(self) -> frozenset[str]:
        self._check_clauses()
        out = set(self.trigger.fields)
        req = self.requirement
        if self.kind is PolicyKind.REQUIRE_PRIOR_EVENT:
            out |= req["prior"].fields
        elif self.kind is PolicyKind.FORBID_SEQUENCE:
            out |= req["after"].fields | {req["unless"]}
        elif self.kind is PolicyKind.FIELD_PRESENCE:
            out |= set(req["fields"])
        else:
            out.add(req["field"])
        return frozenset(out)

    def _check_clauses(self) -> None:
        req = self.requirement
        kind = self.kind
        if kind is PolicyKind.REQUIRE_PRIOR_EVENT:
            need = {"prior"}
        elif kind is PolicyKind.FORBID_SEQUENCE:
            need = {"after", "unless"}
        elif kind is PolicyKind.FIELD_PRESENCE:
            need = {"fields"}
        else:
            need = {"field", "op", "value"}
        if set(req) != need:
            raise MalformedPolicyError(
                f"policy {self.policy_id!r}: {kind.value} requirement needs keys {sorted(need)}, got {sorted(req)}")
        if kind is PolicyKind.FIELD_PRESENCE and not req["fields"]:
            raise MalformedPolicyError(f"policy {self.policy_id!r}: empty field list")
        if kind is PolicyKind.FIELD_VALUE:
            if req["op"] not in _OPS:
                raise MalformedPolicyError(f"policy {self.policy_id!r}: unknown op {req['op']!r}")
            if req["op"] in ("in", "not_in") and not isinstance(req["value"], (list, tuple)):
                raise MalformedPolicyError(f"policy {self.policy_id!r}: op {req['op']} needs a list value")

    def validate(self) -> None:
        """Raise :class:`MalformedPolicyError` unless ``required_fields`` matches the clauses."""
        ref = self.referenced_fields()
        if ref != self.required_fields:
            extra = sorted(ref - self.required_fields)
            unused = sorted(self.required_fields - ref)
            raise MalformedPolicyError(
                f"policy {self.policy_id!r}: clauses reference {extra} outside required_fields; "
                f"required_fields lists unreferenced {unused}")

    def to_dict(self) -> dict[str, Any]:
        req: dict[str, Any] = {}
        for k, v in self.requirement.items():
            req[k] = v.to_dict() if isinstance(v, Selector) else (list(v) if isinstance(v, tuple) else v)
        return {
            "policy_id": self.policy_id,
            "kind": self.kind.value,
            "trigger": self.trigger.to_dict(),
            "requirement": req,
            "required_fields": sorted(self.required_fields),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StructuralPolicy":
        try:
            kind = PolicyKind(d["kind"])
        except ValueError:
            raise MalformedPolicyError(f"unknown policy kind {d['kind']!r}") from None
        rf = d.get("required_fields")
        policy = cls(
            policy_id=d["policy_id"],
            kind=kind,
            trigger=Selector.from_dict(d["trigger"]),
            requirement=dict(d["requirement"]),
            required_fields=None if rf is None else frozenset(rf),
        )
        policy.validate()
        return policy


@dataclass(frozen=True)
class PolicyOutcome:
    verdict: PolicyVerdict
    evidence_steps: frozenset[int]
    missing_fields: frozenset[str] = frozenset()
    violating_step: int | None = None
    trigger_steps: tuple[int, ...] = ()

    @property
    def decidable(self) -> bool:
        return self.verdict is not PolicyVerdict.UNDECIDABLE

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "evidence_steps": sorted(self.evidence_steps),
            "missing_fields": sorted(self.missing_fields),
            "violating_step": self.violating_step,
            "trigger_steps": list(self.trigger_steps),
        }


def _index(entries: Sequence[RecordEntry]) -> dict[int, tuple[set[str], dict[str, Any]]]:
    idx: dict[int, tuple[set[str], dict[str, Any]]] = {}
    for entry in entries:
        for sid, names in entry.fields_present.items():
            if not names:
                continue
            got, values = idx.setdefault(sid, (set(), {}))
            got |= names
            for name in names:
                values.setdefault(name, entry.payload[payload_key(sid, name)])
    return idx


def _evidence(policy: StructuralPolicy, idx: Mapping[int, tuple[set[str], dict[str, Any]]]) -> frozenset[int]:
    sels = policy.selectors()
    return frozenset(sid for sid, (_, values) in idx.items() if any(s.admits(values) for s in sels))


def evidence_steps(policy: StructuralPolicy, record: AuditRecord) -> frozenset[int]:
    """Recorded steps whose fields could contribute to deciding ``policy``."""
    return _evidence(policy, _index(record.entries))


def _present(value: Any) -> bool:
    return value is not _MISSING and value is not None and value != "" and value != [] and value != {}


def _satisfies(value: Any, op: str, target: Any) -> bool:
    if value is _MISSING:
        return False
    if op == "eq":
        return value == target
    if op == "ne":
        return value != target
    if op == "in":
        return value in target
    return value not in target


def _first_violation(policy: StructuralPolicy, idx: Mapping[int, tuple[set[str], dict[str, Any]]],
                     triggers: list[int]) -> int | None:
    req = policy.requirement
    kind = policy.kind
    if kind is PolicyKind.REQUIRE_PRIOR_EVENT:
        priors = sorted(sid for sid, (_, v) in idx.items() if req["prior"].definitely(v))
        for t in triggers:
            if not any(p < t for p in priors):
                return t
    elif kind is PolicyKind.FORBID_SEQUENCE:
        afters = sorted(sid for sid, (_, v) in idx.items() if req["after"].definitely(v))
        for t in triggers:
            if any(a < t for a in afters) and idx[t][1].get(req["unless"], _MISSING) is not True:
                return t
    elif kind is PolicyKind.FIELD_PRESENCE:
        for t in triggers:
            values = idx[t][1]
            if not all(_present(values.get(f, _MISSING)) for f in req["fields"]):
                return t
    else:
        for t in triggers:
            if not _satisfies(idx[t][1].get(req["field"], _MISSING), req["op"], req["value"]):
                return t
    return None


def _evaluate_entries(policy: StructuralPolicy, entries: Sequence[RecordEntry]) -> PolicyOutcome:
    idx = _index(entries)
    evidence = _evidence(policy, idx)
    if not evidence:
        return PolicyOutcome(PolicyVerdict.COMPLY, evidence)
    sels = policy.selectors()
    scoped = [sid for sid in sorted(evidence) if any(s.scopes(idx[sid][1]) for s in sels)]
    covered: set[str] = set()
    for sid in scoped:
        covered |= idx[sid][0]
    missing = frozenset(policy.required_fields - covered)
    if missing:
        return PolicyOutcome(PolicyVerdict.UNDECIDABLE, evidence, missing)
    triggers = [sid for sid in scoped if policy.trigger.definitely(idx[sid][1])]
    # step order is timestamp order within an execution, ties resolved by step_id
    bad = _first_violation(policy, idx, triggers)
    if bad is None:
        return PolicyOutcome(PolicyVerdict.COMPLY, evidence, trigger_steps=tuple(triggers))
    return PolicyOutcome(PolicyVerdict.VIOLATE, evidence, violating_step=bad, trigger_steps=tuple(triggers))


def evaluate(policy: StructuralPolicy, record: AuditRecord) -> PolicyOutcome:
    policy.validate()
    return _evaluate_entries(policy, record.entries)


def spdr(policies: Iterable[StructuralPolicy], record: AuditRecord) -> Fraction:
    """Share of policies decidable from the record; 1 for an empty set."""
    policies = list(policies)
    ids = [p.policy_id for p in policies]
    if len(set(ids)) != len(ids):
        raise ValueError("policy ids must be distinct")
    if not policies:
        return Fraction(1)
    return Fraction(sum(1 for p in policies if evaluate(p, record).decidable), len(policies))


def detection_entry(policy: StructuralPolicy, record: AuditRecord) -> int | None:
    """Index of the entry after which ``violate`` is settled under append order.

    The smallest ``k`` such that every prefix of at least ``k`` entries
    evaluates to ``violate``; ``None`` when the full record does not.
    """
    policy.validate()
    entries = record.entries
    if _evaluate_entries(policy, entries).verdict is not PolicyVerdict.VIOLATE:
        return None
    k = len(entries)
    while k > 1 and _evaluate_entries(policy, entries[: k - 1]).verdict is PolicyVerdict.VIOLATE:
        k -= 1
    return k - 1


def adl(policy: StructuralPolicy, execution: Execution, record: AuditRecord) -> int | None:
    """Detection latency in microseconds for a violated policy, else ``None``."""
    outcome = evaluate(policy, record)
    if outcome.verdict is not PolicyVerdict.VIOLATE:
        return None
    k = detection_entry(policy, record)
    assert k is not None
    t_violate = execution.step(outcome.violating_step).timestamp
    return record.entries[k].record_timestamp - t_violate
