"""Execution and audit-record data model.

An :class:`Execution` is the ground truth of one agent run: the participating
components, the ordered steps, a phase label per step and a responsibility
chain per step. An :class:`AuditRecord` is what survived into the log: a
sequence of :class:`RecordEntry` objects, each a partial observation of one or
more steps, plus an :class:`IntegrityDescriptor`.

Field names are flat strings. A step exposes ``action_type``, ``timestamp``,
``tool_name`` (when set) and one name per key of its input, output and context
maps, prefixed ``input.``, ``output.`` and ``context.``.

All types are frozen value objects; the mappings they hold must not be
mutated after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

__all__ = [
    "ActionType",
    "AuditRecord",
    "Component",
    "ComponentKind",
    "Diagnostic",
    "Execution",
    "FieldRequirements",
    "IntegrityDescriptor",
    "RecordEntry",
    "Step",
    "concat_records",
    "payload_key",
    "recovered_fields",
    "recovered_observations",
    "recovered_values",
    "recorded_steps",
    "step_fields",
    "validate_execution",
]


class ComponentKind(str, Enum):
    AGENT = "agent"
    TOOL = "tool"
    SKILL = "skill"
    SERVICE = "service"
    HUMAN = "human"


class ActionType(str, Enum):
    TOOL_CALL = "tool_call"
    FILE_OP = "file_op"
    NETWORK_CALL = "network_call"
    DB_QUERY = "db_query"
    MESSAGE_SEND = "message_send"
    APPROVAL = "approval"
    DELEGATION = "delegation"
    RETRY = "retry"
    FALLBACK = "fallback"
    ESCALATION = "escalation"


PHASE_FIELD = "context.phase"
CHAIN_FIELD = "context.caller_chain"


@dataclass(frozen=True)
class Component:
    id: str
    kind: ComponentKind

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Component":
        return cls(id=d["id"], kind=ComponentKind(d["kind"]))


@dataclass(frozen=True)
class Step:
    """One execution step.

    ``timestamp`` is integer microseconds since the epoch. ``context`` should
    carry a ``phase`` key equal to the execution's phase assignment; it may
    also carry ``caller_chain`` (ordered component ids, immediate executor
    first), ``approval_state`` and data-flow tags. Phase boundary markers are
    ordinary steps whose context holds ``phase_boundary: "enter" | "exit"``.
    """

    step_id: int
    action_type: ActionType
    timestamp: int
    input: Mapping[str, Any] = field(default_factory=dict)
    output: Mapping[str, Any] = field(default_factory=dict)
    context: Mapping[str, Any] = field(default_factory=dict)
    policy_relevant: bool = False
    tool_name: str | None = None

    def __post_init__(self) -> None:
        if self.step_id < 1:
            raise ValueError(f"step_id must be >= 1, got {self.step_id}")
        if not isinstance(self.action_type, ActionType):
            object.__setattr__(self, "action_type", ActionType(self.action_type))

    def to_dict(self) -> dict[str, Any]:
        d = {
            "step_id": self.step_id,
            "action_type": self.action_type.value,
            "timestamp": self.timestamp,
            "input": dict(self.input),
            "output": dict(self.output),
            "context": dict(self.context),
            "policy_relevant": self.policy_relevant,
        }
        if self.tool_name is not None:
            d["tool_name"] = self.tool_name
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Step":
        return cls(
            step_id=d["step_id"],
            action_type=ActionType(d["action_type"]),
            timestamp=d["timestamp"],
            input=dict(d.get("input", {})),
            output=dict(d.get("output", {})),
            context=dict(d.get("context", {})),
            policy_relevant=bool(d.get("policy_relevant", False)),
            tool_name=d.get("tool_name"),
        )


def step_fields(step: Step) -> dict[str, Any]:
    """Flatten a step into its field-name -> value map."""
    out: dict[str, Any] = {"action_type": step.action_type.value, "timestamp": step.timestamp}
    if step.tool_name is not None:
        out["tool_name"] = step.tool_name
    for prefix, mapping in (("input", step.input), ("output", step.output), ("context", step.context)):
        for key, value in mapping.items():
            out[f"{prefix}.{key}"] = value
    return out


@dataclass(frozen=True)
class Execution:
    components: frozenset[Component]
    steps: tuple[Step, ...]
    phase_of: Mapping[int, str]
    responsibility_of: Mapping[int, tuple[str, ...]]
    interaction_graph: frozenset[tuple[str, str]] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", frozenset(self.components))
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(
            self, "responsibility_of", {k: tuple(v) for k, v in self.responsibility_of.items()}
        )
        if self.interaction_graph is not None:
            object.__setattr__(
                self, "interaction_graph", frozenset(tuple(e) for e in self.interaction_graph)
            )

    @property
    def relevant_steps(self) -> tuple[Step, ...]:
        return tuple(s for s in self.steps if s.policy_relevant)

    def step(self, step_id: int) -> Step:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)

    def manifest(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "components": [c.to_dict() for c in sorted(self.components, key=lambda c: c.id)],
            "phase_of": {str(k): v for k, v in self.phase_of.items()},
            "responsibility_of": {str(k): list(v) for k, v in self.responsibility_of.items()},
        }
        if self.interaction_graph is not None:
            d["interaction_graph"] = sorted([list(e) for e in self.interaction_graph])
        return d

    @classmethod
    def from_manifest(cls, manifest: Mapping[str, Any], steps: Iterable[Step]) -> "Execution":
        graph = manifest.get("interaction_graph")
        return cls(
            components=frozenset(Component.from_dict(c) for c in manifest["components"]),
            steps=tuple(steps),
            phase_of={int(k): v for k, v in manifest["phase_of"].items()},
            responsibility_of={int(k): tuple(v) for k, v in manifest["responsibility_of"].items()},
            interaction_graph=None if graph is None else frozenset(tuple(e) for e in graph),
        )


def payload_key(step_id: int, field_name: str) -> str:
    """Step-scoped payload key for a preserved field value."""
    return f"{step_id}:{field_name}"


@dataclass(frozen=True)
class RecordEntry:
    entry_id: int
    observes: frozenset[int]
    fields_present: Mapping[int, frozenset[str]]
    payload: Mapping[str, Any]
    record_timestamp: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "observes", frozenset(self.observes))
        object.__setattr__(
            self, "fields_present", {k: frozenset(v) for k, v in self.fields_present.items()}
        )
        extra = set(self.fields_present) - self.observes
        if extra:
            raise ValueError(f"entry {self.entry_id}: fields_present for unobserved steps {sorted(extra)}")
        for sid, names in self.fields_present.items():
            for name in names:
                if payload_key(sid, name) not in self.payload:
                    raise ValueError(f"entry {self.entry_id}: no payload value for {payload_key(sid, name)}")

    @classmethod
    def observing(
        cls,
        entry_id: int,
        steps: Iterable[Step],
        record_timestamp: int,
        keep: Iterable[str] | Mapping[int, Iterable[str]] | None = None,
    ) -> "RecordEntry":
        """Build an entry preserving selected fields of ``steps``.

        ``keep`` is either one set of field names applied to every step, a
        per-step mapping, or ``None`` to preserve every field.
        """
        steps = list(steps)
        fields_present: dict[int, frozenset[str]] = {}
        payload: dict[str, Any] = {}
        for s in steps:
            flat = step_fields(s)
            if keep is None:
                names = set(flat)
            elif isinstance(keep, Mapping):
                names = set(keep.get(s.step_id, ())) & set(flat)
            else:
                names = set(keep) & set(flat)
            if names:
                fields_present[s.step_id] = frozenset(names)
                for name in names:
                    payload[payload_key(s.step_id, name)] = flat[name]
        return cls(
            entry_id=entry_id,
            observes=frozenset(s.step_id for s in steps),
            fields_present=fields_present,
            payload=payload,
            record_timestamp=record_timestamp,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "entry_id": self.entry_id,
            "observes": sorted(self.observes),
            "fields_present": {str(k): sorted(v) for k, v in sorted(self.fields_present.items())},
            "payload": dict(self.payload),
            "record_timestamp": self.record_timestamp,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RecordEntry":
        return cls(
            entry_id=d["entry_id"],
            observes=frozenset(d["observes"]),
            fields_present={int(k): frozenset(v) for k, v in d["fields_present"].items()},
            payload=dict(d["payload"]),
            record_timestamp=d["record_timestamp"],
        )


@dataclass(frozen=True)
class IntegrityDescriptor:
    """Integrity mechanism of a record.

    ``attested_from`` is the first sequence number covered by the mechanism;
    entries before it were written before sealing and are unattested.
    """

    level: int = 0
    hash_algorithm: str | None = None
    signature_scheme: str | None = None
    public_key: bytes | None = None
    attested_from: int = 1

    def __post_init__(self) -> None:
        if self.level not in (0, 1, 2, 3):
            raise ValueError(f"integrity level must be 0..3, got {self.level}")
        if self.level >= 2 and self.hash_algorithm != "SHA-256":
            raise ValueError("levels 2-3 require hash_algorithm 'SHA-256'")
        if self.level == 3 and (self.signature_scheme != "Ed25519" or self.public_key is None):
            raise ValueError("level 3 requires signature_scheme 'Ed25519' and a public_key")

    def to_dict(self) -> dict[str, Any]:
        return {
            "level": self.level,
            "hash_algorithm": self.hash_algorithm,
            "signature_scheme": self.signature_scheme,
            "public_key": None if self.public_key is None else self.public_key.hex(),
            "attested_from": self.attested_from,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "IntegrityDescriptor":
        pk = d.get("public_key")
        return cls(
            level=d["level"],
            hash_algorithm=d.get("hash_algorithm"),
            signature_scheme=d.get("signature_scheme"),
            public_key=None if pk is None else bytes.fromhex(pk),
            attested_from=d.get("attested_from", 1),
        )

    def summary(self) -> str:
        return {
            0: "Level 0: none",
            1: "Level 1: append-only",
            2: "Level 2: hash-chained",
            3: "Level 3: signed, hash-chained",
        }[self.level]


@dataclass(frozen=True)
class AuditRecord:
    entries: tuple[RecordEntry, ...] = ()
    integrity: IntegrityDescriptor = field(default_factory=IntegrityDescriptor)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.entry_id for e in self.entries]
        for a, b in zip(ids, ids[1:]):
            if b <= a:
                raise ValueError(f"entry ids must be strictly increasing ({a} then {b})")

    def next_entry_id(self) -> int:
        return self.entries[-1].entry_id + 1 if self.entries else 1


def concat_records(first: AuditRecord, second: AuditRecord) -> AuditRecord:
    """Append ``second``'s entries to ``first``, renumbering ids past ``first``'s."""
    offset = first.next_entry_id() - (second.entries[0].entry_id if second.entries else 0)
    moved = [
        RecordEntry(e.entry_id + offset, e.observes, e.fields_present, e.payload, e.record_timestamp)
        for e in second.entries
    ]
    return AuditRecord(first.entries + tuple(moved), first.integrity)


@dataclass(frozen=True)
class FieldRequirements:
    """Minimal observational field set per action type."""

    table: Mapping[ActionType, frozenset[str]]

    def __post_init__(self) -> None:
        table = {ActionType(k): frozenset(v) for k, v in self.table.items()}
        for k, v in table.items():
            if not v:
                raise ValueError(f"requirement set for {k.value} is empty")
        object.__setattr__(self, "table", table)

    def __getitem__(self, action_type: ActionType) -> frozenset[str]:
        return self.table[action_type]

    def __contains__(self, action_type: object) -> bool:
        return action_type in self.table

    @classmethod
    def default(cls) -> "FieldRequirements":
        common = {"timestamp", "context.caller_chain"}
        return cls({
            ActionType.TOOL_CALL: {"tool_name", "input.arguments", "output.result"} | common,
            ActionType.FILE_OP: {"input.path", "input.mode", "output.result"} | common,
            ActionType.NETWORK_CALL: {"input.url", "input.method", "output.status"} | common,
            ActionType.DB_QUERY: {"input.query", "output.rows"} | common,
            ActionType.MESSAGE_SEND: {"input.recipient", "input.body"} | common,
            ActionType.APPROVAL: {"input.request", "output.decision", "context.approval_state"} | common,
            ActionType.DELEGATION: {"input.delegate", "input.task"} | common,
            ActionType.RETRY: {"input.reason", "context.phase"} | common,
            ActionType.FALLBACK: {"input.reason", "context.phase"} | common,
            ActionType.ESCALATION: {"input.reason", "context.phase"} | common,
        })

    def to_dict(self) -> dict[str, list[str]]:
        return {k.value: sorted(v) for k, v in self.table.items()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Iterable[str]]) -> "FieldRequirements":
        return cls({ActionType(k): frozenset(v) for k, v in d.items()})


def recovered_fields(step_id: int, record: AuditRecord) -> frozenset[str]:
    """Fields about ``step_id`` recoverable from ``record``.

    The union of ``fields_present[step_id]`` over every entry observing the
    step; empty when no entry observes it.
    """
    out: set[str] = set()
    for entry in record.entries:
        if step_id in entry.observes:
            out |= entry.fields_present.get(step_id, frozenset())
    return frozenset(out)


def recovered_values(step_id: int, record: AuditRecord) -> dict[str, Any]:
    """Recovered field values for a step; the earliest entry wins on conflict."""
    out: dict[str, Any] = {}
    for entry in record.entries:
        for name in entry.fields_present.get(step_id, ()):
            out.setdefault(name, entry.payload[payload_key(step_id, name)])
    return out


def recovered_observations(step_id: int, name: str, record: AuditRecord) -> list[Any]:
    """Every preserved value of one field of one step, in entry order."""
    return [
        entry.payload[payload_key(step_id, name)]
        for entry in record.entries
        if name in entry.fields_present.get(step_id, ())
    ]


def recorded_steps(record: AuditRecord) -> list[int]:
    """Step ids with a non-empty recovered field set, ascending."""
    ids: set[int] = set()
    for entry in record.entries:
        ids.update(sid for sid, names in entry.fields_present.items() if names)
    return sorted(ids)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    step_id: int | None = None
    component_id: str | None = None


def validate_execution(execution: Execution) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    ids = [c.id for c in sorted(execution.components, key=lambda c: (c.id, c.kind.value))]
    known = set(ids)
    seen: set[str] = set()
    for cid in ids:
        if not cid:
            diags.append(Diagnostic("empty-component-id", "component id is empty", component_id=cid))
        elif cid in seen:
            diags.append(Diagnostic("duplicate-component-id", f"component id {cid!r} appears twice", component_id=cid))
        seen.add(cid)

    prev = None
    step_ids: set[int] = set()
    for step in execution.steps:
        if prev is not None and step.step_id <= prev.step_id:
            diags.append(Diagnostic(
                "step-order", f"step {step.step_id} does not follow step {prev.step_id}", step_id=step.step_id))
        if prev is not None and step.timestamp < prev.timestamp:
            diags.append(Diagnostic(
                "timestamp-order",
                f"step {step.step_id} timestamp {step.timestamp} precedes step {prev.step_id} ({prev.timestamp})",
                step_id=step.step_id))
        step_ids.add(step.step_id)
        prev = step

    for step in execution.steps:
        if step.step_id not in execution.phase_of:
            diags.append(Diagnostic("phase-missing", f"step {step.step_id} has no phase label", step_id=step.step_id))
        elif "phase" in step.context and step.context["phase"] != execution.phase_of[step.step_id]:
            diags.append(Diagnostic(
                "phase-mismatch",
                f"step {step.step_id} context phase {step.context['phase']!r} != "
                f"assigned phase {execution.phase_of[step.step_id]!r}",
                step_id=step.step_id))
        elif "phase" not in step.context:
            diags.append(Diagnostic(
                "phase-context-missing", f"step {step.step_id} context lacks 'phase'", step_id=step.step_id))
        chain = execution.responsibility_of.get(step.step_id, ())
        if step.policy_relevant and not chain:
            diags.append(Diagnostic(
                "chain-empty", f"policy-relevant step {step.step_id} has no responsibility chain",
                step_id=step.step_id))

    for sid in sorted(set(execution.phase_of) - step_ids):
        diags.append(Diagnostic("phase-unknown-step", f"phase label for unknown step {sid}", step_id=sid))

    for sid in sorted(execution.responsibility_of):
        for cid in execution.responsibility_of[sid]:
            if cid not in known:
                diags.append(Diagnostic(
                    "unknown-component", f"step {sid} chain references unknown component {cid!r}",
                    step_id=sid, component_id=cid))
    for u, v in sorted(execution.interaction_graph or ()):
        for cid in (u, v):
            if cid not in known:
                diags.append(Diagnostic(
                    "unknown-component", f"interaction edge ({u!r}, {v!r}) references unknown component {cid!r}",
                    component_id=cid))
    return diags
