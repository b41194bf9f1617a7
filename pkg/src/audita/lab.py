"""Synthetic executions, record degradation and dimension witnesses.

Everything here is deterministic in its seed. Degradations act on records
only; the ground-truth execution stays fixed so metric deltas are meaningful.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Mapping, Sequence

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from .evidence import ByteEdit, EvidenceLog, tamper
from .metrics import GBUnit, MetricsBundle, measure
from .model import (
    CHAIN_FIELD,
    PHASE_FIELD,
    ActionType,
    AuditRecord,
    Component,
    ComponentKind,
    Execution,
    FieldRequirements,
    RecordEntry,
    Step,
    payload_key,
    step_fields,
)
from .policy import PolicyKind, Selector, StructuralPolicy

__all__ = [
    "DegradationKind",
    "DegradationOp",
    "GenerationSpec",
    "Scenario",
    "Topology",
    "WITNESS_DIMENSIONS",
    "base_scenario",
    "degrade",
    "dimension_witness",
    "generate",
    "standard_policies",
]

T0 = 1_700_000_000_000_000


class Topology(str, Enum):
    CHAIN = "chain"
    STAR = "star"
    TREE = "tree"


def _prob(value: Any, name: str) -> float:
    p = float(Fraction(str(value)))
    if not 0 <= p <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return p


@dataclass(frozen=True)
class GenerationSpec:
    seed: int = 0
    n_components: int = 4
    n_steps: int = 12
    topology: Topology = Topology.CHAIN
    phase_mix: Mapping[str, int] = field(default_factory=lambda: {"plan": 1, "act": 3, "retry": 1, "approval": 1})
    relevance_rate: float = 0.7
    coverage_rate: float = 1.0
    field_keep_rate: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "topology", Topology(self.topology))
        for name in ("relevance_rate", "coverage_rate", "field_keep_rate"):
            object.__setattr__(self, name, _prob(getattr(self, name), name))
        if self.n_components < 0 or self.n_steps < 0:
            raise ValueError("counts must be non-negative")
        if self.n_steps and not self.n_components:
            raise ValueError("steps need at least one component")
        if self.n_steps and not any(w > 0 for w in self.phase_mix.values()):
            raise ValueError("phase_mix needs a positive weight")

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "n_components": self.n_components,
            "n_steps": self.n_steps,
            "topology": self.topology.value,
            "phase_mix": dict(self.phase_mix),
            "relevance_rate": repr(self.relevance_rate),
            "coverage_rate": repr(self.coverage_rate),
            "field_keep_rate": repr(self.field_keep_rate),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GenerationSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generation spec keys {sorted(unknown)}")
        return cls(**dict(d))


_KINDS = (ComponentKind.AGENT, ComponentKind.SKILL, ComponentKind.TOOL, ComponentKind.SERVICE)
_TOOLS = ("search", "send_email", "shell", "fetch")


def _parent(k: int, topology: Topology) -> int | None:
    if k == 0:
        return None
    if topology is Topology.CHAIN:
        return k - 1
    if topology is Topology.STAR:
        return 0
    return (k - 1) // 2


def _chain(k: int, ids: Sequence[str], topology: Topology) -> tuple[str, ...]:
    out = []
    node: int | None = k
    while node is not None:
        out.append(ids[node])
        node = _parent(node, topology)
    return tuple(out)


def _payload_for(action: ActionType, i: int, rng: random.Random) -> tuple[str | None, dict, dict]:
    if action is ActionType.TOOL_CALL:
        return rng.choice(_TOOLS), {"arguments": {"q": f"arg-{i}"}}, {"result": f"result-{i}"}
    if action is ActionType.FILE_OP:
        return None, {"path": f"/tmp/f{i}", "mode": rng.choice(["r", "w"])}, {"result": "ok"}
    if action is ActionType.NETWORK_CALL:
        return None, {"url": f"https://api.example/{i}", "method": rng.choice(["GET", "POST"])}, {"status": 200}
    if action is ActionType.DB_QUERY:
        return None, {"query": f"SELECT * FROM t{i}"}, {"rows": rng.randint(0, 50)}
    if action is ActionType.MESSAGE_SEND:
        return None, {"recipient": f"user{i}@example.com", "body": f"message {i}"}, {}
    if action is ActionType.APPROVAL:
        return None, {"request": f"req-{i}"}, {"decision": rng.choice(["granted", "denied"])}
    if action is ActionType.DELEGATION:
        return None, {"delegate": f"worker-{i}", "task": f"task-{i}"}, {}
    return None, {"reason": rng.choice(["timeout", "blocked", "error"])}, {}


def generate(spec: GenerationSpec) -> tuple[Execution, AuditRecord]:
    """Generate an execution and a record observing it.

    The execution depends only on the seed and the structural fields, the
    record additionally on ``coverage_rate`` and ``field_keep_rate``.
    """
    rng = random.Random(f"audita-exec:{spec.seed}")
    ids = [f"c{k}" for k in range(spec.n_components)]
    components = frozenset(
        Component(cid, ComponentKind.HUMAN if k == 0 else _KINDS[(k - 1) % len(_KINDS)])
        for k, cid in enumerate(ids)
    )
    graph = frozenset((ids[p], ids[k]) for k in range(1, len(ids)) if (p := _parent(k, spec.topology)) is not None)
    phases = [p for p, w in sorted(spec.phase_mix.items()) if w > 0]
    weights = [spec.phase_mix[p] for p in phases]
    actions = list(ActionType)

    steps: list[Step] = []
    phase_of: dict[int, str] = {}
    resp: dict[int, tuple[str, ...]] = {}
    t = T0
    phase = None
    for i in range(1, spec.n_steps + 1):
        t += rng.randint(1, 5000)
        if phase is None or rng.random() > 0.6:
            phase = rng.choices(phases, weights)[0]
        executor = rng.randrange(1, len(ids)) if len(ids) > 1 else 0
        chain = _chain(executor, ids, spec.topology)
        action = rng.choice(actions)
        tool, inp, out = _payload_for(action, i, rng)
        context = {
            "phase": phase,
            "caller_chain": list(chain),
            "approval_state": rng.choice(["granted", "none"]),
            "data_class": rng.choice(["public", "public", "pii"]),
            "sanitized": rng.random() < 0.5,
        }
        steps.append(Step(i, action, t, inp, out, context, rng.random() < spec.relevance_rate, tool))
        phase_of[i] = phase
        resp[i] = chain
    execution = Execution(components, tuple(steps), phase_of, resp, graph)

    rec_rng = random.Random(f"audita-record:{spec.seed}")
    entries = []
    for step in steps:
        observed = rec_rng.random() < spec.coverage_rate
        names = sorted(n for n in step_fields(step) if rec_rng.random() < spec.field_keep_rate)
        lag = rec_rng.randint(0, 2000)
        if observed:
            entries.append(RecordEntry.observing(len(entries) + 1, [step], step.timestamp + lag, keep=names))
    return execution, AuditRecord(tuple(entries))


def standard_policies() -> list[StructuralPolicy]:
    """One policy of each structural kind, phrased over generated traces."""
    return [
        StructuralPolicy(
            "approval-before-shell", PolicyKind.REQUIRE_PRIOR_EVENT,
            Selector(ActionType.TOOL_CALL, {"tool_name": "shell"}),
            {"prior": Selector(ActionType.APPROVAL, {"output.decision": "granted"})},
        ),
        StructuralPolicy(
            "no-pii-egress", PolicyKind.FORBID_SEQUENCE,
            Selector(ActionType.NETWORK_CALL),
            {"after": Selector(None, {"context.data_class": "pii"}), "unless": "context.sanitized"},
        ),
        StructuralPolicy(
            "email-approved", PolicyKind.FIELD_VALUE,
            Selector(ActionType.TOOL_CALL, {"tool_name": "send_email"}),
            {"field": "context.approval_state", "op": "eq", "value": "granted"},
        ),
        StructuralPolicy(
            "query-logged", PolicyKind.FIELD_PRESENCE,
            Selector(ActionType.DB_QUERY),
            {"fields": ["input.query"]},
        ),
    ]


class DegradationKind(str, Enum):
    DROP_FIELDS = "drop_fields"
    DROP_ENTRIES = "drop_entries"
    STRIP_IDENTITIES = "strip_identities"
    STRIP_PHASE_MARKERS = "strip_phase_markers"
    REDACT_VALUES = "redact_values"
    TAMPER_BYTE = "tamper_byte"


@dataclass(frozen=True)
class DegradationOp:
    """A record-level degradation.

    Parameters per kind:

    - ``drop_fields``: ``p`` (probability, default 1), ``fields`` (optional
      list restricting which names may be dropped)
    - ``drop_entries``: ``p``
    - ``strip_identities``: ``keep`` leading chain positions (default 0, which
      removes the caller-chain field)
    - ``strip_phase_markers``: none
    - ``redact_values``: ``fields`` or ``prefixes`` (default input/output),
      ``placeholder``
    - ``tamper_byte``: ``seq``, ``field``, ``offset``, ``value``; any
      omitted value is drawn from the seed
    """

    kind: DegradationKind
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DegradationKind(self.kind))
        object.__setattr__(self, "params", dict(self.params))
        p = self.params
        allowed = {
            DegradationKind.DROP_FIELDS: {"p", "fields"},
            DegradationKind.DROP_ENTRIES: {"p"},
            DegradationKind.STRIP_IDENTITIES: {"keep"},
            DegradationKind.STRIP_PHASE_MARKERS: set(),
            DegradationKind.REDACT_VALUES: {"fields", "prefixes", "placeholder"},
            DegradationKind.TAMPER_BYTE: {"seq", "field", "offset", "value"},
        }[self.kind]
        if set(p) - allowed:
            raise ValueError(f"{self.kind.value} does not accept {sorted(set(p) - allowed)}")
        if "p" in p:
            _prob(p["p"], "p")
        if "keep" in p and (not isinstance(p["keep"], int) or p["keep"] < 0):
            raise ValueError("keep must be a non-negative integer")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DegradationOp":
        return cls(DegradationKind(d["kind"]), dict(d.get("params", {})))


def _rebuild(entry: RecordEntry, fields_present: Mapping[int, set[str]], payload: Mapping[str, Any]) -> RecordEntry:
    fp = {sid: frozenset(names) for sid, names in fields_present.items() if names}
    keep_keys = {payload_key(sid, n) for sid, names in fp.items() for n in names}
    return RecordEntry(entry.entry_id, entry.observes, fp, {k: v for k, v in payload.items() if k in keep_keys},
                       entry.record_timestamp)


def _map_fields(record: AuditRecord, fn) -> AuditRecord:
    out = []
    for entry in record.entries:
        fp: dict[int, set[str]] = {}
        payload = dict(entry.payload)
        for sid in sorted(entry.fields_present):
            names = set()
            for name in sorted(entry.fields_present[sid]):
                key = payload_key(sid, name)
                keep, value = fn(entry, sid, name, payload[key])
                if keep:
                    names.add(name)
                    payload[key] = value
            fp[sid] = names
        out.append(_rebuild(entry, fp, payload))
    return AuditRecord(tuple(out), record.integrity)


def degrade(record: AuditRecord | EvidenceLog, op: DegradationOp, seed: int = 0) -> AuditRecord | EvidenceLog:
    """Apply ``op`` to a record (or, for ``tamper_byte``, an evidence log)."""
    rng = random.Random(f"audita-degrade:{op.kind.value}:{seed}")
    p = op.params
    kind = op.kind

    if kind is DegradationKind.TAMPER_BYTE:
        if not isinstance(record, EvidenceLog):
            raise TypeError("tamper_byte operates on an EvidenceLog")
        entries = record.entries
        if not entries:
            raise ValueError("cannot tamper with an empty log")
        seq = p.get("seq", rng.choice(entries).seq)
        target = next((e for e in entries if e.seq == seq), None)
        if target is None:
            raise IndexError(f"no entry with seq {seq}")
        fld = p.get("field", "payload")
        data = target.seq.to_bytes(8, "big") if fld == "seq" else getattr(target, fld)
        if data is None:
            raise ValueError(f"entry {seq} has no {fld}")
        offset = p.get("offset", rng.randrange(len(data)))
        value = p.get("value", data[offset] ^ rng.randrange(1, 256))
        return tamper(record, seq, ByteEdit(fld, offset, value))

    if isinstance(record, EvidenceLog):
        raise TypeError(f"{kind.value} operates on an AuditRecord")

    if kind is DegradationKind.DROP_ENTRIES:
        prob = _prob(p.get("p", 1), "p")
        kept = tuple(e for e in record.entries if not rng.random() < prob)
        return AuditRecord(kept, record.integrity)

    if kind is DegradationKind.DROP_FIELDS:
        prob = _prob(p.get("p", 1), "p")
        only = set(p["fields"]) if "fields" in p else None

        def drop(entry, sid, name, value):
            if only is not None and name not in only:
                return True, value
            return not rng.random() < prob, value
        return _map_fields(record, drop)

    if kind is DegradationKind.STRIP_IDENTITIES:
        keep = p.get("keep", 0)

        def strip(entry, sid, name, value):
            if name != CHAIN_FIELD:
                return True, value
            if keep == 0:
                return False, value
            return True, list(value[:keep]) if isinstance(value, (list, tuple)) else value
        return _map_fields(record, strip)

    if kind is DegradationKind.STRIP_PHASE_MARKERS:
        return _map_fields(record, lambda e, s, n, v: (n not in (PHASE_FIELD, "context.phase_boundary"), v))

    # REDACT_VALUES
    placeholder = p.get("placeholder", "[REDACTED]")
    names = set(p.get("fields", ()))
    prefixes = tuple(p.get("prefixes", () if names else ("input.", "output.")))

    def redact(entry, sid, name, value):
        if name in names or name.startswith(prefixes):
            return True, placeholder
        return True, value
    return _map_fields(record, redact)


@dataclass
class Scenario:
    """An execution, the evidence log recording it and the policies in force."""

    execution: Execution
    log: EvidenceLog
    policies: list[StructuralPolicy]
    reqs: FieldRequirements = field(default_factory=FieldRequirements.default)

    @property
    def record(self) -> AuditRecord:
        return self.log.record()

    def bundle(self, gb_unit: GBUnit = GBUnit.STEP_COUNT) -> MetricsBundle:
        return measure(self.execution, self.record, self.policies, self.reqs, gb_unit, log=self.log)


def _base_execution() -> Execution:
    human, agent, skill, tool, service = "human-0", "agent-1", "skill-2", "tool-3", "service-4"
    comps = frozenset({
        Component(human, ComponentKind.HUMAN), Component(agent, ComponentKind.AGENT),
        Component(skill, ComponentKind.SKILL), Component(tool, ComponentKind.TOOL),
        Component(service, ComponentKind.SERVICE),
    })
    chains = {
        1: (agent, human),
        2: (agent, human),
        3: (tool, skill, agent, human),
        4: (service, agent, human),
        5: (tool, skill, agent, human),
        6: (agent, human),
        7: (service, agent, human),
    }
    phases = {1: "plan", 2: "plan", 3: "act", 4: "act", 5: "act", 6: "retry", 7: "act"}
    spec = [
        (ActionType.DELEGATION, None, {"delegate": skill, "task": "triage"}, {}, "none"),
        (ActionType.APPROVAL, None, {"request": "run shell"}, {"decision": "granted"}, "granted"),
        (ActionType.TOOL_CALL, "shell", {"arguments": {"cmd": "ls"}}, {"result": "a b"}, "granted"),
        (ActionType.DB_QUERY, None, {"query": "SELECT id FROM tickets"}, {"rows": 3}, "none"),
        (ActionType.TOOL_CALL, "send_email", {"arguments": {"to": "ops"}}, {"result": "sent"}, "granted"),
        (ActionType.RETRY, None, {"reason": "timeout"}, {}, "none"),
        (ActionType.NETWORK_CALL, None, {"url": "https://api.example/x", "method": "GET"}, {"status": 200}, "none"),
    ]
    steps = []
    for i, (action, tool_name, inp, out, approval) in enumerate(spec, start=1):
        ctx = {
            "phase": phases[i],
            "caller_chain": list(chains[i]),
            "approval_state": approval,
            "data_class": "public",
            "sanitized": True,
        }
        steps.append(Step(i, action, T0 + 1_000_000 * i, inp, out, ctx, True, tool_name))
    graph = frozenset({(human, agent), (agent, skill), (skill, tool), (agent, service)})
    return Execution(comps, tuple(steps), phases, chains, graph)


def _seal(record: AuditRecord, level: int, signing_key: Ed25519PrivateKey | None = None) -> EvidenceLog:
    if level == 3 and signing_key is None:
        signing_key = Ed25519PrivateKey.generate()
    log = EvidenceLog.create(level, signing_key)
    log.extend(record.entries)
    return log


def base_scenario(level: int = 2, signing_key: Ed25519PrivateKey | None = None) -> Scenario:
    """A fully recorded seven-step execution that passes the default profile.

    At level 3 a fresh key is generated unless ``signing_key`` is given.
    """
    execution = _base_execution()
    entries = [RecordEntry.observing(i, [s], s.timestamp + 500) for i, s in enumerate(execution.steps, start=1)]
    return Scenario(execution, _seal(AuditRecord(tuple(entries)), level, signing_key), standard_policies())


WITNESS_DIMENSIONS = (
    "action_recoverability",
    "lifecycle_coverage",
    "policy_checkability",
    "responsibility_attribution",
    "evidence_integrity",
)


def dimension_witness(dimension: str) -> Scenario:
    """A scenario failing exactly ``dimension`` under the default thresholds."""
    base = base_scenario()
    record = base.record
    if dimension == "action_recoverability":
        degraded = degrade(record, DegradationOp(DegradationKind.DROP_FIELDS, {"fields": ["timestamp"]}))
    elif dimension == "lifecycle_coverage":
        degraded = degrade(record, DegradationOp(DegradationKind.STRIP_PHASE_MARKERS))
    elif dimension == "policy_checkability":
        degraded = degrade(record, DegradationOp(DegradationKind.DROP_FIELDS, {"fields": ["context.approval_state"]}))
    elif dimension == "responsibility_attribution":
        degraded = degrade(record, DegradationOp(DegradationKind.STRIP_IDENTITIES, {"keep": 1}))
    elif dimension == "evidence_integrity":
        return Scenario(base.execution, _seal(record, 1), base.policies)
    else:
        raise ValueError(f"unknown dimension {dimension!r}")
    return Scenario(base.execution, _seal(degraded, 2), base.policies)
