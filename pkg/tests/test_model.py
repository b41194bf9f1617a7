import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audita.canonical import CanonicalError, canonical_dumps, canonical_loads
from audita.model import (
    ActionType,
    AuditRecord,
    Component,
    ComponentKind,
    Execution,
    FieldRequirements,
    IntegrityDescriptor,
    RecordEntry,
    Step,
    concat_records,
    recovered_fields,
    validate_execution,
)

import oracles


def _exec(n=3, timestamps=None, chains=None):
    comps = frozenset({Component("agent", ComponentKind.AGENT), Component("tool", ComponentKind.TOOL)})
    timestamps = timestamps or [10 * i for i in range(1, n + 1)]
    steps, phase_of, resp = [], {}, {}
    for i, t in enumerate(timestamps, start=1):
        steps.append(Step(i, ActionType.TOOL_CALL, t, {"arguments": "a"}, {"result": "r"},
                          {"phase": "act", "caller_chain": ["tool", "agent"]}, True, "shell"))
        phase_of[i] = "act"
        resp[i] = tuple((chains or {}).get(i, ("tool", "agent")))
    return Execution(comps, tuple(steps), phase_of, resp)


def _entry(eid, sid, names):
    return RecordEntry(eid, {sid}, {sid: set(names)}, {f"{sid}:{n}": "v" for n in names}, 100 + eid)


class TestRecoveredFields:
    def test_unobserved_step_is_empty(self):
        rec = AuditRecord((_entry(1, 2, ["timestamp"]),))
        assert recovered_fields(1, rec) == frozenset()

    def test_union_over_two_entries(self):
        rec = AuditRecord((_entry(1, 1, ["tool_name"]), _entry(2, 1, ["input.arguments", "output.result"])))
        expected = oracles.fields_of(1, rec)
        assert expected == {"tool_name", "input.arguments", "output.result"}
        assert recovered_fields(1, rec) == expected

    def test_singleton(self):
        rec = AuditRecord((_entry(1, 1, ["timestamp"]),))
        assert recovered_fields(1, rec) == {"timestamp"}

    def test_observed_without_fields_contributes_nothing(self):
        e = RecordEntry(1, {1, 2}, {2: {"timestamp"}}, {"2:timestamp": 5}, 9)
        assert recovered_fields(1, AuditRecord((e,))) == frozenset()


def test_entry_rejects_fields_for_unobserved_step():
    with pytest.raises(ValueError):
        RecordEntry(1, {1}, {2: {"timestamp"}}, {"2:timestamp": 1}, 0)


def test_entry_rejects_missing_payload():
    with pytest.raises(ValueError):
        RecordEntry(1, {1}, {1: {"timestamp"}}, {}, 0)


def test_record_ids_strictly_increasing():
    with pytest.raises(ValueError):
        AuditRecord((_entry(2, 1, ["timestamp"]), _entry(2, 1, ["timestamp"])))


def test_requirements_reject_empty_set():
    with pytest.raises(ValueError):
        FieldRequirements({ActionType.TOOL_CALL: set()})


def test_default_tool_call_requirements():
    assert FieldRequirements.default()[ActionType.TOOL_CALL] == {
        "tool_name", "input.arguments", "output.result", "timestamp", "context.caller_chain"}


def test_descriptor_invariants():
    with pytest.raises(ValueError):
        IntegrityDescriptor(level=2, hash_algorithm=None)
    with pytest.raises(ValueError):
        IntegrityDescriptor(level=3, hash_algorithm="SHA-256", signature_scheme="Ed25519", public_key=None)


class TestValidateExecution:
    def test_clean_execution(self):
        assert validate_execution(_exec()) == []

    def test_timestamp_regression_names_step(self):
        diags = validate_execution(_exec(timestamps=[10, 30, 20]))
        assert len(diags) == 1
        assert diags[0].step_id == 3

    def test_unknown_component_named(self):
        diags = validate_execution(_exec(chains={2: ("tool", "ghost")}))
        assert len(diags) == 1
        assert diags[0].component_id == "ghost"

    def test_phase_mismatch(self):
        ex = _exec()
        bad = Execution(ex.components, ex.steps, {**ex.phase_of, 2: "plan"}, ex.responsibility_of)
        assert [d.code for d in validate_execution(bad)] == ["phase-mismatch"]

    def test_deterministic(self):
        ex = _exec(timestamps=[10, 5, 1], chains={1: ("x",), 3: ("y",)})
        assert validate_execution(ex) == validate_execution(ex)


def test_execution_roundtrip_via_manifest():
    ex = oracles.random_execution(random.Random(3))
    again = Execution.from_manifest(canonical_loads(canonical_dumps(ex.manifest())),
                                    [Step.from_dict(canonical_loads(canonical_dumps(s.to_dict()))) for s in ex.steps])
    assert again == ex


def test_canonical_form():
    assert canonical_dumps({"b": 1, "a": [True, None, "x"]}) == '{"a":[true,null,"x"],"b":1}'
    with pytest.raises(CanonicalError):
        canonical_dumps({"x": 0.5})
    with pytest.raises(CanonicalError):
        canonical_loads('{"x": 1.5}')


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 2**32))
def test_recovered_fields_grow_under_concat(s1, s2):
    rng = random.Random(s1)
    ex = oracles.random_execution(rng)
    a = oracles.random_record(rng, ex)
    b = oracles.random_record(random.Random(s2), ex)
    both = concat_records(a, b)
    for s in ex.steps:
        ra, rb = recovered_fields(s.step_id, a), recovered_fields(s.step_id, b)
        assert recovered_fields(s.step_id, both) == ra | rb


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_entry_dict_roundtrip(seed):
    rng = random.Random(seed)
    ex = oracles.random_execution(rng)
    rec = oracles.random_record(rng, ex)
    for e in rec.entries:
        assert RecordEntry.from_dict(canonical_loads(canonical_dumps(e.to_dict()))) == e
