import random
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from audita.lab import standard_policies
from audita.model import (
    ActionType,
    AuditRecord,
    Component,
    ComponentKind,
    Execution,
    RecordEntry,
    Step,
    concat_records,
)
from audita.policy import (
    MalformedPolicyError,
    PolicyKind,
    PolicyVerdict,
    Selector,
    StructuralPolicy,
    adl,
    evaluate,
    evidence_steps,
    spdr,
)

import oracles

APPROVAL, NO_PII, EMAIL, QUERY = standard_policies()
SEC = 1_000_000


def mkstep(i, action, t=None, tool=None, inp=None, out=None, **ctx):
    ctx.setdefault("phase", "act")
    ctx.setdefault("caller_chain", ["agent"])
    return Step(i, action, t if t is not None else i * SEC, inp or {}, out or {}, ctx, True, tool)


def execution(*steps):
    comps = frozenset({Component("agent", ComponentKind.AGENT)})
    return Execution(comps, tuple(steps), {s.step_id: "act" for s in steps}, {s.step_id: ("agent",) for s in steps})


def record_of(steps, keep=None, times=None):
    return AuditRecord(tuple(
        RecordEntry.observing(k, [s], (times or {}).get(s.step_id, s.timestamp), keep)
        for k, s in enumerate(steps, start=1)))


approval_step = mkstep(1, ActionType.APPROVAL, out={"decision": "granted"})
shell_step = mkstep(2, ActionType.TOOL_CALL, tool="shell", inp={"arguments": "ls"})


class TestEvidenceSteps:
    def test_trigger_and_prior(self):
        rec = record_of([approval_step, shell_step])
        assert evidence_steps(APPROVAL, rec) == {1, 2}

    def test_nothing_matches(self):
        rec = record_of([mkstep(1, ActionType.FILE_OP)])
        assert evidence_steps(APPROVAL, rec) == frozenset()

    def test_forbid_sequence_collects_all(self):
        steps = [mkstep(1, ActionType.DB_QUERY, data_class="pii"),
                 mkstep(2, ActionType.NETWORK_CALL, data_class="public"),
                 mkstep(3, ActionType.NETWORK_CALL, data_class="public")]
        rec = record_of(steps)
        assert evidence_steps(NO_PII, rec) == {1, 2, 3}
        assert oracles.oracle_evaluate(NO_PII, rec)[1] == {1, 2, 3}


class TestEvaluate:
    def test_stripped_approval_field_is_undecidable(self):
        rec = record_of([approval_step, shell_step])
        stripped = oracles.without_field(rec, evidence_steps(APPROVAL, rec), "output.decision")
        out = evaluate(APPROVAL, stripped)
        assert out.verdict is PolicyVerdict.UNDECIDABLE
        assert "output.decision" in out.missing_fields

    def test_prior_approval_complies(self):
        rec = record_of([approval_step, shell_step])
        assert oracles.oracle_evaluate(APPROVAL, rec)[0] == "comply"
        assert evaluate(APPROVAL, rec).verdict is PolicyVerdict.COMPLY

    def test_egress_after_pii_without_flag_violates(self):
        steps = [mkstep(1, ActionType.DB_QUERY, data_class="pii"),
                 mkstep(2, ActionType.NETWORK_CALL, data_class="public", sanitized=False)]
        rec = record_of(steps)
        assert oracles.oracle_evaluate(NO_PII, rec)[0] == "violate"
        out = evaluate(NO_PII, rec)
        assert out.verdict is PolicyVerdict.VIOLATE
        assert out.violating_step == 2

    def test_vacuous_compliance(self):
        out = evaluate(APPROVAL, AuditRecord())
        assert out.verdict is PolicyVerdict.COMPLY
        assert out.evidence_steps == frozenset()

    def test_earliest_violation_reported(self):
        steps = [mkstep(1, ActionType.TOOL_CALL, tool="shell"), mkstep(2, ActionType.TOOL_CALL, tool="shell"),
                 mkstep(3, ActionType.APPROVAL, out={"decision": "granted"})]
        assert evaluate(APPROVAL, record_of(steps)).violating_step == 1

    def test_unrecorded_approval_is_undecidable(self):
        # with no approval step on record the approval fields are absent from every evidence step
        out = evaluate(APPROVAL, record_of([shell_step]))
        assert out.verdict is PolicyVerdict.UNDECIDABLE
        assert out.missing_fields == {"output.decision"}

    def test_closed_world_missing_flag(self):
        steps = [mkstep(1, ActionType.DB_QUERY, data_class="pii", sanitized=True),
                 mkstep(2, ActionType.NETWORK_CALL, data_class="x")]
        rec = record_of(steps, keep={"action_type", "context.data_class", "context.sanitized"})
        # step 2 carries no sanitized flag at all, yet the field is recovered for step 1
        assert evaluate(NO_PII, rec).verdict is PolicyVerdict.VIOLATE

    def test_field_value_ops(self):
        base = mkstep(1, ActionType.TOOL_CALL, tool="send_email", approval_state="granted")
        rec = record_of([base])
        for op, value, expect in [("eq", "granted", "comply"), ("ne", "granted", "violate"),
                                  ("in", ["granted", "x"], "comply"), ("not_in", ["granted"], "violate")]:
            p = StructuralPolicy("p", PolicyKind.FIELD_VALUE, EMAIL.trigger,
                                 {"field": "context.approval_state", "op": op, "value": value})
            assert evaluate(p, rec).verdict.value == expect

    def test_field_presence_empty_value_violates(self):
        rec = record_of([mkstep(1, ActionType.DB_QUERY, inp={"query": ""})])
        assert evaluate(QUERY, rec).verdict is PolicyVerdict.VIOLATE

    def test_outcome_invariants(self):
        rng = random.Random(0)
        for _ in range(200):
            ex = oracles.random_execution(rng)
            rec = oracles.random_record(rng, ex)
            out = evaluate(oracles.random_policy(rng), rec)
            if out.verdict is PolicyVerdict.UNDECIDABLE:
                assert out.missing_fields
            if out.verdict is PolicyVerdict.VIOLATE:
                assert out.violating_step is not None


class TestMalformed:
    def test_required_fields_must_cover_clauses(self):
        p = StructuralPolicy("p", PolicyKind.FIELD_PRESENCE, Selector(ActionType.DB_QUERY),
                             {"fields": ["input.query"]}, required_fields={"action_type"})
        with pytest.raises(MalformedPolicyError):
            evaluate(p, AuditRecord())

    def test_unknown_kind(self):
        with pytest.raises(MalformedPolicyError):
            StructuralPolicy.from_dict({"policy_id": "x", "kind": "semantic", "trigger": {}, "requirement": {}})

    def test_wrong_clause_keys(self):
        with pytest.raises(MalformedPolicyError):
            StructuralPolicy("p", PolicyKind.REQUIRE_PRIOR_EVENT, Selector(), {"after": Selector()})

    def test_dict_roundtrip(self):
        for p in standard_policies():
            assert StructuralPolicy.from_dict(p.to_dict()) == p


class TestSPDR:
    def test_empty_set(self):
        assert spdr([], AuditRecord()) == 1

    def test_two_of_three(self):
        steps = [approval_step, shell_step, mkstep(3, ActionType.DB_QUERY, inp={"query": "q"}),
                 mkstep(4, ActionType.TOOL_CALL, tool="send_email", approval_state="granted")]
        rec = record_of(steps)
        rec = oracles.without_field(rec, {4}, "context.approval_state")
        policies = [APPROVAL, EMAIL, QUERY]
        assert oracles.spdr(policies, rec) == Fraction(2, 3)
        assert spdr(policies, rec) == Fraction(2, 3)

    def test_everything_present(self):
        tags = {"data_class": "public", "sanitized": True, "approval_state": "granted"}
        steps = [mkstep(1, ActionType.APPROVAL, out={"decision": "granted"}, **tags),
                 mkstep(2, ActionType.TOOL_CALL, tool="shell", **tags),
                 mkstep(3, ActionType.DB_QUERY, inp={"query": "q"}, **tags)]
        assert spdr(standard_policies(), record_of(steps)) == 1

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            spdr([APPROVAL, APPROVAL], AuditRecord())


class TestADL:
    def test_no_violation(self):
        rec = record_of([approval_step, shell_step])
        assert adl(APPROVAL, execution(approval_step, shell_step), rec) is None

    # the approval arrives after the shell call, so the violation is decidable once both are on record
    shell = mkstep(1, ActionType.TOOL_CALL, t=10 * SEC, tool="shell")
    late_ok = mkstep(2, ActionType.APPROVAL, t=12 * SEC, out={"decision": "granted"})

    def test_five_second_latency(self):
        rec = AuditRecord((RecordEntry.observing(1, [self.late_ok], 12 * SEC),
                           RecordEntry.observing(2, [self.shell], 15 * SEC)))
        assert oracles.detection_index(APPROVAL, rec) == 2
        assert adl(APPROVAL, execution(self.shell, self.late_ok), rec) == 5 * SEC

    def test_simultaneous(self):
        both = RecordEntry.observing(1, [self.shell, self.late_ok], 10 * SEC)
        assert adl(APPROVAL, execution(self.shell, self.late_ok), AuditRecord((both,))) == 0

    def test_late_field_delays_detection(self):
        rec = AuditRecord((
            RecordEntry.observing(1, [self.late_ok], 12 * SEC),
            RecordEntry.observing(2, [self.shell], 12 * SEC, keep={"action_type"}),
            RecordEntry.observing(3, [self.shell], 13 * SEC, keep={"tool_name"}),
        ))
        assert oracles.detection_index(APPROVAL, rec) == 3
        assert adl(APPROVAL, execution(self.shell, self.late_ok), rec) == 3 * SEC

    def test_against_brute_force(self):
        rng = random.Random(11)
        for i in range(150):
            ex = oracles.random_execution(rng)
            rec = oracles.random_record(rng, ex)
            pol = oracles.random_policy(rng)
            k = oracles.detection_index(pol, rec)
            got = adl(pol, ex, rec)
            if k is None:
                assert got is None
            else:
                viol = oracles.oracle_evaluate(pol, rec)[3]
                assert got == rec.entries[k - 1].record_timestamp - ex.step(viol).timestamp


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_matches_oracle(seed):
    rng = random.Random(seed)
    ex = oracles.random_execution(rng)
    rec = oracles.random_record(rng, ex)
    pol = oracles.random_policy(rng)
    verdict, ev, missing, viol = oracles.oracle_evaluate(pol, rec)
    out = evaluate(pol, rec)
    assert out.verdict.value == verdict
    assert out.evidence_steps == ev
    assert out.missing_fields == missing
    assert out.violating_step == viol


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_removing_required_field_makes_undecidable(seed):
    rng = random.Random(seed)
    ex = oracles.random_execution(rng)
    rec = oracles.random_record(rng, ex, keep=0.9)
    pol = oracles.random_policy(rng)
    out = evaluate(pol, rec)
    assume(out.decidable and out.evidence_steps and pol.required_fields)
    f = rng.choice(sorted(pol.required_fields))
    after = oracles.without_field(rec, out.evidence_steps, f)
    # the premise needs a non-empty evidence set after the deletion
    assume(evidence_steps(pol, after))
    res = evaluate(pol, after)
    assert res.verdict is PolicyVerdict.UNDECIDABLE
    assert f in res.missing_fields


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 2**32))
def test_growth_keeps_non_vacuous_verdicts_decidable(s1, s2):
    rng = random.Random(s1)
    ex = oracles.random_execution(rng)
    rec = oracles.random_record(rng, ex)
    grown = concat_records(rec, oracles.random_record(random.Random(s2), ex))
    for k in range(4):
        pol = oracles.random_policy(rng, f"p{k}")
        before = evaluate(pol, rec)
        if before.decidable and before.evidence_steps:
            assert evaluate(pol, grown).decidable


def test_vacuous_verdict_can_become_undecidable():
    """Known limit of the vacuous-compliance rule: new evidence can reopen a policy."""
    shell = mkstep(1, ActionType.TOOL_CALL, tool="shell")
    assert evaluate(APPROVAL, AuditRecord()).decidable
    partial = record_of([shell], keep={"action_type"})
    assert not evaluate(APPROVAL, partial).decidable


def test_deterministic():
    rng = random.Random(5)
    ex = oracles.random_execution(rng)
    rec = oracles.random_record(rng, ex)
    for p in standard_policies():
        assert evaluate(p, rec) == evaluate(p, rec)
