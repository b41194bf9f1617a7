import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audita.auditability import ThresholdVector, is_auditable
from audita.evidence import EvidenceLog, verify
from audita.lab import (
    WITNESS_DIMENSIONS,
    DegradationKind,
    DegradationOp,
    GenerationSpec,
    base_scenario,
    degrade,
    dimension_witness,
    generate,
    standard_policies,
)
from audita.metrics import ac, acd, acr, gb, lpc, measure, rf, segments
from audita.model import recovered_fields, recovered_values, validate_execution
from audita.policy import PolicyVerdict, evaluate, spdr

import oracles

K = DegradationKind


class TestGenerate:
    def test_deterministic(self):
        spec = GenerationSpec(seed=42, n_steps=20, coverage_rate=0.6, field_keep_rate=0.7)
        assert generate(spec) == generate(spec)

    def test_seed_matters(self):
        assert generate(GenerationSpec(seed=1)) != generate(GenerationSpec(seed=2))

    def test_full_observation(self):
        for seed in range(20):
            ex, rec = generate(GenerationSpec(seed=seed, n_steps=15, relevance_rate=1))
            assert acr(ex, rec) == 1
            assert rf(ex, rec) == 1

    def test_no_coverage(self):
        ex, rec = generate(GenerationSpec(seed=3, relevance_rate=1, coverage_rate=0))
        assert ex.relevant_steps
        assert acr(ex, rec) == 0

    def test_valid_execution(self):
        for topology in ("chain", "star", "tree"):
            ex, _ = generate(GenerationSpec(seed=9, n_components=6, n_steps=30, topology=topology))
            assert validate_execution(ex) == []

    def test_topologies_shape_chains(self):
        star, _ = generate(GenerationSpec(seed=5, n_components=6, n_steps=30, topology="star"))
        assert all(len(c) <= 2 for c in star.responsibility_of.values())
        chain, _ = generate(GenerationSpec(seed=5, n_components=6, n_steps=30, topology="chain"))
        assert max(len(c) for c in chain.responsibility_of.values()) > 2

    def test_execution_independent_of_record_rates(self):
        a, _ = generate(GenerationSpec(seed=4, coverage_rate=1))
        b, _ = generate(GenerationSpec(seed=4, coverage_rate=0.2, field_keep_rate=0.3))
        assert a == b

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            GenerationSpec(coverage_rate=1.5)
        with pytest.raises(ValueError):
            GenerationSpec(n_steps=-1)
        with pytest.raises(ValueError):
            GenerationSpec.from_dict({"seed": 1, "colour": "red"})

    def test_spec_roundtrip(self):
        spec = GenerationSpec(seed=7, coverage_rate=0.25, topology="tree")
        assert GenerationSpec.from_dict(spec.to_dict()) == spec


class TestDegrade:
    def setup_method(self):
        self.ex, self.rec = generate(GenerationSpec(seed=11, n_steps=25, relevance_rate=1))

    def test_strip_identities(self):
        out = degrade(self.rec, DegradationOp(K.STRIP_IDENTITIES))
        assert ac(self.ex, out) == 0
        assert acr(self.ex, out) == acr(self.ex, self.rec)

    def test_strip_identities_keep_prefix(self):
        out = degrade(self.rec, DegradationOp(K.STRIP_IDENTITIES, {"keep": 1}))
        assert acd(self.ex, out) == 1

    def test_strip_phase_markers(self):
        out = degrade(self.rec, DegradationOp(K.STRIP_PHASE_MARKERS))
        assert segments(self.ex)
        assert lpc(self.ex, out) == 0
        assert acr(self.ex, out) == acr(self.ex, self.rec)

    def test_drop_fields_zero_probability(self):
        assert degrade(self.rec, DegradationOp(K.DROP_FIELDS, {"p": 0})) == self.rec

    def test_drop_entries(self):
        assert degrade(self.rec, DegradationOp(K.DROP_ENTRIES, {"p": 1})).entries == ()
        assert degrade(self.rec, DegradationOp(K.DROP_ENTRIES, {"p": 0})) == self.rec

    def test_seeded(self):
        op = DegradationOp(K.DROP_FIELDS, {"p": "0.5"})
        assert degrade(self.rec, op, 3) == degrade(self.rec, op, 3)
        assert degrade(self.rec, op, 3) != degrade(self.rec, op, 4)

    def test_redact_defaults_to_input_output(self):
        out = degrade(self.rec, DegradationOp(K.REDACT_VALUES))
        for e in out.entries:
            for k, v in e.payload.items():
                name = k.split(":", 1)[1]
                if name.startswith(("input.", "output.")):
                    assert v == "[REDACTED]"
                else:
                    assert v != "[REDACTED]"

    def test_bad_params(self):
        with pytest.raises(ValueError):
            DegradationOp(K.DROP_FIELDS, {"p": 2})
        with pytest.raises(ValueError):
            DegradationOp(K.STRIP_PHASE_MARKERS, {"p": 1})
        with pytest.raises(ValueError):
            DegradationOp(K.STRIP_IDENTITIES, {"keep": -1})

    def test_tamper_byte(self):
        log = EvidenceLog.create(2)
        log.extend(self.rec.entries)
        bad = degrade(log, DegradationOp(K.TAMPER_BYTE, {"seq": 4}), seed=1)
        assert verify(bad).first_bad_seq == 4

    def test_tamper_byte_empty_log(self):
        with pytest.raises(ValueError):
            degrade(EvidenceLog.create(2), DegradationOp(K.TAMPER_BYTE))

    def test_tamper_needs_log(self):
        with pytest.raises(TypeError):
            degrade(self.rec, DegradationOp(K.TAMPER_BYTE))


class TestRedaction:
    def setup_method(self):
        sc = base_scenario()
        self.ex, self.rec = sc.execution, sc.record

    def test_field_presence_spdr_preserved(self):
        query = standard_policies()[3]
        out = degrade(self.rec, DegradationOp(K.REDACT_VALUES))
        assert spdr([query], out) == spdr([query], self.rec) == 1
        assert evaluate(query, out).verdict is PolicyVerdict.COMPLY

    def test_field_value_verdict_flips(self):
        email = standard_policies()[2]
        out = degrade(self.rec, DegradationOp(K.REDACT_VALUES, {"fields": ["context.approval_state"]}))
        assert evaluate(email, self.rec).verdict is PolicyVerdict.COMPLY
        assert evaluate(email, out).verdict is PolicyVerdict.VIOLATE
        assert spdr([email], out) == spdr([email], self.rec)


OPS = [
    DegradationOp(K.DROP_FIELDS, {"p": "0.3"}),
    DegradationOp(K.DROP_ENTRIES, {"p": "0.3"}),
    DegradationOp(K.STRIP_IDENTITIES),
    DegradationOp(K.STRIP_IDENTITIES, {"keep": 1}),
    DegradationOp(K.STRIP_PHASE_MARKERS),
    DegradationOp(K.REDACT_VALUES),
    DegradationOp(K.REDACT_VALUES, {"fields": ["context.caller_chain"]}),
]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(OPS))
def test_degradation_never_improves(seed, op):
    ex, rec = generate(GenerationSpec(seed=seed, n_steps=12, field_keep_rate=0.8, coverage_rate=0.9))
    out = degrade(rec, op, seed)
    assert acr(ex, out) <= acr(ex, rec)
    assert lpc(ex, out) <= lpc(ex, rec)
    assert ac(ex, out) <= ac(ex, rec)
    assert acd(ex, out) <= acd(ex, rec)
    assert gb(ex, out).value >= gb(ex, rec).value
    if op.kind is not K.DROP_ENTRIES and op.kind is not K.DROP_FIELDS:
        # coverage-preserving ops can only thin each covered step
        assert rf(ex, out) <= rf(ex, rec)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32))
def test_dropped_field_never_recovered(seed):
    rng = random.Random(seed)
    ex = oracles.random_execution(rng)
    rec = oracles.random_record(rng, ex, keep=0.8)
    f = rng.choice(["timestamp", "context.phase", "context.caller_chain", "tool_name", "input.arguments"])
    out = degrade(rec, DegradationOp(K.DROP_FIELDS, {"fields": [f]}), seed)
    for op in OPS:
        again = degrade(out, op, seed)
        for s in ex.steps:
            assert f not in recovered_fields(s.step_id, again)
            assert f not in recovered_values(s.step_id, again)


def test_witnesses_fail_exactly_their_dimension():
    t = ThresholdVector.default()
    assert is_auditable(base_scenario().bundle(), t).auditable
    for dim in WITNESS_DIMENSIONS:
        rep = is_auditable(dimension_witness(dim).bundle(), t)
        assert rep.failed_dimensions() == [dim], dim


def test_coverage_without_fidelity():
    ex, rec = generate(GenerationSpec(seed=2, n_steps=20, relevance_rate=1))
    thin = degrade(rec, DegradationOp(K.DROP_FIELDS, {"fields": [
        n for n in {n for e in rec.entries for ns in e.fields_present.values() for n in ns} if n != "timestamp"]}))
    assert acr(ex, thin) == 1
    assert rf(ex, thin) < 0.5


def test_scenario_bundle():
    b = base_scenario(level=3).bundle()
    assert b.is_level == 3 and b.acr == 1 and b.spdr == 1
    assert measure(base_scenario().execution, base_scenario().record).is_level == 0
