"""
Checking structural policies
============================

A policy is decidable on a record only when the fields it needs were
kept. Otherwise the verdict is ``undecidable``, never a guess.
"""

from dataclasses import replace

from audita.lab import DegradationKind, DegradationOp, base_scenario, degrade, standard_policies
from audita.model import AuditRecord, RecordEntry
from audita.policy import adl, evaluate, spdr

sc = base_scenario()
ex, rec = sc.execution, sc.record
policies = standard_policies()

for p in policies:
    out = evaluate(p, rec)
    print(f"{p.policy_id:24} {out.verdict.value}")
print("SPDR", spdr(policies, rec))

# %%
# Remove approval states from the log. Rules that look at them can no
# longer be checked.

blind = degrade(rec, DegradationOp(DegradationKind.DROP_FIELDS, {"fields": ["context.approval_state"]}))
for p in policies:
    out = evaluate(p, blind)
    print(f"{p.policy_id:24} {out.verdict.value:12} {sorted(out.missing_fields)}")
print("SPDR", spdr(policies, blind))

# %%
# Replace the granted approval with a denial. The shell call becomes a
# violation, and the detection latency is the time from the action to the
# first entry that proves it.

approval = replace(ex.step(2), output={"decision": "denied"})
entries = list(rec.entries)
entries[1] = RecordEntry.observing(2, [approval], entries[1].record_timestamp)
denied = AuditRecord(tuple(entries), rec.integrity)
out = evaluate(policies[0], denied)
print(out.verdict.value, "at step", out.violating_step, "ADL", adl(policies[0], ex, denied), "us")
