"""
Executions and audit records
============================

An execution is the ground truth of what an agent system did. An audit
record is what the logs kept of it. Everything else in ``audita`` compares
the two.
"""

from audita.lab import base_scenario
from audita.model import RecordEntry, AuditRecord, recovered_fields, validate_execution

sc = base_scenario()
ex = sc.execution

# %%
# Seven steps across five components. Each step carries its phase and the
# caller chain that delegated it.

for s in ex.steps:
    print(s.step_id, s.action_type.value, s.context["phase"], " <- ".join(ex.responsibility_of[s.step_id]))

print("diagnostics:", validate_execution(ex))

# %%
# A record entry keeps a subset of each step's fields. Here the shell call
# at step 3 is logged with only its timestamp and tool name.

shell = ex.step(3)
thin = RecordEntry.observing(1, [shell], shell.timestamp + 10, keep={"timestamp", "tool_name"})
print(sorted(recovered_fields(3, AuditRecord((thin,)))))

# %%
# A second entry for the same step adds fields. Recovery takes the union.

full = RecordEntry.observing(2, [shell], shell.timestamp + 20)
both = AuditRecord((thin, full))
print(len(recovered_fields(3, both)), "fields recovered from two entries")
