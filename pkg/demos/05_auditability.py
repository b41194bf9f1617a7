"""
The auditability predicate and the card
=======================================

A threshold vector turns the metric bundle into a pass or fail per
dimension. The card answers six disclosure questions with the measured
values attached.
"""

from audita.auditability import ThresholdVector, assemble_verdict, generate_card, is_auditable
from audita.lab import WITNESS_DIMENSIONS, base_scenario, dimension_witness, standard_policies

t = ThresholdVector.default()
sc = base_scenario(level=3)
print("base scenario auditable:", is_auditable(sc.bundle(), t).auditable)

# %%
# Each witness breaks exactly one dimension.

for dim in WITNESS_DIMENSIONS:
    print(f"{dim:28} fails {is_auditable(dimension_witness(dim).bundle(), t).failed_dimensions()}")

# %%
# A decidable verdict names the action, its phase context, the caller chain
# and the integrity level behind it.

v = assemble_verdict(standard_policies()[0], sc.execution, sc.record)
print(v.verdict.value, "step", v.action, v.responsibility)
print([(c.phase, c.first_step, c.last_step) for c in v.context], v.integrity)

# %%

descriptor = {
    "q1": "Every tool call and approval is logged by the gateway.",
    "q2": "Plan, act and retry phases carry phase tags.",
    "q3": "Approval and egress rules are evaluated nightly.",
    "q4": "Caller chains are stamped by the orchestrator.",
    "q5": "Entries are signed at write time.",
    "q6": "Agents refuse to run when the log sink is unreachable.",
}
print(generate_card(descriptor, sc.bundle(), t).to_markdown())
