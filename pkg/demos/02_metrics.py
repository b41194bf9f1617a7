"""
Measuring a record
==================

Each metric is an exact fraction. ``format_ratio`` renders it with six
decimals for display.
"""

from audita.lab import DegradationKind, DegradationOp, GenerationSpec, base_scenario, degrade, generate
from audita.metrics import GBUnit, ac, acd, acr, format_ratio, gb, lpc, rf

sc = base_scenario()
ex, rec = sc.execution, sc.record

print("full record")
for name, fn in [("ACR", acr), ("RF", rf), ("LPC", lpc), ("AC", ac), ("ACD", acd)]:
    print(f"  {name:4} {format_ratio(fn(ex, rec))}")
print("  GB  ", gb(ex, rec).value, "steps")

# %%
# Drop every other entry. Coverage falls and the unobserved phase segments
# show up as gap burden.

half = type(rec)(rec.entries[::2], rec.integrity)
print("ACR", format_ratio(acr(ex, half)), "LPC", format_ratio(lpc(ex, half)))
print("GB ", gb(ex, half).value, "steps,", gb(ex, half, GBUnit.DURATION_MICROSECONDS).value, "us")

# %%
# Coverage without fidelity: every step has an entry, but only the
# timestamp survived.

ex2, rec2 = generate(GenerationSpec(seed=2, n_steps=20, relevance_rate=1))
names = {n for e in rec2.entries for ns in e.fields_present.values() for n in ns} - {"timestamp"}
thin = degrade(rec2, DegradationOp(DegradationKind.DROP_FIELDS, {"fields": sorted(names)}))
print("ACR", format_ratio(acr(ex2, thin)), "RF", format_ratio(rf(ex2, thin)))
