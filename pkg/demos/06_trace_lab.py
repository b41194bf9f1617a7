"""
Synthetic traces and degradations
=================================

The lab generates seeded executions and applies controlled degradations,
so the effect of each logging gap on each metric can be read off.
"""

from audita.lab import DegradationKind as K
from audita.lab import DegradationOp, GenerationSpec, degrade, generate
from audita.metrics import measure

ex, rec = generate(GenerationSpec(seed=7, n_components=6, n_steps=40, topology="tree", relevance_rate=1))
base = measure(ex, rec)

ops = [
    DegradationOp(K.DROP_ENTRIES, {"p": "0.3"}),
    DegradationOp(K.DROP_FIELDS, {"p": "0.3"}),
    DegradationOp(K.STRIP_PHASE_MARKERS),
    DegradationOp(K.STRIP_IDENTITIES, {"keep": 1}),
]

print(f"{'op':22} {'ACR':>6} {'RF':>6} {'LPC':>6} {'AC':>6} {'GB':>4}")
for op in [None, *ops]:
    b = base if op is None else measure(ex, degrade(rec, op, seed=1))
    label = "none" if op is None else op.kind.value
    print(f"{label:22} {float(b.acr):6.3f} {float(b.rf):6.3f} {float(b.lpc):6.3f} {float(b.ac):6.3f} {b.gb.value:4}")
